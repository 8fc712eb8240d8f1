import math

import numpy as np
import pytest

from lattwave.experiments import (
    FaddeevConfig,
    ScanResult,
    counterexample_growth,
    faddeev_demo,
    fit_lower_bounds,
    isomorphism_check,
    lifespan_scan,
    ode_blowup_time,
)
from lattwave.lattice import Field, make_box
from lattwave.solvers import EquationSpec, SolverConfig, blowup_reference


@pytest.mark.parametrize("p,t0", [(3, 1.0), (3, 7.5), (5, 0.4), (2.5, 2.0)])
def test_ode_time_inverts_reference(p, t0):
    ref = blowup_reference(p, t0)
    assert ode_blowup_time(ref.u0, ref.ut0, p) == pytest.approx(t0, rel=1e-9)


def test_ode_time_from_rest():
    # u'' = u^3 from (eps, 0): T* = (1/eps) int_1^inf dv / sqrt((v^4 - 1)/2)
    from scipy.integrate import quad
    c, _ = quad(lambda v: 1 / math.sqrt((v**4 - 1) / 2), 1, math.inf)
    assert ode_blowup_time(0.01, 0.0, 3) == pytest.approx(c / 0.01, rel=1e-8)
    with pytest.raises(ValueError):
        ode_blowup_time(-1, 0, 3)
    with pytest.raises(ValueError):
        ode_blowup_time(1, 0, 3, mu=-1)


def test_fit_lower_bounds():
    eps = np.array([0.1, 0.01, 0.001])
    T = 2.0 * eps ** -0.5
    fits = fit_lower_bounds(eps, T, p=3)
    assert fits["power"]["K_lower"] == pytest.approx(2.0)
    assert fits["power"]["K_lsq"] == pytest.approx(2.0)
    assert all(f["satisfied"] for f in fits.values())


def test_scan_result_grid_must_be_monotone():
    with pytest.raises(ValueError):
        ScanResult("x", "eps", [0.1, 0.2, 0.05], [])


def test_small_lifespan_scan():
    box = make_box(1, 8)
    res = lifespan_scan(EquationSpec.power(1, 3), Field.constant(box, 1.0), Field.zeros(box),
                        [0.5, 0.25, 0.125], SolverConfig(dt=0.05, t_max=200, sample_every=20))
    assert res.checks["nondecreasing"] and res.checks["power_bound"] and res.checks["ode_within_5pct"]
    assert list(res.column("status")) == ["blew-up"] * 3
    text = res.csv_text("config_hash=x")
    assert text.startswith("# config_hash=x\neps,T_star,status")


def test_lifespan_scan_censors_and_validates():
    box = make_box(1, 8)
    res = lifespan_scan(EquationSpec.power(1, 3), Field.constant(box, 1.0), Field.zeros(box),
                        [0.5, 0.01], SolverConfig(dt=0.1, t_max=20, sample_every=50))
    assert list(res.column("status")) == ["blew-up", "hit-t_max"]
    assert res.fits["power"]["points"] == 1
    with pytest.raises(ValueError):
        lifespan_scan(EquationSpec.power(1, 3), Field.constant(box, 1.0), Field.zeros(box), [],
                      SolverConfig(dt=0.1, t_max=1))
    with pytest.raises(ValueError):
        lifespan_scan(EquationSpec.power(1, 3), Field.constant(box, 1.0), Field.zeros(box), [0.1, 0.2],
                      SolverConfig(dt=0.1, t_max=1))


def test_lifespan_scan_parallel_is_identical():
    box = make_box(1, 8)
    args = (EquationSpec.power(1, 3), Field.constant(box, 1.0), Field.zeros(box), [0.5, 0.25, 0.125],
            SolverConfig(dt=0.05, t_max=100, sample_every=20))
    a = lifespan_scan(*args, jobs=1)
    b = lifespan_scan(*args, jobs=3)
    assert a.csv_text() == b.csv_text() and a.ndjson_text() == b.ndjson_text()


@pytest.mark.parametrize("d", [1, 2])
def test_counterexample_dichotomy(d):
    res = counterexample_growth([16, 32, 64, 128], d=d)
    assert res.ok
    strong = res.column("strong_l11")
    # roughly logarithmic: increments settle near (2/pi) log 2 per doubling
    assert np.diff(strong)[-1] == pytest.approx(2 / math.pi * math.log(2), rel=0.05)


def test_counterexample_grid_validation():
    with pytest.raises(ValueError):
        counterexample_growth([16, 24])
    with pytest.raises(ValueError):
        counterexample_growth([])


def test_isomorphism_report():
    rep = isomorphism_check(random_seed=3, trials=50, L=16, d=1)
    assert rep.ok and len(rep.ratios) == 50
    assert rep.lower <= rep.min <= rep.max <= rep.upper
    rep2 = isomorphism_check(random_seed=3, trials=20, L=8, d=2)
    assert rep2.ok


def test_faddeev_zero_data():
    traj = faddeev_demo(FaddeevConfig(amplitude=0.0))
    assert traj.info["a_max"] == 0 and traj.blowup is None


def test_faddeev_small_data_residual():
    traj = faddeev_demo(FaddeevConfig(amplitude=1e-2, t_max=1.0, dt=0.01))
    assert traj.blowup is None
    assert traj.info["residual"] < 1e-6
    assert traj.info["sup_C"][-1] < 1e-10


def test_faddeev_halved_data_lives_longer():
    w = [faddeev_demo(FaddeevConfig(profile="constant", amplitude=a, t_max=10)).info["existence_window"]
         for a in (1.0, 0.5, 0.25)]
    assert w[0] <= w[1] <= w[2]
    assert w == pytest.approx([1.0, 2.0, 4.0], rel=1e-3)


def test_faddeev_config_validation():
    with pytest.raises(ValueError):
        FaddeevConfig(profile="spiky")
