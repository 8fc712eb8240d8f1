import math

import numpy as np
import pytest

from lattwave.energy import estimate_rhs_implicit, fit_implicit_exponent, persistence_bound
from lattwave.lattice import Field, WaveState, delta_field, make_box
from lattwave.solvers import (
    BlowupConfig,
    DiagonalMetric,
    EquationSpec,
    Nonlinearity,
    PicardConfig,
    PicardNonConvergence,
    SolverConfig,
    blowup_reference,
    coefficient_sup,
    evolve,
    exact_linear_step,
    exponential_duhamel_step,
    lipschitz_dependence_probe,
    picard_residual,
    picard_solve,
    read_checkpoint,
    rk4_stability_bound,
    rk4_step,
    spec_hash,
    write_checkpoint,
)
from lattwave.spectral import k_symbol

from conftest import random_field


def gaussian(box, width=2.0, norm=1.0):
    v = np.exp(-box.norm_sq / (2 * width**2))
    return Field(box, norm * v / np.linalg.norm(v))


def mode(box, n):
    return Field(box, np.exp(2j * np.pi * n * box.coord_grids[0] / box.L))


# -- configuration ----------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        EquationSpec("elliptic")
    with pytest.raises(ValueError):
        EquationSpec("linear", nonlinearity=Nonlinearity("power", mu=1, p=3))
    with pytest.raises(ValueError):
        EquationSpec("semilinear", metric=DiagonalMetric())
    with pytest.raises(ValueError):
        Nonlinearity("power", mu=1, p=1)
    with pytest.raises(ValueError):
        Nonlinearity("power", mu=0.5, p=3)
    with pytest.raises(ValueError):
        Nonlinearity("custom")


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0, t_max=1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_max=1, method="euler")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_max=1, k=2)
    with pytest.raises(ValueError):
        BlowupConfig(action="explode")


def test_spec_hash_is_stable_and_discriminating():
    a = EquationSpec.power(1, 3)
    assert spec_hash(a) == spec_hash(EquationSpec.power(1, 3))
    assert spec_hash(a) != spec_hash(EquationSpec.power(-1, 3))


def test_stability_bound():
    assert rk4_stability_bound(1, 1.0) == 0.5
    box = make_box(2, 8)
    assert coefficient_sup(None, box) == 2
    G = np.zeros((2, 2) + box.shape)
    G[0, 0], G[1, 1], G[0, 1], G[1, 0] = 1.0, 2.0, 0.5, 0.5
    assert coefficient_sup(G, box) == 4
    f = Field.constant(box, 3.0)
    spec = EquationSpec("quasilinear", metric=DiagonalMetric(a_u=1.0))
    with pytest.raises(ValueError, match="stability"):
        evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.2, t_max=1))


def test_method_requirements():
    box = make_box(1, 8)
    z = Field.zeros(box)
    with pytest.raises(ValueError):
        evolve(z, z, EquationSpec.power(1, 3), SolverConfig(dt=0.1, t_max=1, method="exact_linear"))
    with pytest.raises(ValueError):
        evolve(z, z, EquationSpec("quasilinear", metric=DiagonalMetric(1.0)),
               SolverConfig(dt=0.1, t_max=1, method="exponential_duhamel"))


# -- linear --------------------------------------------------------------------------

def test_zero_data_stays_zero():
    box = make_box(2, 8)
    z = Field.zeros(box)
    for spec, method in [(EquationSpec(), "exact_linear"), (EquationSpec.power(1, 3), "rk4"),
                         (EquationSpec("semilinear", nonlinearity=Nonlinearity("dt_squared")), "rk4"),
                         (EquationSpec("semilinear", nonlinearity=Nonlinearity("dj_squared", axis=2)), "exponential_duhamel")]:
        traj = evolve(z, z, spec, SolverConfig(dt=0.1, t_max=2, method=method))
        assert all(s.sup_u == 0 and s.sup_ut == 0 for s in traj.samples)
    assert exact_linear_step(WaveState.zeros(box), 0.3).u.allclose(z, atol=0)


@pytest.mark.parametrize("n", [0, 1, 5, 8])
def test_single_mode_exact(n):
    box = make_box(1, 16)
    f = mode(box, n)
    Kn = k_symbol(box)[n]
    traj = evolve(f, Field.zeros(box), EquationSpec(), SolverConfig(dt=0.1, t_max=10, method="exact_linear"))
    for s in traj.samples:
        assert s.state.u.allclose(f * math.cos(Kn * s.t), atol=1e-12)


def test_exact_linear_conserves_energy():
    box = make_box(1, 32)
    traj = evolve(delta_field(box), Field.zeros(box), EquationSpec(),
                  SolverConfig(dt=0.01, t_max=10, method="exact_linear"))
    assert len(traj.samples) == 1001
    assert traj.energy_drift() < 1e-10
    assert np.all(np.diff(traj.times) > 0)


def test_forced_exact_step_against_fine_rk4():
    box = make_box(1, 16)
    phase = mode(box, 2).values

    def forcing(t):
        return np.sin(1.3 * t) * phase

    spec = EquationSpec.linear(forcing=forcing)
    f = gaussian(box)
    exact = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.05, t_max=3, method="exact_linear"))
    fine = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.005, t_max=3, method="rk4"))
    assert exact.final.u.allclose(fine.final.u, atol=1e-6)


def test_rk4_order_on_linear_problem():
    box = make_box(1, 16)
    f, g = gaussian(box), delta_field(box)
    ref = evolve(f, g, EquationSpec(), SolverConfig(dt=0.1, t_max=4, method="exact_linear")).final.u.values
    errs = []
    for dt in (0.1, 0.05, 0.025):
        u = evolve(f, g, EquationSpec(), SolverConfig(dt=dt, t_max=4)).final.u.values
        errs.append(np.linalg.norm(u - ref))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) < 0.3)


def test_single_rk4_step_vs_exact():
    box = make_box(1, 16)
    s = WaveState(gaussian(box), Field.zeros(box))
    a = rk4_step(s, 0.05, EquationSpec())
    b = exact_linear_step(s, 0.05)
    kmax = 2.0
    assert np.max(np.abs(a.u.values - b.u.values)) < 0.05**5 * kmax**5


def test_lower_order_damping_decays_energy():
    box = make_box(1, 16)
    spec = EquationSpec("linear", b=0.5, c=0.2)
    traj = evolve(gaussian(box), Field.zeros(box), spec, SolverConfig(dt=0.05, t_max=10))
    assert traj.energies[-1] < traj.energies[0]


# -- semilinear -------------------------------------------------------------------------

def test_rk4_global_order_semilinear():
    box = make_box(1, 32)
    f = gaussian(box, norm=2.0)
    spec = EquationSpec.power(-1, 3)
    finals = [evolve(f, Field.zeros(box), spec, SolverConfig(dt=dt, t_max=2)).final.u.values
              for dt in (0.04, 0.02, 0.01)]
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert abs(math.log2(ratio) - 4) < 0.3


def test_exponential_duhamel_matches_rk4():
    box = make_box(1, 32)
    f = gaussian(box, norm=2.0)
    spec = EquationSpec.power(-1, 3)
    a = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.02, t_max=3, method="exponential_duhamel"))
    b = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.0025, t_max=3))
    assert a.final.u.allclose(b.final.u, atol=1e-6)
    step = exponential_duhamel_step(WaveState(f, Field.zeros(box)), 0.02, spec)
    assert step.t == pytest.approx(0.02)


def test_exponential_duhamel_is_exact_for_free_waves():
    box = make_box(1, 16)
    f = gaussian(box)
    a = evolve(f, Field.zeros(box), EquationSpec(), SolverConfig(dt=0.5, t_max=10, method="exponential_duhamel"))
    b = evolve(f, Field.zeros(box), EquationSpec(), SolverConfig(dt=0.5, t_max=10, method="exact_linear"))
    assert a.final.u.allclose(b.final.u, atol=1e-12)


def test_defocusing_energy_conserved():
    box = make_box(1, 32)
    traj = evolve(gaussian(box, norm=3.0), Field.zeros(box), EquationSpec.power(-1, 3),
                  SolverConfig(dt=0.005, t_max=10, sample_every=20))
    assert traj.status == "completed"
    assert traj.energy_drift() < 1e-8


def test_nonfinite_is_recorded_as_blowup():
    box = make_box(1, 8)

    def bad(u, ut, grad):
        return np.where(np.abs(u) > 1.5, np.inf, 0.0)

    spec = EquationSpec("semilinear", nonlinearity=Nonlinearity("custom", func=bad))
    traj = evolve(Field.constant(box, 1.0), Field.constant(box, 1.0), spec,
                  SolverConfig(dt=0.1, t_max=2, blowup=BlowupConfig(max_halvings=3)))
    assert traj.blowup is not None and traj.blowup.reason == "nonfinite"
    assert traj.blowup.t < 1.0


# -- blow-up ------------------------------------------------------------------------------

def test_blowup_reference_constants():
    ref = blowup_reference(3, 1.0)
    assert ref.c_p == pytest.approx(math.sqrt(2))
    assert ref.u0 == pytest.approx(math.sqrt(2))
    assert ref.ut0 == pytest.approx(math.sqrt(2))
    for p, t0 in ((3, 1.0), (5, 0.3), (2.5, 2.0)):
        r = blowup_reference(p, t0)
        assert abs(r.utt(0.0) - r.u0**p) <= 1e-12 * r.u0**p
    with pytest.raises(ValueError):
        blowup_reference(1, 1)
    with pytest.raises(ValueError):
        blowup_reference(3, 0)


def test_rk4_follows_blowup_profile():
    ref = blowup_reference(3, 1.0)
    box = make_box(1, 8)
    traj = evolve(Field.constant(box, ref.u0), Field.constant(box, ref.ut0), EquationSpec.power(1, 3),
                  SolverConfig(dt=0.001, t_max=0.9))
    for s in traj.samples:
        assert abs(s.state.u.values[0].real - ref.u(s.t)) <= 1e-6 * ref.u(s.t)


@pytest.mark.parametrize("p,t0", [(3, 1.0), (3, 0.5), (5, 1.0)])
def test_evolve_halts_near_t0(p, t0):
    ref = blowup_reference(p, t0)
    box = make_box(1, 8)
    traj = evolve(Field.constant(box, ref.u0), Field.constant(box, ref.ut0), EquationSpec.power(1, p),
                  SolverConfig(dt=0.01 * t0, t_max=2 * t0))
    assert traj.status == "blew-up"
    assert abs(traj.blowup.t - t0) <= 0.02 * t0
    assert abs(traj.blowup.t - ref.sup_crossing_time(1e6)) < 1e-3 * t0


def test_record_action_keeps_first_crossing():
    ref = blowup_reference(3, 1.0)
    box = make_box(1, 8)
    cfg = SolverConfig(dt=0.01, t_max=1.2, blowup=BlowupConfig(action="record", sup_threshold=1e3, max_halvings=12))
    traj = evolve(Field.constant(box, ref.u0), Field.constant(box, ref.ut0), EquationSpec.power(1, 3), cfg)
    assert traj.blowup is not None
    assert traj.blowup.t == pytest.approx(ref.sup_crossing_time(1e3), abs=1e-2)


def test_dt_squared_constant_profile_blows_up_at_inverse_amplitude():
    box = make_box(1, 8)
    spec = EquationSpec("semilinear", nonlinearity=Nonlinearity("dt_squared"))
    for c in (1.0, 0.5):
        traj = evolve(Field.zeros(box), Field.constant(box, c), spec, SolverConfig(dt=0.01, t_max=5))
        assert traj.blowup.t == pytest.approx(1 / c, rel=1e-3)


# -- Picard -------------------------------------------------------------------------------

def test_picard_linear_converges_after_one_extra_iterate():
    box = make_box(1, 16)
    res = picard_solve(gaussian(box), Field.zeros(box), EquationSpec(), SolverConfig(dt=0.05, t_max=1))
    assert len(res.sup_C) == 2
    assert res.sup_C[1] < 1e-14


def test_picard_quasilinear_small_data():
    box = make_box(1, 32)
    spec = EquationSpec("quasilinear", metric=DiagonalMetric(a_u=1.0))
    cfg = SolverConfig(dt=0.02, t_max=1.0)
    res = picard_solve(gaussian(box, norm=0.5), Field.zeros(box), spec, cfg)
    assert res.converged and res.sup_C[-1] < 1e-10
    assert np.all(np.diff(res.ratios) < 0)
    assert picard_residual(res, spec) < 1e-6
    direct = evolve(gaussian(box, norm=0.5), Field.zeros(box), spec, cfg)
    assert direct.final.u.allclose(Field(box, res.u_nodes[-1]), atol=1e-9)


def test_picard_nonconvergence_carries_sequence():
    box = make_box(1, 16)
    spec = EquationSpec("quasilinear", metric=DiagonalMetric(a_u=1.0))
    with pytest.raises(PicardNonConvergence) as info:
        picard_solve(gaussian(box, norm=0.5), Field.zeros(box), spec,
                     SolverConfig(dt=0.05, t_max=1, picard=PicardConfig(max_iters=2)))
    assert len(info.value.sup_C) == 2


def test_picard_window_halves_for_strong_nonlinearity():
    box = make_box(1, 8)
    spec = EquationSpec("semilinear", nonlinearity=Nonlinearity("power", mu=1, p=3))
    res = picard_solve(Field.constant(box, 2.0), Field.zeros(box), spec,
                       SolverConfig(dt=0.01, t_max=1.0, picard=PicardConfig(max_iters=30)))
    assert res.window < 1.0


def test_picard_method_in_evolve_agrees_with_rk4():
    box = make_box(1, 16)
    spec = EquationSpec("quasilinear", metric=DiagonalMetric(a_u=0.5, a_ut=0.5))
    f = gaussian(box, norm=0.3)
    a = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.02, t_max=2, method="picard",
                                                       picard=PicardConfig(window=0.5)))
    b = evolve(f, Field.zeros(box), spec, SolverConfig(dt=0.02, t_max=2))
    assert a.times[-1] == pytest.approx(2.0)
    assert a.final.u.allclose(b.final.u, atol=1e-9)


# -- estimates along quasilinear and semilinear runs ------------------------------------------

def test_implicit_estimate_with_fitted_constant():
    box = make_box(1, 32)
    spec = EquationSpec("quasilinear", metric=DiagonalMetric(a_u=1.0))
    traj = evolve(gaussian(box, norm=0.5), delta_field(box) * 0.3, spec, SolverConfig(dt=0.02, t_max=5))
    A = traj.a_values
    gsup = [1.0 + float(np.max(np.abs(s.state.u.values) ** 2)) for s in traj.samples]
    C = fit_implicit_exponent(A, [], gsup, traj.times)
    assert 0 <= C < math.inf
    for t, a in zip(traj.times, A):
        assert a <= estimate_rhs_implicit(A[0], [], gsup, t, C=C, times=traj.times).value * (1 + 1e-9)


def test_persistence_bound_holds_with_fitted_constant():
    box = make_box(1, 32)
    traj = evolve(gaussian(box, norm=2.0), Field.zeros(box), EquationSpec.power(-1, 3),
                  SolverConfig(dt=0.01, t_max=10, k=1))
    sup = [s.sup_u for s in traj.samples]
    A = traj.a_values
    shape = np.array([persistence_bound(A[0], t, sup[: i + 1], traj.times[: i + 1], p=3)
                      for i, t in enumerate(traj.times)])
    C = float(np.max(A / shape))
    assert 0 < C < math.inf
    assert np.all(np.isfinite(A))


# -- Lipschitz -----------------------------------------------------------------------------

def test_lipschitz_linear_ratio_is_constant(rng):
    box = make_box(1, 16)
    pert = [(random_field(box, rng), random_field(box, rng))]
    rep = lipschitz_dependence_probe(gaussian(box), Field.zeros(box), pert, EquationSpec(),
                                     SolverConfig(dt=0.05, t_max=2))
    assert rep.spread < 1e-8
    assert rep.max_ratio <= 1 + 2  # free propagator: cos bounded by 1, sin(tK)/K by t


def test_lipschitz_defocusing_ratio_is_stable(rng):
    box = make_box(1, 32)
    pert = [(random_field(box, rng), Field.zeros(box)), (Field.zeros(box), random_field(box, rng))]
    rep = lipschitz_dependence_probe(gaussian(box, norm=2.0), Field.zeros(box), pert,
                                     EquationSpec.power(-1, 3), SolverConfig(dt=0.02, t_max=2))
    assert rep.spread < 0.2
    assert np.all(np.isfinite(rep.ratios))


# -- checkpoints ----------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    box = make_box(2, 4)
    s = WaveState(random_field(box, rng), random_field(box, rng), 1.25)
    path = tmp_path / "ck.txt"
    write_checkpoint(path, s, "abc123")
    back, h = read_checkpoint(path)
    assert h == "abc123" and back.t == 1.25
    assert np.array_equal(back.u.values, s.u.values) and np.array_equal(back.ut.values, s.ut.values)
