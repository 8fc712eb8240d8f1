"""Scripted reproductions: lifespan scans, the l^{1,1} counterexample, the
Fourier isomorphism check and the derivative-nonlinearity demo."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .lattice import Field, LatticeBox, delta_field, make_box
from .norms import NormSpec, isomorphism_ratio, lp_alpha_norm, weak_l11_functional
from .solvers import (
    EquationSpec,
    Nonlinearity,
    PicardNonConvergence,
    SolverConfig,
    Trajectory,
    evolve,
    picard_solve,
    picard_residual,
    trajectory_residual,
)
from .spectral import SpectralField, partial

LIFESPAN_MODELS: dict[str, Callable[[float], float]] = {
    "loglog": lambda x: math.log(math.log(x)),
    "sqrt_log": lambda x: math.sqrt(math.log(x)),
}


def power_model(p: float) -> Callable[[float], float]:
    return lambda x: x ** ((p - 1) / (p + 1))


@dataclass
class ScanResult:
    """One row per grid point; ``fits`` maps model tags to fitted constants."""

    experiment: str
    parameter: str
    grid: list
    rows: list[dict]
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.size > 1 and not (np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)):
            raise ValueError(f"{self.parameter} grid must be strictly monotone")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def csv_text(self, comment: str | None = None) -> str:
        cols = list(self.rows[0]) if self.rows else [self.parameter]
        lines = [f"# {comment}"] if comment else []
        lines.append(",".join(cols))
        for row in self.rows:
            lines.append(",".join(_fmt(row[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def ndjson_text(self, comment: str | None = None) -> str:
        out = [json.dumps({"comment": comment})] if comment else []
        out += [json.dumps(row, sort_keys=True) for row in self.rows]
        out.append(json.dumps({"fits": self.fits, "checks": self.checks}, sort_keys=True))
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _pmap(func, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


# -- lifespan -------------------------------------------------------------------

def ode_blowup_time(u0: float, ut0: float, p: float, mu: float = 1.0) -> float:
    """Exact blow-up time of u'' = mu |u|^(p-1) u with u(0) = u0 > 0, u'(0) = ut0 >= 0.

    Energy conservation gives u' = sqrt(2E + 2 u^(p+1)/(p+1)); substituting
    u = u0 + s^2 removes the endpoint singularity when ut0 = 0.
    """
    if mu != 1:
        raise ValueError("only the focusing case blows up")
    if u0 <= 0 or ut0 < 0 or (u0 == 0 and ut0 == 0):
        raise ValueError("need u0 > 0 and ut0 >= 0")
    E2 = ut0**2 - 2.0 * u0 ** (p + 1) / (p + 1)

    def integrand(s):
        u = u0 + s * s
        return 2.0 * s / math.sqrt(E2 + 2.0 * u ** (p + 1) / (p + 1)) if s > 0 else (
            2.0 / math.sqrt(2.0 * u0**p) if ut0 == 0 else 0.0)

    val, _ = quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return val


def _lifespan_point(args) -> dict:
    eps, f, g, spec, config, R = args
    traj = evolve(f * eps, g * eps, spec, replace(config, store_states=False))
    A = traj.a_values
    over = np.nonzero(A > R)[0]
    row = {
        "eps": float(eps),
        "T_star": float(traj.t_end),
        "status": "blew-up" if traj.blowup is not None else "hit-t_max",
        "t_exit_R": float(traj.times[over[0]]) if over.size else math.nan,
        "A0": float(A[0]),
        "steps": int(traj.info.get("steps", 0)),
    }
    nl = spec.nonlinearity
    u0, ut0 = f.values.ravel()[0] * eps, g.values.ravel()[0] * eps
    constant = np.allclose(f.values, f.values.ravel()[0]) and np.allclose(g.values, g.values.ravel()[0])
    if (constant and nl.kind == "power" and nl.mu == 1 and spec.kind == "semilinear"
            and not spec.has_lower_order and abs(u0.imag) == 0 and abs(ut0.imag) == 0
            and u0.real > 0 and ut0.real >= 0):
        row["T_ode"] = ode_blowup_time(u0.real, ut0.real, nl.p)
    return row


def fit_lower_bounds(eps, T, p: float) -> dict:
    """For each model h, K_lower = min T/h (the largest K with T >= K h on every
    point) and the least-squares K."""
    eps, T = np.asarray(eps, dtype=float), np.asarray(T, dtype=float)
    models = dict(LIFESPAN_MODELS, power=power_model(p))
    fits = {}
    for tag, h in models.items():
        x = 1.0 / eps
        hv = np.array([h(v) if v > math.e else math.nan for v in x]) if tag == "loglog" else np.array([h(v) for v in x])
        ok = np.isfinite(hv) & (hv > 0)
        if not ok.any():
            fits[tag] = {"K_lower": math.nan, "K_lsq": math.nan, "satisfied": False, "points": 0}
            continue
        k_lower = float(np.min(T[ok] / hv[ok]))
        k_lsq = float(np.dot(T[ok], hv[ok]) / np.dot(hv[ok], hv[ok]))
        fits[tag] = {"K_lower": k_lower, "K_lsq": k_lsq, "satisfied": bool(k_lower > 0), "points": int(ok.sum())}
    return fits


def lifespan_scan(
    spec: EquationSpec,
    f: Field,
    g: Field,
    eps_grid: Sequence[float],
    config: SolverConfig,
    R: float = 0.1,
    jobs: int = 1,
) -> ScanResult:
    """Evolve (eps f, eps g) for each eps and record the lifespan.

    T* is the blow-up time; runs that reach ``t_max`` are censored and excluded
    from the fits.  ``t_exit_R`` records when A(t) first exceeds ``R``.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ValueError("empty eps grid")
    if any(e <= 0 or e >= 1 for e in eps_grid) or np.any(np.diff(eps_grid) >= 0):
        raise ValueError("eps grid must be decreasing with values in (0, 1)")
    rows = _pmap(_lifespan_point, [(e, f, g, spec, config, R) for e in eps_grid], jobs)
    res = ScanResult("lifespan", "eps", eps_grid, rows)
    done = [r for r in rows if r["status"] == "blew-up"]
    p = spec.nonlinearity.p
    if done:
        res.fits = fit_lower_bounds([r["eps"] for r in done], [r["T_star"] for r in done], p)
    T = [r["T_star"] for r in rows]
    res.checks["nondecreasing"] = bool(np.all(np.diff(T) >= 0))
    res.checks["power_bound"] = bool(res.fits.get("power", {}).get("satisfied", False))
    ode = [abs(r["T_star"] / r["T_ode"] - 1) for r in done if "T_ode" in r]
    if ode:
        res.checks["ode_within_5pct"] = bool(max(ode) < 0.05)
        res.fits["ode_max_rel_err"] = float(max(ode))
    return res


# -- counterexample ----------------------------------------------------------------

def _counterexample_point(args) -> dict:
    d, L = args
    box = make_box(d, L)
    u = partial(delta_field(box), 1)
    return {
        "L": L,
        "strong_l11": lp_alpha_norm(u, NormSpec(p=1, alpha=1)),
        "weak_l11": weak_l11_functional(u),
    }


def counterexample_growth(L_grid: Sequence[int], d: int = 1, jobs: int = 1) -> ScanResult:
    """||d_1 delta_0||_{l^{1,1}} against the weak l^{1,1} functional as L grows."""
    L_grid = [int(L) for L in L_grid]
    if not L_grid:
        raise ValueError("empty L grid")
    if any(L & (L - 1) or L < 4 for L in L_grid) or np.any(np.diff(L_grid) <= 0):
        raise ValueError("L grid must be increasing powers of two (>= 4)")
    rows = _pmap(_counterexample_point, [(d, L) for L in L_grid], jobs)
    res = ScanResult(f"counterexample-d{d}", "L", L_grid, rows)
    strong, weak = res.column("strong_l11"), res.column("weak_l11")
    res.fits["weak_band"] = float(weak.max() / weak.min())
    res.checks["strong_increasing"] = bool(np.all(np.diff(strong) > 0))
    res.checks["weak_bounded"] = bool(res.fits["weak_band"] < 1.5)
    return res


# -- isomorphism -------------------------------------------------------------------

@dataclass(frozen=True)
class IsomorphismReport:
    ratios: np.ndarray
    lower: float = 1 / math.sqrt(2) - 1e-9
    upper: float = math.sqrt(2) + 1e-9

    @property
    def min(self) -> float:
        return float(self.ratios.min())

    @property
    def max(self) -> float:
        return float(self.ratios.max())

    @property
    def ok(self) -> bool:
        return bool(self.lower <= self.min and self.max <= self.upper)


def random_spectral_field(box: LatticeBox, rng: np.random.Generator) -> SpectralField:
    """Random trigonometric polynomial whose lattice coefficients decay like
    <m>^-s with a random exponent s in [0, 3] (so both smooth and rough data occur)."""
    s = rng.uniform(0.0, 3.0)
    c = (rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)) * box.weights(-s)
    return SpectralField(box, np.fft.fftn(c))


def isomorphism_check(random_seed: int = 0, trials: int = 100, L: int = 16, d: int = 1) -> IsomorphismReport:
    box = make_box(d, L)
    rng = np.random.default_rng(random_seed)
    ratios = [isomorphism_ratio(random_spectral_field(box, rng)) for _ in range(trials)]
    return IsomorphismReport(np.array(ratios))


# -- derivative nonlinearity ----------------------------------------------------------

@dataclass(frozen=True)
class FaddeevConfig:
    """Demo of u_tt = Laplacian(u) + |u_t|^2 (or |d_axis u|^2).

    ``profile`` is ``gaussian`` (data in u) or ``constant`` (data in u_t, for
    which the exact lifespan is 1/amplitude).
    """

    d: int = 1
    L: int = 32
    amplitude: float = 1e-2
    profile: str = "gaussian"
    nonlinearity: str = "dt_squared"
    axis: int = 1
    dt: float = 0.01
    t_max: float = 1.0
    k: int = 1
    sup_threshold: float = 1e6

    def __post_init__(self):
        if self.profile not in ("gaussian", "constant"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.nonlinearity not in ("dt_squared", "dj_squared"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    def data(self) -> tuple[Field, Field]:
        box = make_box(self.d, self.L)
        if self.profile == "constant":
            return Field.zeros(box), Field.constant(box, self.amplitude)
        bump = np.exp(-box.norm_sq / 4.0)
        return Field(box, self.amplitude * bump / np.linalg.norm(bump)), Field.zeros(box)

    def spec(self) -> EquationSpec:
        return EquationSpec("semilinear", nonlinearity=Nonlinearity(self.nonlinearity, axis=self.axis))


def faddeev_demo(config: FaddeevConfig = FaddeevConfig()) -> Trajectory:
    """Run the quadratic-derivative equation over ``[0, t_max]``.

    The returned trajectory carries diagnostics in ``info``: the Picard
    ``sup_C`` sequence over the window (when it contracts), the fourth-order
    PDE residual on the uniform grid, ``a_max`` and ``existence_window``
    (blow-up time, or ``t_max`` when the run completes).
    """
    f, g = config.data()
    spec = config.spec()
    solver = SolverConfig(dt=config.dt, t_max=config.t_max, k=config.k)
    solver = replace(solver, blowup=replace(solver.blowup, sup_threshold=config.sup_threshold))
    traj = evolve(f, g, spec, solver)
    traj.info["existence_window"] = traj.t_end
    traj.info["a_max"] = float(np.max(traj.a_values))
    if traj.blowup is None:
        try:
            res = picard_solve(f, g, spec, solver)
            traj.info["sup_C"] = res.sup_C
            traj.info["picard_residual"] = picard_residual(res, spec)
        except PicardNonConvergence as exc:
            traj.info["sup_C"] = exc.sup_C
        try:
            traj.info["residual"] = trajectory_residual(traj)
        except ValueError:
            traj.info["residual"] = math.nan
    return traj
