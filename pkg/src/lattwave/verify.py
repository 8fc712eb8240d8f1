"""Self-check suites run by ``lattwave verify``."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .calculus import conv_partial, difference, inner, kernel_periodized, stencil_laplacian
from .energy import difference_gradient_sq, gradient_sq, strong_energy_check
from .experiments import counterexample_growth, isomorphism_check
from .lattice import Field, delta_field, make_box
from .solvers import EquationSpec, SolverConfig, evolve
from .spectral import k_multiplier, partial

SWEEP = [(d, L) for d in (1, 2, 3) for L in (8, 16, 32)]


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.suite}/{self.name}: {self.value:.3e} (tol {self.tolerance:.1e}, {self.seconds:.2f}s)"


def _random(box, rng) -> Field:
    return Field(box, rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape))


def _timed(suite, name, tol, func) -> Check:
    t0 = time.perf_counter()
    value = float(func())
    return Check(suite, name, bool(value <= tol), value, tol, time.perf_counter() - t0)


def identities(seed: int = 0, per_box: int = 12) -> list[Check]:
    rng = np.random.default_rng(seed)

    def multiplier():
        worst = 0.0
        for d, L in SWEEP:
            box = make_box(d, L)
            kernels = [kernel_periodized(box, j) for j in range(1, d + 1)]
            for _ in range(per_box):
                f = _random(box, rng)
                for j in range(1, d + 1):
                    diff = conv_partial(f, j, kernels[j - 1]).values - partial(f, j).values
                    worst = max(worst, float(np.abs(diff).max()))
        return worst

    def factorization():
        worst = 0.0
        for d, L in SWEEP:
            box = make_box(d, L)
            for _ in range(per_box):
                f = _random(box, rng)
                s = sum(partial(partial(f, j), j).values for j in range(1, d + 1))
                worst = max(worst, np.abs(s - stencil_laplacian(f).values).max() / np.abs(f.values).max())
        return worst

    def gradient_norm():
        worst = 0.0
        for d, L in SWEEP:
            box = make_box(d, L)
            for _ in range(per_box):
                f = _random(box, rng)
                gap = abs(gradient_sq(f.values, box) - difference_gradient_sq(f.values, box))
                worst = max(worst, gap / np.sum(np.abs(f.values) ** 2))
        return worst

    def sqrt_identity():
        worst = 0.0
        for L in (8, 16, 32, 64):
            box = make_box(1, L)
            K = k_multiplier(box)
            for _ in range(per_box):
                f = _random(box, rng)
                gap = np.linalg.norm(partial(f, 1).values - 1j * K(f).values)
                worst = max(worst, gap / np.linalg.norm(f.values))
        return worst

    return [
        _timed("identities", "multiplier", 1e-11, multiplier),
        _timed("identities", "laplacian_factorization", 1e-11, factorization),
        _timed("identities", "gradient_norm", 1e-10, gradient_norm),
        _timed("identities", "sqrt_laplacian_1d", 1e-11, sqrt_identity),
    ]


def adjointness(seed: int = 0, pairs: int = 100) -> list[Check]:
    rng = np.random.default_rng(seed)

    def skew():
        worst = 0.0
        for i in range(pairs):
            d, L = SWEEP[i % len(SWEEP)]
            box = make_box(d, L)
            u, v = _random(box, rng), _random(box, rng)
            j = 1 + i % d
            defect = abs(inner(partial(u, j), v) + inner(u, partial(v, j)))
            worst = max(worst, defect / (np.linalg.norm(u.values) * np.linalg.norm(v.values)))
        return worst

    def difference_adjoint():
        # <D_j u, v> = -<u, D_j^* v> with the backward difference as adjoint pairing
        worst = 0.0
        for d, L in SWEEP:
            box = make_box(d, L)
            u, v = _random(box, rng), _random(box, rng)
            for j in range(1, d + 1):
                back = Field(box, v.values - np.roll(v.values, 1, axis=j - 1))
                defect = abs(inner(difference(u, j), v) + inner(u, back))
                worst = max(worst, defect / (np.linalg.norm(u.values) * np.linalg.norm(v.values)))
        return worst

    return [
        _timed("adjointness", "partial_skew", 1e-11, skew),
        _timed("adjointness", "difference_pairing", 1e-11, difference_adjoint),
    ]


def _free_run(d: int, L: int):
    box = make_box(d, L)
    f = Field(box, np.exp(-box.norm_sq / 8.0))
    g = delta_field(box)
    return evolve(f, g, EquationSpec(), SolverConfig(dt=0.01, t_max=10.0, method="exact_linear"))


def conservation() -> list[Check]:
    out = []
    for d, L in ((1, 32), (2, 16)):
        traj = _free_run(d, L)
        out.append(_timed("conservation", f"linear_energy_d{d}", 1e-10, traj.energy_drift))

        def strong(traj=traj):
            rep = strong_energy_check(traj)
            return float(np.max(np.abs(rep.lhs - rep.lhs[0])))
        out.append(_timed("conservation", f"strong_estimate_d{d}", 1e-9, strong))
    return out


def counterexample() -> list[Check]:
    out = []
    for d in (1, 2):
        res = counterexample_growth([16, 32, 64, 128], d=d)
        strong = res.column("strong_l11")
        out.append(Check("counterexample", f"strong_increasing_d{d}", res.checks["strong_increasing"],
                         float(np.min(np.diff(strong))), 0.0))
        out.append(Check("counterexample", f"weak_band_d{d}", res.checks["weak_bounded"], res.fits["weak_band"], 1.5))
    return out


def isomorphism(seed: int = 0) -> list[Check]:
    out = []
    for d, L in ((1, 16), (2, 8)):
        rep = isomorphism_check(seed, 100, L, d)
        worst = max(rep.lower - rep.min, rep.max - rep.upper)
        out.append(Check("isomorphism", f"ratio_band_d{d}", rep.ok, worst, 0.0))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "identities": identities,
    "conservation": conservation,
    "adjointness": adjointness,
    "counterexample": counterexample,
    "isomorphism": isomorphism,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for suite in SUITES.values() for c in suite()]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()


def as_dicts(checks: list[Check]) -> list[dict]:
    return [asdict(c) for c in checks]
