"""Energy functionals and the energy estimates behind the well-posedness theory."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .lattice import Field, LatticeBox, WaveState
from .norms import l2k_norm
from .spectral import partial_symbol


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    gradient: float
    potential: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.gradient + self.potential


@dataclass(frozen=True)
class EnergyA:
    """||u||_{l^{2,k}} + ||u_t||_{l^{2,k}}."""

    k: int
    value: float


def gradient_sq(u: np.ndarray, box: LatticeBox) -> float:
    """sum_j ||d_j u||_2^2, evaluated in frequency space (Parseval)."""
    uh = np.fft.fftn(np.asarray(u).reshape(box.shape))
    s = sum(np.abs(partial_symbol(box, j)) ** 2 for j in range(1, box.d + 1))
    return float(np.sum(s * np.abs(uh) ** 2) / box.total)


def difference_gradient_sq(u: np.ndarray, box: LatticeBox) -> float:
    """sum_j ||D_j u||_2^2 with forward differences."""
    u = np.asarray(u).reshape(box.shape)
    return float(sum(np.sum(np.abs(np.roll(u, -1, axis=ax) - u) ** 2) for ax in range(box.d)))


def _energy_parts(u: np.ndarray, ut: np.ndarray, box: LatticeBox) -> tuple[float, float]:
    return 0.5 * float(np.sum(np.abs(ut) ** 2)), 0.5 * gradient_sq(u, box)


def potential_energy(u: np.ndarray, mu: float, p: float) -> float:
    return -mu * float(np.sum(np.abs(u) ** (p + 1))) / (p + 1)


def linear_energy(state: WaveState) -> EnergyBreakdown:
    kin, grad = _energy_parts(state.u.values, state.ut.values, state.box)
    return EnergyBreakdown(kin, grad)


def nlw_energy(state: WaveState, mu: float, p: float) -> EnergyBreakdown:
    if p <= 1:
        raise ValueError(f"power must exceed 1, got {p}")
    kin, grad = _energy_parts(state.u.values, state.ut.values, state.box)
    return EnergyBreakdown(kin, grad, potential_energy(state.u.values, mu, p))


def energy_a(state: WaveState, k: int = 0) -> EnergyA:
    if k not in (0, 1):
        raise ValueError(f"weight index must be 0 or 1, got {k}")
    box = state.box
    return EnergyA(k, l2k_norm(state.u.values, box, k) + l2k_norm(state.ut.values, box, k))


def _integral(values: Sequence[float], t: float, times: Sequence[float] | None) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if values.size == 1:
        return float(values[0]) * t if times is None else 0.0
    if times is None:
        times = np.linspace(0.0, t, values.size)
    times = np.asarray(times, dtype=float)
    mask = times <= t + 1e-12 * max(1.0, abs(t))
    if mask.sum() < 2:
        return 0.0
    return float(np.trapezoid(values[mask], times[mask]))


def estimate_rhs_explicit(
    f: Field,
    g: Field,
    forcing_norms: Sequence[float],
    t: float,
    k: int = 0,
    times: Sequence[float] | None = None,
) -> float:
    """(1 + |t|^(k+1)) [||f|| + ||g|| + int_0^t ||F(s)|| ds] in l^{2,k}.

    ``forcing_norms`` are samples of ``||F(s)||_{l^{2,k}}`` on ``times``
    (a uniform grid over ``[0, t]`` if omitted); the integral is trapezoidal.
    """
    box = f.box
    data = l2k_norm(f.values, box, k) + l2k_norm(g.values, box, k)
    return (1.0 + abs(t) ** (k + 1)) * (data + _integral(forcing_norms, t, times))


@dataclass(frozen=True)
class ImplicitBound:
    base: float  # A(0) + int ||box_g u||
    exp_factor: float  # exp(C int (sum ||g^jk||_inf + 1))
    C: float

    @property
    def value(self) -> float:
        return self.base * self.exp_factor


def estimate_rhs_implicit(
    A0: float,
    forcing_norms: Sequence[float],
    gjk_sup_norms: Sequence[float],
    t: float,
    C: float = 1.0,
    times: Sequence[float] | None = None,
) -> ImplicitBound:
    """Bound for the variable-coefficient d'Alembertian with exponent constant ``C``.

    ``gjk_sup_norms`` holds samples of ``sum_jk ||g^jk(s)||_inf``.  Without
    samples the coefficient contribution is zero and the factor is ``exp(C t)``.
    """
    base = A0 + _integral(forcing_norms, t, times)
    g = np.asarray(gjk_sup_norms, dtype=float)
    if g.size == 0:
        expo = C * t
    else:
        expo = C * (_integral(g, t, times) + t)
    return ImplicitBound(base, math.exp(expo), C)


def fit_constant(measured: Sequence[float], bound: Sequence[float]) -> float:
    """Smallest C with measured <= C * bound at every sample (bound > 0)."""
    m = np.asarray(measured, dtype=float)
    b = np.asarray(bound, dtype=float)
    if np.any((b <= 0) & (m > 0)):
        return math.inf
    ok = b > 0
    return float(np.max(m[ok] / b[ok], initial=0.0))


def fit_implicit_exponent(
    A: Sequence[float],
    forcing_norms: Sequence[float],
    gjk_sup_norms: Sequence[float],
    times: Sequence[float],
) -> float:
    """Smallest C >= 0 for which ``estimate_rhs_implicit`` dominates ``A`` along a run."""
    A = np.asarray(A, dtype=float)
    times = np.asarray(times, dtype=float)
    fn = np.asarray(forcing_norms, dtype=float) if len(forcing_norms) else np.zeros_like(times)
    gn = np.asarray(gjk_sup_norms, dtype=float) if len(gjk_sup_norms) else np.zeros_like(times)
    base = A[0] + cumulative_trapezoid(fn, times, initial=0.0)
    G = cumulative_trapezoid(gn + 1.0, times, initial=0.0)
    C = 0.0
    for a, b, gi in zip(A, base, G):
        if a <= b * (1 + 1e-12):
            continue
        if gi <= 0 or b <= 0:
            return math.inf
        C = max(C, math.log(a / b) / gi)
    return C


def persistence_bound(
    A1_0: float,
    T: float,
    sup_norms: Sequence[float],
    times: Sequence[float],
    p: float,
    C: float = 1.0,
    C_exp: float = 1.0,
    k: int = 1,
) -> float:
    """C (1 + T^(k+1)) A_k(0) exp(C' int_0^T ||u||_inf^(p-1))."""
    s = np.asarray(sup_norms, dtype=float) ** (p - 1)
    return C * (1 + T ** (k + 1)) * A1_0 * math.exp(C_exp * float(np.trapezoid(s, times)))


@dataclass(frozen=True)
class StrongEnergyReport:
    times: np.ndarray
    lhs: np.ndarray  # ||u'(t)||_2
    rhs: np.ndarray  # ||u'(0)|| + int ||box u||
    tol: float

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def holds(self) -> np.ndarray:
        return self.slack >= -self.tol

    @property
    def ok(self) -> bool:
        return bool(np.all(self.holds))


def uprime_norm(state: WaveState) -> float:
    """||(u_t, d_1 u, ..., d_d u)||_2."""
    return math.sqrt(float(np.sum(np.abs(state.ut.values) ** 2)) + gradient_sq(state.u.values, state.box))


def strong_energy_check(
    trajectory,
    forcing_norms: Sequence[float] | None = None,
    tol: float = 1e-6,
) -> StrongEnergyReport:
    """Check ||u'(t)|| <= ||u'(0)|| + int_0^t ||box u|| along a constant-coefficient run.

    ``trajectory`` is a solver Trajectory or any sequence of WaveStates;
    ``forcing_norms`` samples ``||box u(t)||_2`` at the same times (zero if omitted).
    """
    states = list(getattr(trajectory, "states", trajectory))
    times = np.array([s.t for s in states], dtype=float)
    lhs = np.array([uprime_norm(s) for s in states])
    if forcing_norms is None or len(forcing_norms) == 0:
        acc = np.zeros_like(times)
    else:
        acc = cumulative_trapezoid(np.asarray(forcing_norms, dtype=float), times, initial=0.0)
    rhs = (lhs[0] if lhs.size else 0.0) + acc
    return StrongEnergyReport(times, lhs, rhs, tol)
