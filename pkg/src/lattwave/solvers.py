"""Time evolution of linear, semilinear and quasilinear lattice wave equations.

Equations have the form::

    u_tt = g^{jk}(u, u') d_j d_k u + F(u, u') - b u_t - b^j d_j u - c u + forcing(t)

with all spatial operators applied as Fourier multipliers.  Because every
``d_j d_k`` is bounded on l^2 (symbol bounded by 4), the method-of-lines
system is a plain ODE in sequence space and classical RK4 applies directly.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .energy import EnergyA, EnergyBreakdown, energy_a, linear_energy, nlw_energy
from .lattice import Field, LatticeBox, WaveState, format_snapshot, parse_snapshot, seam_tail_mass
from .norms import l2k_norm
from .spectral import k_symbol, laplacian_symbol, partial_symbol, sinc_t

log = logging.getLogger(__name__)

KINDS = ("linear", "semilinear", "quasilinear")
METHODS = ("exact_linear", "exponential_duhamel", "rk4", "picard")


class BlowUpError(RuntimeError):
    def __init__(self, t: float, sup_u: float, sup_ut: float, reason: str = "nonfinite"):
        super().__init__(f"blow-up at t={t:.6g} ({reason}): |u|_inf={sup_u:.3g}, |u_t|_inf={sup_ut:.3g}")
        self.record = BlowUp(t, sup_u, sup_ut, reason)


class PicardNonConvergence(RuntimeError):
    def __init__(self, message: str, sup_C: Sequence[float]):
        super().__init__(message)
        self.sup_C = list(sup_C)


# -- equation description -----------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Right-hand side F(u, u') with F(0, 0) = 0.

    kind is one of ``none``, ``power`` (mu |u|^(p-1) u), ``dt_squared``
    (|u_t|^2), ``dj_squared`` (|d_axis u|^2) or ``custom`` (``func(u, ut, grad)``).
    """

    kind: str = "none"
    mu: float = 0.0
    p: float = 3.0
    axis: int = 1
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("none", "power", "dt_squared", "dj_squared", "custom"):
            raise ValueError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == "power":
            if self.p <= 1:
                raise ValueError(f"power nonlinearity needs p > 1, got {self.p}")
            if self.mu not in (-1, 1):
                raise ValueError(f"mu must be +1 or -1, got {self.mu}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom nonlinearity needs func")

    @property
    def needs_grad(self) -> bool:
        return self.kind in ("dj_squared", "custom")

    def __call__(self, u, ut, grad):
        if self.kind == "none":
            return 0.0
        if self.kind == "power":
            a = np.abs(u)
            return self.mu * (a ** (self.p - 1)) * u if self.p != 3 else self.mu * a * a * u
        if self.kind == "dt_squared":
            return np.abs(ut) ** 2
        if self.kind == "dj_squared":
            return np.abs(grad[self.axis - 1]) ** 2
        return self.func(u, ut, grad)

    def describe(self) -> str:
        if self.kind == "custom":
            return f"custom:{getattr(self.func, '__qualname__', repr(self.func))}"
        return f"{self.kind}(mu={self.mu},p={self.p},axis={self.axis})"


@dataclass(frozen=True)
class DiagonalMetric:
    """g^{jk} = delta_jk (1 + a_u |u|^2 + a_ut |u_t|^2)."""

    a_u: float = 0.0
    a_ut: float = 0.0

    needs_grad = False

    def __call__(self, u, ut, grad):
        return 1.0 + self.a_u * np.abs(u) ** 2 + self.a_ut * np.abs(ut) ** 2

    def describe(self) -> str:
        return f"diag(a_u={self.a_u},a_ut={self.a_ut})"


@dataclass(frozen=True)
class EquationSpec:
    """What to solve.

    ``metric`` is ``None`` (the Laplacian), a :class:`DiagonalMetric`, or a
    callable ``(u, ut, grad) -> array`` returning either a scalar field
    (meaning ``g^{jk} = s delta_jk``) or a symmetric ``(d, d, *shape)`` array.
    ``forcing`` maps ``t`` to an array on the box.
    """

    kind: str = "linear"
    metric: Callable | None = None
    nonlinearity: Nonlinearity = Nonlinearity()
    b: float = 0.0
    bj: tuple[float, ...] = ()
    c: float = 0.0
    forcing: Callable[[float], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "linear" and self.nonlinearity.kind != "none":
            raise ValueError("linear equations take no nonlinearity")
        if self.kind != "quasilinear" and self.metric is not None:
            raise ValueError("only quasilinear equations take a metric")
        object.__setattr__(self, "bj", tuple(float(x) for x in self.bj))

    @classmethod
    def linear(cls, forcing=None, **lower) -> "EquationSpec":
        return cls("linear", forcing=forcing, **lower)

    @classmethod
    def power(cls, mu: float, p: float) -> "EquationSpec":
        return cls("semilinear", nonlinearity=Nonlinearity("power", mu=mu, p=p))

    @property
    def laplacian_principal(self) -> bool:
        return self.metric is None

    @property
    def has_lower_order(self) -> bool:
        return self.b != 0 or self.c != 0 or any(self.bj)

    @property
    def is_free(self) -> bool:
        return (self.kind == "linear" and self.forcing is None and not self.has_lower_order)

    def describe(self) -> str:
        metric = "identity" if self.metric is None else getattr(self.metric, "describe", lambda: repr(self.metric))()
        if self.forcing is None:
            forcing = "none"
        elif hasattr(self.forcing, "describe"):
            forcing = self.forcing.describe()
        else:
            forcing = getattr(self.forcing, "__qualname__", "callable")
        return (f"kind={self.kind};metric={metric};F={self.nonlinearity.describe()};"
                f"b={self.b};bj={self.bj};c={self.c};forcing={forcing}")


def spec_hash(spec: EquationSpec) -> str:
    return hashlib.sha256(spec.describe().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PicardConfig:
    max_iters: int = 12
    tol: float = 1e-10
    window: float | None = None
    min_window: float = 1e-3


@dataclass(frozen=True)
class BlowupConfig:
    """Blow-up monitoring.

    A step whose sup-norm ``|u|_inf + |u_t|_inf`` exceeds ``sup_threshold`` is
    recomputed ``confirm_halvings`` times with halved steps before the blow-up
    is declared.  With ``adaptive``, a step that grows the sup-norm by more than
    ``growth_tol`` (relative, once above ``growth_floor``) is rejected and the
    step halved, up to ``max_halvings`` times.
    """

    sup_threshold: float = 1e6
    action: str = "halt"
    confirm_halvings: int = 2
    adaptive: bool = True
    growth_tol: float = 0.25
    growth_floor: float = 10.0
    max_halvings: int = 40

    def __post_init__(self):
        if self.action not in ("halt", "record"):
            raise ValueError(f"blow-up action must be 'halt' or 'record', got {self.action!r}")
        if self.sup_threshold <= 0:
            raise ValueError("sup_threshold must be positive")


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_max: float
    method: str = "rk4"
    picard: PicardConfig = PicardConfig()
    blowup: BlowupConfig = BlowupConfig()
    k: int = 0
    sample_every: int = 1
    store_states: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.k not in (0, 1):
            raise ValueError("k must be 0 or 1")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


def rk4_stability_bound(d: int, G_hat: float) -> float:
    """Largest RK4 step allowed for a coefficient bound ``sum_jk |g^jk| <= G_hat``."""
    return 0.5 / math.sqrt(d * max(G_hat, 1e-300))


# -- trajectory -----------------------------------------------------------------

@dataclass(frozen=True)
class BlowUp:
    t: float
    sup_u: float
    sup_ut: float
    reason: str = "threshold"


@dataclass(frozen=True)
class Sample:
    t: float
    state: WaveState | None
    energy: EnergyBreakdown
    a: EnergyA
    sup_u: float
    sup_ut: float
    seam_tail: float
    dt: float


@dataclass
class Trajectory:
    box: LatticeBox
    spec: EquationSpec
    k: int = 0
    samples: list[Sample] = field(default_factory=list)
    blowup: BlowUp | None = None
    info: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "blew-up" if self.blowup is not None else "completed"

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> list[WaveState]:
        return [s.state for s in self.samples]

    @property
    def final(self) -> WaveState:
        return self.samples[-1].state

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy.total for s in self.samples])

    @property
    def a_values(self) -> np.ndarray:
        return np.array([s.a.value for s in self.samples])

    @property
    def t_end(self) -> float:
        return self.blowup.t if self.blowup is not None else self.samples[-1].t

    def energy_drift(self) -> float:
        """max_t |E(t) - E(0)| / max(|E(0)|, tiny)."""
        E = self.energies
        return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))

    def append(self, u: np.ndarray, ut: np.ndarray, t: float, dt: float, store: bool = True) -> None:
        state = WaveState(Field(self.box, u), Field(self.box, ut), t)
        self.samples.append(sample_state(state, self.spec, self.k, dt, keep=store))


def sample_state(state: WaveState, spec: EquationSpec, k: int, dt: float = 0.0, keep: bool = True) -> Sample:
    nl = spec.nonlinearity
    with np.errstate(over="ignore"):  # record-mode runs may continue past the threshold
        energy = nlw_energy(state, nl.mu, nl.p) if nl.kind == "power" else linear_energy(state)
    return Sample(
        t=state.t,
        state=state if keep else None,
        energy=energy,
        a=energy_a(state, k),
        sup_u=float(np.max(np.abs(state.u.values))),
        sup_ut=float(np.max(np.abs(state.ut.values))),
        seam_tail=seam_tail_mass(state.u, state.box),
        dt=dt,
    )


# -- right-hand sides -----------------------------------------------------------

@lru_cache(maxsize=32)
def _symbols(box: LatticeBox):
    d = box.d
    parts = [np.ascontiguousarray(partial_symbol(box, j)) for j in range(1, d + 1)]
    mixed = [[parts[j] * parts[k] for k in range(d)] for j in range(d)]
    return parts, mixed, laplacian_symbol(box), k_symbol(box)


def _gradient(uh: np.ndarray, box: LatticeBox) -> list[np.ndarray]:
    parts = _symbols(box)[0]
    return [np.fft.ifftn(m * uh) for m in parts]


def _principal(uh: np.ndarray, box: LatticeBox, G) -> np.ndarray:
    """g^{jk} d_j d_k u for a metric value ``G`` (None, scalar field or (d, d, ...) array)."""
    _, mixed, lap, _ = _symbols(box)
    if G is None:
        return np.fft.ifftn(lap * uh)
    G = np.asarray(G)
    if G.ndim == box.d + 2:
        out = np.zeros(box.shape, dtype=complex)
        for j in range(box.d):
            for k in range(box.d):
                out += G[j, k] * np.fft.ifftn(mixed[j][k] * uh)
        return out
    return G * np.fft.ifftn(lap * uh)


def coefficient_sup(G, box: LatticeBox) -> float:
    """sup_x sum_jk |g^jk(x)|."""
    if G is None:
        return float(box.d)
    G = np.asarray(G)
    if G.ndim == box.d + 2:
        return float(np.max(np.sum(np.abs(G), axis=(0, 1))))
    return float(box.d * np.max(np.abs(G)))


def _lower_order(u, ut, grad, spec: EquationSpec, t: float):
    out = 0.0
    if spec.b:
        out = out - spec.b * ut
    for j, bj in enumerate(spec.bj):
        if bj:
            out = out - bj * grad[j]
    if spec.c:
        out = out - spec.c * u
    if spec.forcing is not None:
        out = out + np.asarray(spec.forcing(t)).reshape(u.shape)
    return out


def _needs_grad(spec: EquationSpec) -> bool:
    return (spec.nonlinearity.needs_grad or any(spec.bj)
            or (spec.metric is not None and getattr(spec.metric, "needs_grad", True)))


def acceleration(u: np.ndarray, ut: np.ndarray, t: float, spec: EquationSpec, box: LatticeBox) -> np.ndarray:
    """u_tt as a function of the current state."""
    uh = np.fft.fftn(u)
    grad = _gradient(uh, box) if _needs_grad(spec) else None
    G = None if spec.metric is None else spec.metric(u, ut, grad)
    return _principal(uh, box, G) + spec.nonlinearity(u, ut, grad) + _lower_order(u, ut, grad, spec, t)


def non_principal(u: np.ndarray, ut: np.ndarray, t: float, spec: EquationSpec, box: LatticeBox):
    """Everything in u_tt except the Laplacian (for exponential integrators)."""
    grad = _gradient(np.fft.fftn(u), box) if _needs_grad(spec) else None
    return spec.nonlinearity(u, ut, grad) + _lower_order(u, ut, grad, spec, t)


def pde_residual(u: np.ndarray, ut: np.ndarray, utt: np.ndarray, t: float, spec: EquationSpec, box: LatticeBox) -> float:
    """||u_tt - RHS(u, u')||_2 for a given second time derivative."""
    return float(np.linalg.norm((utt - acceleration(u, ut, t, spec, box)).ravel()))


# -- steppers -------------------------------------------------------------------

def _check_finite(u, v, t):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        with np.errstate(invalid="ignore"):
            su = float(np.nanmax(np.abs(u))) if np.any(np.isfinite(u)) else math.inf
            sv = float(np.nanmax(np.abs(v))) if np.any(np.isfinite(v)) else math.inf
        raise BlowUpError(t, su, sv, "nonfinite")


def _rk4(u, v, t, h, accel):
    k1u, k1v = v, accel(u, v, t)
    k2u, k2v = v + 0.5 * h * k1v, accel(u + 0.5 * h * k1u, v + 0.5 * h * k1v, t + 0.5 * h)
    k3u, k3v = v + 0.5 * h * k2v, accel(u + 0.5 * h * k2u, v + 0.5 * h * k2v, t + 0.5 * h)
    k4u, k4v = v + h * k3v, accel(u + h * k3u, v + h * k3v, t + h)
    un = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
    vn = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return un, vn


def rk4_step(state: WaveState, dt: float, spec: EquationSpec) -> WaveState:
    """One classical RK4 step of the first-order system for (u, u_t)."""
    box = state.box
    with np.errstate(over="ignore", invalid="ignore"):
        un, vn = _rk4(state.u.values, state.ut.values, state.t, dt,
                      lambda u, v, t: acceleration(u, v, t, spec, box))
    _check_finite(un, vn, state.t + dt)
    return WaveState(Field(box, un), Field(box, vn), state.t + dt)


class _Propagator:
    """Free wave propagator over a step ``h`` acting on Fourier coefficients."""

    def __init__(self, box: LatticeBox, h: float):
        K = _symbols(box)[3]
        self.c = np.cos(h * K)
        self.s = sinc_t(K, h)
        self.ks = -(K * K) * self.s  # -K sin(hK)

    def __call__(self, uh, vh):
        return self.c * uh + self.s * vh, self.ks * uh + self.c * vh


def exact_linear_step(
    state: WaveState,
    dt: float,
    forcing: Callable[[float], np.ndarray] | None = None,
) -> WaveState:
    """Advance u_tt = Laplacian(u) + forcing(t) by ``dt``.

    The homogeneous part is propagated exactly with cos(dt K) and sin(dt K)/K;
    the Duhamel integral of the forcing uses Simpson's rule on the step.
    """
    box = state.box
    P = _Propagator(box, dt)
    uh, vh = P(np.fft.fftn(state.u.values), np.fft.fftn(state.ut.values))
    if forcing is not None:
        t0 = state.t
        K = _symbols(box)[3]
        F0, Fm, F1 = (np.fft.fftn(np.asarray(forcing(t0 + s)).reshape(box.shape)) for s in (0.0, 0.5 * dt, dt))
        # integrand sin(K(dt-s))/K * F(s) for u and cos(K(dt-s)) * F(s) for u_t
        uh = uh + dt / 6.0 * (sinc_t(K, dt) * F0 + 4.0 * sinc_t(K, 0.5 * dt) * Fm)
        vh = vh + dt / 6.0 * (np.cos(dt * K) * F0 + 4.0 * np.cos(0.5 * dt * K) * Fm + F1)
    u, v = np.fft.ifftn(uh), np.fft.ifftn(vh)
    _check_finite(u, v, state.t + dt)
    return WaveState(Field(box, u), Field(box, v), state.t + dt)


def exponential_duhamel_step(state: WaveState, dt: float, spec: EquationSpec) -> WaveState:
    """Integrating-factor RK4: free part exact, the remaining terms by RK4 in the
    interaction picture.  Requires the Laplacian as principal part."""
    if not spec.laplacian_principal:
        raise ValueError("exponential_duhamel needs g^jk = delta_jk")
    box = state.box
    with np.errstate(over="ignore", invalid="ignore"):
        un, vn = _lawson(state.u.values, state.ut.values, state.t, dt, spec, box)
    _check_finite(un, vn, state.t + dt)
    return WaveState(Field(box, un), Field(box, vn), state.t + dt)


def _lawson(u, v, t, h, spec, box, props=None):
    full, half = props or (_Propagator(box, h), _Propagator(box, 0.5 * h))
    fft, ifft = np.fft.fftn, np.fft.ifftn

    def N(uh, vh, tt):
        return fft(non_principal(ifft(uh), ifft(vh), tt, spec, box))

    uh, vh = fft(u), fft(v)
    k1 = N(uh, vh, t)
    hu, hv = half(uh, vh)
    a_u, a_v = half(np.zeros_like(uh), k1)
    k2 = N(hu + 0.5 * h * a_u, hv + 0.5 * h * a_v, t + 0.5 * h)
    k3 = N(hu, hv + 0.5 * h * k2, t + 0.5 * h)
    k3u, k3v = half(np.zeros_like(uh), k3)
    fu, fv = full(uh, vh)
    k4 = N(fu + h * k3u, fv + h * k3v, t + h)
    z = np.zeros_like(uh)
    p1u, p1v = full(z, k1)
    p23u, p23v = half(z, k2 + k3)
    un = fu + h / 6.0 * (p1u + 2.0 * p23u)
    vn = fv + h / 6.0 * (p1v + 2.0 * p23v + k4)
    return ifft(un), ifft(vn)


# -- evolution driver ------------------------------------------------------------

def _make_stepper(spec: EquationSpec, box: LatticeBox, method: str):
    if method == "rk4":
        def step(u, v, t, h):
            return _rk4(u, v, t, h, lambda uu, vv, tt: acceleration(uu, vv, tt, spec, box))
        return step
    if method == "exact_linear":
        if not (spec.kind == "linear" and spec.laplacian_principal and not spec.has_lower_order):
            raise ValueError("exact_linear needs a linear equation with the Laplacian and no lower-order terms")

        def step(u, v, t, h):
            s = exact_linear_step(WaveState(Field(box, u), Field(box, v), t), h, spec.forcing)
            return s.u.values, s.ut.values
        return step
    if method == "exponential_duhamel":
        if not spec.laplacian_principal:
            raise ValueError("exponential_duhamel needs g^jk = delta_jk")
        cache: dict[float, tuple] = {}

        def step(u, v, t, h):
            if h not in cache:
                cache[h] = (_Propagator(box, h), _Propagator(box, 0.5 * h))
            return _lawson(u, v, t, h, spec, box, cache[h])
        return step
    raise ValueError(f"method {method!r} has no single-step form")


def _sup(u, v) -> float:
    return float(np.max(np.abs(u)) + np.max(np.abs(v)))


def _check_rk4_stability(u, v, spec: EquationSpec, box: LatticeBox, dt: float) -> None:
    if spec.metric is None:
        G = None
    else:
        grad = _gradient(np.fft.fftn(u), box) if _needs_grad(spec) else None
        G = spec.metric(u, v, grad)
    bound = rk4_stability_bound(box.d, coefficient_sup(G, box))
    if dt > bound:
        raise ValueError(f"dt={dt} exceeds the RK4 stability bound {bound:.4g}")


def evolve(f: Field, g: Field, spec: EquationSpec, config: SolverConfig) -> Trajectory:
    """Integrate from (f, g) at t = 0 to ``config.t_max`` or until blow-up.

    The sup-norm ``|u|_inf + |u_t|_inf`` (the continuation quantity) is
    monitored after every step; see :class:`BlowupConfig`.
    """
    if f.box != g.box:
        raise ValueError("f and g must share a box")
    if config.method == "picard":
        return _evolve_picard(f, g, spec, config)
    box = f.box
    step = _make_stepper(spec, box, config.method)
    bc = config.blowup
    traj = Trajectory(box, spec, config.k, info={"method": config.method})
    u, v = np.array(f.values), np.array(g.values)
    if config.method == "rk4":
        _check_rk4_stability(u, v, spec, box, config.dt)
    t, h = 0.0, config.dt
    traj.append(u, v, t, h, config.store_states)
    n_steps, halvings, last_recorded = 0, 0, 0
    first_crossing: BlowUp | None = None
    eps_t = 1e-12 * config.t_max

    def attempt(h_try):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                un, vn = step(u, v, t, h_try)
            _check_finite(un, vn, t + h_try)
            return un, vn, None
        except BlowUpError as exc:
            return None, None, exc

    def substeps(h_try, parts):
        uu, vv, tt = u, v, t
        for _ in range(parts):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    uu, vv = step(uu, vv, tt, h_try / parts)
                _check_finite(uu, vv, tt + h_try / parts)
            except BlowUpError:
                return None, None
            tt += h_try / parts
        return uu, vv

    while t < config.t_max - eps_t:
        h_step = min(h, config.t_max - t)
        un, vn, err = attempt(h_step)
        old_sup = _sup(u, v)
        if un is not None and bc.adaptive:
            new_sup = _sup(un, vn)
            if new_sup > bc.growth_floor and new_sup > (1 + bc.growth_tol) * old_sup and halvings < bc.max_halvings:
                h *= 0.5
                halvings += 1
                continue
        if un is None:
            if bc.adaptive and halvings < bc.max_halvings:
                h *= 0.5
                halvings += 1
                continue
            traj.blowup = first_crossing or err.record
            break
        new_sup = _sup(un, vn)
        if new_sup > bc.sup_threshold:
            confirmed = True
            for level in range(1, bc.confirm_halvings + 1):
                ru, rv = substeps(h_step, 2**level)
                if ru is not None and _sup(ru, rv) <= bc.sup_threshold:
                    confirmed = False
                    un, vn = ru, rv
                    break
                if ru is not None:
                    un, vn = ru, rv
            if confirmed:
                rec = BlowUp(t + h_step, float(np.max(np.abs(un))), float(np.max(np.abs(vn))), "threshold")
                if bc.action == "halt":
                    traj.blowup = rec
                    u, v, t = un, vn, t + h_step
                    traj.append(u, v, t, h_step, config.store_states)
                    break
                if first_crossing is None:
                    first_crossing = rec
            else:
                h *= 0.5
        u, v, t = un, vn, t + h_step
        n_steps += 1
        if n_steps % config.sample_every == 0:
            traj.append(u, v, t, h_step, config.store_states)
            last_recorded = n_steps
    if traj.blowup is None and n_steps != last_recorded:
        traj.append(u, v, t, h, config.store_states)
    if traj.blowup is None and first_crossing is not None:
        traj.blowup = first_crossing
    traj.info.update(steps=n_steps, halvings=halvings)
    return traj


# -- Picard iteration --------------------------------------------------------------

@dataclass
class PicardResult:
    trajectory: Trajectory
    sup_C: list[float]
    window: float
    converged: bool
    u_nodes: np.ndarray = field(repr=False)
    ut_nodes: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)

    @property
    def iterations(self) -> int:
        return len(self.sup_C)

    @property
    def ratios(self) -> list[float]:
        C = self.sup_C
        return [C[i + 1] / C[i] for i in range(len(C) - 1) if C[i] > 0]


def _frozen_coefficients(spec: EquationSpec, box: LatticeBox, u, v):
    """(G, F) evaluated on the previous iterate."""
    grad = _gradient(np.fft.fftn(u), box) if _needs_grad(spec) else None
    G = None if spec.metric is None else spec.metric(u, v, grad)
    return G, spec.nonlinearity(u, v, grad)


def _picard_window(f0, g0, t0, T, spec, box, config: SolverConfig):
    pc = config.picard
    n = max(1, math.ceil(T / config.dt - 1e-9))
    h = T / n
    times = t0 + h * np.arange(n + 1)
    shape = (n + 1,) + box.shape
    U_prev = np.zeros(shape, dtype=complex)
    V_prev = np.zeros(shape, dtype=complex)
    sup_C: list[float] = []
    for m in range(pc.max_iters):
        # coefficients from the previous iterate at nodes and Hermite midpoints
        nodes = [_frozen_coefficients(spec, box, U_prev[i], V_prev[i]) for i in range(n + 1)]
        mids = []
        for i in range(n):
            um = 0.5 * (U_prev[i] + U_prev[i + 1]) + h / 8.0 * (V_prev[i] - V_prev[i + 1])
            vm = 1.5 * (U_prev[i + 1] - U_prev[i]) / h - 0.25 * (V_prev[i] + V_prev[i + 1])
            mids.append(_frozen_coefficients(spec, box, um, vm))
        U = np.empty(shape, dtype=complex)
        V = np.empty(shape, dtype=complex)
        U[0], V[0] = f0, g0
        for i in range(n):
            coeffs = {0.0: nodes[i], 0.5: mids[i], 1.0: nodes[i + 1]}
            ti = times[i]

            def accel(uu, vv, tt, ti=ti, coeffs=coeffs):
                frac = round((tt - ti) / h * 2) / 2
                G, F = coeffs[frac]
                uh = np.fft.fftn(uu)
                grad = _gradient(uh, box) if any(spec.bj) else None
                return _principal(uh, box, G) + F + _lower_order(uu, vv, grad, spec, tt)

            with np.errstate(over="ignore", invalid="ignore"):
                U[i + 1], V[i + 1] = _rk4(U[i], V[i], ti, h, accel)
            _check_finite(U[i + 1], V[i + 1], times[i + 1])
        C = max(l2k_norm(U[i] - U_prev[i], box, config.k) + l2k_norm(V[i] - V_prev[i], box, config.k)
                for i in range(n + 1))
        sup_C.append(float(C))
        U_prev, V_prev = U, V
        if C < pc.tol:
            return U, V, times, sup_C, True
        if m >= 2 and sup_C[-1] >= 0.5 * sup_C[-2]:
            return U, V, times, sup_C, False
    return U_prev, V_prev, times, sup_C, False


def picard_solve(f: Field, g: Field, spec: EquationSpec, config: SolverConfig,
                 window: float | None = None) -> PicardResult:
    """Solve on one window by iterating linear problems with frozen coefficients.

    Iterate m solves ``u_tt = g(u_{m-1}, u'_{m-1}) d_jk u + F(u_{m-1}, u'_{m-1})``
    (plus lower-order terms on ``u_m``) from the same data, starting at
    ``u_{-1} = 0``.  The window is halved while the iteration fails to contract
    (``C_{m+1} >= C_m / 2``).  Raises :class:`PicardNonConvergence` when
    ``max_iters`` is exhausted or the window cannot shrink further.
    """
    box = f.box
    pc = config.picard
    T = window or pc.window or config.t_max
    while True:
        U, V, times, sup_C, ok = _picard_window(f.values, g.values, 0.0, T, spec, box, config)
        if ok:
            break
        if len(sup_C) >= pc.max_iters:
            raise PicardNonConvergence(
                f"no convergence within {pc.max_iters} iterates on window {T:g}", sup_C)
        if T / 2 < pc.min_window:
            raise PicardNonConvergence(f"iteration does not contract even on window {T:g}", sup_C)
        log.info("picard: not contracting on window %g, halving", T)
        T /= 2
    traj = Trajectory(box, spec, config.k, info={"method": "picard", "sup_C": sup_C, "window": T})
    for i in range(len(times)):
        if i % config.sample_every == 0 or i == len(times) - 1:
            traj.append(U[i], V[i], float(times[i]), T / (len(times) - 1), config.store_states)
    return PicardResult(traj, sup_C, T, True, U, V, times)


def _evolve_picard(f: Field, g: Field, spec: EquationSpec, config: SolverConfig) -> Trajectory:
    box = f.box
    pc = config.picard
    T = pc.window or config.t_max
    traj = Trajectory(box, spec, config.k, info={"method": "picard", "windows": []})
    u, v, t = np.array(f.values), np.array(g.values), 0.0
    traj.append(u, v, t, config.dt, config.store_states)
    while t < config.t_max - 1e-12 * config.t_max:
        span = min(T, config.t_max - t)
        try:
            res = picard_solve(Field(box, u), Field(box, v), spec, config, window=span)
        except BlowUpError as exc:
            traj.blowup = replace(exc.record, t=exc.record.t + t)
            break
        T = res.window
        for s in res.trajectory.samples[1:]:
            traj.samples.append(replace(s, t=s.t + t, state=None if s.state is None else replace(s.state, t=s.state.t + t)))
        traj.info["windows"].append({"t0": t, "length": res.window, "sup_C": res.sup_C})
        u, v = res.u_nodes[-1], res.ut_nodes[-1]
        t += res.window
        if _sup(u, v) > config.blowup.sup_threshold:
            traj.blowup = BlowUp(t, float(np.max(np.abs(u))), float(np.max(np.abs(v))), "threshold")
            break
    return traj


def picard_residual(result: PicardResult, spec: EquationSpec) -> float:
    """max over interior nodes of ||u_tt - RHS||_2, u_tt by a fourth-order
    centred second difference in time."""
    U, V, t = result.u_nodes, result.ut_nodes, result.times
    return nodal_residual(U, V, t, spec, result.trajectory.box)


def nodal_residual(U: np.ndarray, V: np.ndarray, times: np.ndarray, spec: EquationSpec, box: LatticeBox) -> float:
    h = times[1] - times[0]
    if len(times) < 5:
        raise ValueError("need at least 5 uniformly spaced nodes")
    worst = 0.0
    for i in range(2, len(times) - 2):
        utt = (-U[i + 2] + 16 * U[i + 1] - 30 * U[i] + 16 * U[i - 1] - U[i - 2]) / (12 * h * h)
        worst = max(worst, pde_residual(U[i], V[i], utt, float(times[i]), spec, box))
    return worst


def trajectory_residual(traj: Trajectory) -> float:
    """Residual of a uniformly sampled trajectory with stored states."""
    U = np.array([s.state.u.values for s in traj.samples])
    V = np.array([s.state.ut.values for s in traj.samples])
    t = traj.times
    if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
        raise ValueError("trajectory samples are not uniformly spaced")
    return nodal_residual(U, V, t, traj.spec, traj.box)


# -- blow-up reference ---------------------------------------------------------------

@dataclass(frozen=True)
class BlowupReference:
    """Spatially constant focusing solution u = C_p (t0 - t)^(-2/(p-1)) of u_tt = u^p."""

    p: float
    t0: float

    @property
    def c_p(self) -> float:
        p = self.p
        return (2.0 * (p + 1) / (p - 1) ** 2) ** (1.0 / (p - 1))

    def u(self, t):
        return self.c_p * (self.t0 - np.asarray(t, dtype=float)) ** (-2.0 / (self.p - 1))

    def ut(self, t):
        p = self.p
        return 2.0 / (p - 1) * self.c_p * (self.t0 - np.asarray(t, dtype=float)) ** (-(p + 1) / (p - 1))

    def utt(self, t):
        p = self.p
        return (2.0 / (p - 1)) * ((p + 1) / (p - 1)) * self.c_p * (self.t0 - np.asarray(t, dtype=float)) ** (-2.0 * p / (p - 1))

    @property
    def u0(self) -> float:
        return float(self.u(0.0))

    @property
    def ut0(self) -> float:
        return float(self.ut(0.0))

    def sup_crossing_time(self, threshold: float) -> float:
        """Time at which u + u_t reaches ``threshold``."""
        from scipy.optimize import brentq
        return brentq(lambda t: float(self.u(t) + self.ut(t)) - threshold, 0.0, self.t0 * (1 - 1e-15))


def blowup_reference(p: float, t0: float) -> BlowupReference:
    if p <= 1:
        raise ValueError("p must exceed 1")
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    return BlowupReference(p, t0)


# -- Lipschitz dependence ------------------------------------------------------------

@dataclass
class LipschitzReport:
    scales: np.ndarray
    ratios: np.ndarray  # (n_directions, n_scales)

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def spread(self) -> float:
        """max over directions of (max/min - 1) across scales."""
        r = self.ratios
        return float(np.max(r.max(axis=1) / r.min(axis=1) - 1.0))


def lipschitz_dependence_probe(
    f: Field,
    g: Field,
    perturbations: Sequence[tuple[Field, Field]],
    spec: EquationSpec,
    config: SolverConfig,
    scales: Sequence[float] = tuple(2.0**-k for k in range(4, 10)),
) -> LipschitzReport:
    """sup_t ||u_delta - u||_{l^{2,k}} / ||(delta f, delta g)||_{l^{2,k}} over dyadic scales."""
    box = f.box
    k = config.k
    cfg = replace(config, blowup=replace(config.blowup, adaptive=False), store_states=True)
    base = evolve(f, g, spec, cfg)
    if base.blowup is not None:
        raise BlowUpError(base.blowup.t, base.blowup.sup_u, base.blowup.sup_ut, "base run")
    ref = [s.state.u.values for s in base.samples]
    ratios = []
    for df, dg in perturbations:
        row = []
        for s in scales:
            size = s * (l2k_norm(df.values, box, k) + l2k_norm(dg.values, box, k))
            if size == 0:
                continue
            run = evolve(f + df * s, g + dg * s, spec, cfg)
            if run.blowup is not None:
                raise BlowUpError(run.blowup.t, run.blowup.sup_u, run.blowup.sup_ut, "perturbed run")
            diff = max(l2k_norm(a.state.u.values - b, box, k) for a, b in zip(run.samples, ref))
            row.append(diff / size)
        ratios.append(row)
    return LipschitzReport(np.asarray(scales), np.asarray(ratios))


# -- checkpoints -------------------------------------------------------------------

def format_checkpoint(state: WaveState, spec_hex: str) -> str:
    return format_snapshot(state.u) + format_snapshot(state.ut) + f"t={state.t!r} spec_hash={spec_hex}\n"


def write_checkpoint(path: str | Path, state: WaveState, spec_hex: str) -> None:
    Path(path).write_text(format_checkpoint(state, spec_hex))


def read_checkpoint(path: str | Path) -> tuple[WaveState, str]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    n = int(lines[0].split()[3].removeprefix("L=")) ** int(lines[0].split()[2].removeprefix("d="))
    u = parse_snapshot(lines[: n + 1])
    ut = parse_snapshot(lines[n + 1: 2 * n + 2])
    meta = dict(item.split("=", 1) for item in lines[2 * n + 2].split())
    return WaveState(u, ut, float(meta["t"])), meta["spec_hash"]
