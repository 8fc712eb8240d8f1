"""Weighted l^p norms, the discrete Sobolev seminorm and the weak l^{1,1}
functional, plus empirical operator-norm probes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import Field, LatticeBox, delta_field
from .spectral import SpectralField


@dataclass(frozen=True)
class NormSpec:
    """Exponent ``p`` in [1, inf] and weight exponent ``alpha``."""

    p: float = 2.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.p >= 1 or math.isinf(self.p)):
            raise ValueError(f"p must be >= 1 or inf, got {self.p}")


def _values(f: Field | np.ndarray) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)


def lp_norm(values: np.ndarray, p: float) -> float:
    a = np.abs(np.asarray(values)).ravel()
    if math.isinf(p):
        return float(a.max(initial=0.0))
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    return float(np.sum(a**p) ** (1.0 / p))


def lp_alpha_norm(f: Field, spec: NormSpec | None = None, box: LatticeBox | None = None) -> float:
    """||f <m>^alpha||_{l^p}."""
    spec = spec or NormSpec()
    box = box or f.box
    v = _values(f).reshape(box.shape)
    if spec.alpha != 0:
        v = v * box.weights(spec.alpha)
    return lp_norm(v, spec.p)


def l2k_norm(values: np.ndarray, box: LatticeBox, k: int) -> float:
    """Shorthand for the l^{2,k} norm of a raw array."""
    v = np.asarray(values).reshape(box.shape)
    if k:
        v = v * box.weights(k)
    return lp_norm(v, 2)


def sobolev_seminorm(f: Field, p: float = 2.0) -> float:
    """||f||_{D^{1,p}} over the edges of the torus.

    Every undirected edge appears twice among ordered neighbour pairs, which
    the factor 1/2 cancels, so the sum below runs over forward edges once.
    """
    diffs = [np.roll(f.values, -1, axis=ax) - f.values for ax in range(f.box.d)]
    if math.isinf(p):
        return max(float(np.abs(D).max()) for D in diffs)
    return float(sum(np.sum(np.abs(D) ** p) for D in diffs) ** (1.0 / p))


def weak_l11_functional(g: Field) -> float:
    """sup_{a > 0} a * #{k : |g(k)| >= a / <k>}, computed exactly.

    The counting function only jumps at the values ``w_k = |g(k)| <k>``, so the
    supremum is attained at one of them: with ``w`` sorted decreasingly it is
    ``max_j (j + 1) w_(j)`` (ties resolve to the largest count automatically).
    """
    w = (np.abs(g.values) * g.box.weights(1.0)).ravel()
    w = np.sort(w[w > 0])[::-1]
    if w.size == 0:
        return 0.0
    return float(np.max(w * np.arange(1, w.size + 1)))


def empirical_operator_ratio(
    op: Callable[[Field], Field], spec: NormSpec, ensemble: Sequence[Field]
) -> float:
    """max over the ensemble of ||op f|| / ||f|| in the ``spec`` norm."""
    if len(ensemble) == 0:
        raise ValueError("ensemble must contain at least one field")
    best = 0.0
    for f in ensemble:
        den = lp_alpha_norm(f, spec)
        if den == 0:
            raise ValueError("ensemble fields must be nonzero")
        best = max(best, lp_alpha_norm(op(f), spec) / den)
    return best


def adversarial_ensemble(box: LatticeBox, n_random: int = 196, seed: int = 0) -> list[Field]:
    """Fixed test ensemble for operator-ratio probes.

    In order: delta at the origin, the decay profile <m>^-2, the Fourier modes
    with n = 1 and n = L/2 along axis 1, then ``n_random`` complex Gaussian
    fields from ``numpy.random.default_rng(seed)``.
    """
    fields = [delta_field(box), Field(box, box.weights(-2.0))]
    x1 = box.coord_grids[0]
    for n in (1, box.L // 2):
        fields.append(Field(box, np.exp(2j * np.pi * n * x1 / box.L)))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        fields.append(Field(box, rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)))
    return fields


def h1_torus_norm(F: SpectralField) -> float:
    """||F||_{L^2} + ||grad F||_{L^2} for a trigonometric polynomial on the torus.

    ``F`` is sampled on the frequency grid; the gradient is the exact derivative
    of its interpolant, i.e. multiplication of the lattice coefficients by
    ``-i m_j`` with signed ``m_j``.  L^2 norms use the normalised measure, under
    which the grid sum is exact for these polynomials.
    """
    box = F.box
    n = box.total
    coeffs = np.fft.ifftn(F.coeffs)
    l2 = math.sqrt(np.sum(np.abs(F.coeffs) ** 2) / n)
    grad_sq = 0.0
    for m in box.coord_grids:
        dF = np.fft.fftn(-1j * m * coeffs)
        grad_sq += np.sum(np.abs(dF) ** 2) / n
    return l2 + math.sqrt(grad_sq)


def isomorphism_ratio(F: SpectralField) -> float:
    """||F^-1 F||_{l^{2,1}} / ||F||_{H^1}."""
    u = np.fft.ifftn(F.coeffs)
    return l2k_norm(u, F.box, 1) / h1_torus_norm(F)
