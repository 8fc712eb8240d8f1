"""Discrete Fourier transform on the torus and diagonal (multiplier) operators.

Frequencies are the integers ``n_j in {0, ..., L-1}`` standing for
``x_j = 2*pi*n_j/L``, i.e. the torus is parametrised by ``[0, 2*pi)``.  On this
branch ``sin(x_j/2) >= 0``, which is what makes the 1-d identity
``d_1 = i*sqrt(-Laplacian)`` hold with the plain square root.

Conventions::

    forward:  F(u)(n) = sum_k u(k) exp(-i k.x_n)
    inverse:  u(k)    = L^-d sum_n F(u)(n) exp(i k.x_n)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lattice import Field, LatticeBox

SINC_TAYLOR_CUTOFF = 1e-6


@dataclass(frozen=True, eq=False)
class SpectralField:
    box: LatticeBox
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).reshape(self.box.shape)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True, eq=False)
class Multiplier:
    """Diagonal operator in frequency space."""

    box: LatticeBox
    values: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        v = np.array(np.broadcast_to(self.values, self.box.shape), dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __matmul__(self, other: "Multiplier") -> "Multiplier":
        """Composition (pointwise product)."""
        if other.box != self.box:
            raise ValueError("box mismatch")
        return Multiplier(self.box, self.values * other.values, f"{self.label}*{other.label}")

    def __call__(self, f: Field) -> Field:
        return apply(self, f)


def _check(box_a: LatticeBox, box_b: LatticeBox) -> None:
    if box_a != box_b:
        raise ValueError(f"box mismatch: {box_a} vs {box_b}")


def dft_forward(f: Field) -> SpectralField:
    return SpectralField(f.box, np.fft.fftn(f.values))


def dft_inverse(F: SpectralField) -> Field:
    return Field(F.box, np.fft.ifftn(F.coeffs))


def naive_dft(values: np.ndarray, inverse: bool = False) -> np.ndarray:
    """O(N^2) transform by explicit summation, same conventions as above.

    Kept as an independent check on the FFT path; only sensible for small boxes.
    """
    values = np.asarray(values, dtype=complex)
    shape = values.shape
    L = shape[0]
    half = L // 2
    idx = np.indices(shape).reshape(len(shape), -1)
    signed = np.where(idx < half, idx, idx - L)
    phase = 2j * np.pi / L * (signed.T @ idx)  # sites x frequencies
    if inverse:
        out = np.exp(phase) @ values.reshape(-1) / values.size
    else:
        out = np.exp(-phase).T @ values.reshape(-1)
    return out.reshape(shape)


@lru_cache(maxsize=64)
def _freq_sin(L: int) -> np.ndarray:
    """sin(pi n / L) for n = 0..L-1, with the exact zero and one at n = 0, L/2."""
    s = np.sin(np.pi * np.arange(L) / L)
    s[0] = 0.0
    s[L // 2] = 1.0
    s.setflags(write=False)
    return s


def _axis_view(box: LatticeBox, j: int, vec: np.ndarray) -> np.ndarray:
    shape = [1] * box.d
    shape[j] = box.L
    return np.broadcast_to(vec.reshape(shape), box.shape)


def partial_symbol(box: LatticeBox, j: int) -> np.ndarray:
    """2i sin(pi n_j / L) as a raw array (axis ``j`` is 1-based)."""
    if not 1 <= j <= box.d:
        raise ValueError(f"axis {j} out of range for d={box.d}")
    return _axis_view(box, j - 1, 2j * _freq_sin(box.L))


def partial_multiplier(box: LatticeBox, j: int) -> Multiplier:
    return Multiplier(box, partial_symbol(box, j), f"d{j}")


def laplacian_symbol(box: LatticeBox) -> np.ndarray:
    s2 = _freq_sin(box.L) ** 2
    return -4.0 * sum(_axis_view(box, j, s2) for j in range(box.d))


def laplacian_multiplier(box: LatticeBox) -> Multiplier:
    return Multiplier(box, laplacian_symbol(box), "lap")


def k_symbol(box: LatticeBox) -> np.ndarray:
    """K = 2 sqrt(sum_j sin^2(x_j/2)), the symbol of sqrt(-Laplacian)."""
    return np.sqrt(-laplacian_symbol(box))


def k_multiplier(box: LatticeBox) -> Multiplier:
    return Multiplier(box, k_symbol(box), "K")


def sinc_t(K: np.ndarray, t: float) -> np.ndarray:
    """sin(tK)/K, equal to t on K = 0."""
    K = np.asarray(K, dtype=float)
    x = t * K
    small = np.abs(x) < SINC_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, K)
    x2 = x * x
    return np.where(small, t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0), np.sin(x) / safe)


def propagator_pair(box: LatticeBox, t: float) -> tuple[Multiplier, Multiplier]:
    """(cos(tK), sin(tK)/K): the free wave propagators at time ``t``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    K = k_symbol(box)
    return (
        Multiplier(box, np.cos(t * K), f"cos({t}K)"),
        Multiplier(box, sinc_t(K, t), f"sinc({t}K)"),
    )


def apply(mult: Multiplier, f: Field) -> Field:
    """F^-1(mult * F f)."""
    _check(mult.box, f.box)
    return Field(f.box, np.fft.ifftn(mult.values * np.fft.fftn(f.values)))


def partial(f: Field, j: int) -> Field:
    """Nonlocal discrete partial derivative along axis ``j`` (1-based)."""
    return Field(f.box, np.fft.ifftn(partial_symbol(f.box, j) * np.fft.fftn(f.values)))


def gradient(f: Field) -> list[Field]:
    fh = np.fft.fftn(f.values)
    return [Field(f.box, np.fft.ifftn(partial_symbol(f.box, j) * fh)) for j in range(1, f.box.d + 1)]


def laplacian(f: Field) -> Field:
    return Field(f.box, np.fft.ifftn(laplacian_symbol(f.box) * np.fft.fftn(f.values)))
