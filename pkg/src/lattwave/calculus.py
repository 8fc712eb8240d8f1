"""Direct-space operators: the convolution kernel of the nonlocal partial
derivative, forward differences, the stencil Laplacian and the l^2 pairing.

On the torus the partial derivative is convolution with the periodized kernel
``phi_per(a) = sum_n phi(a + nL)``.  Writing
``1/(4m^2 - 1) = (1/(2m-1) - 1/(2m+1)) / 2`` turns each one-sided tail of that
series into a difference of digamma values, so the kernel is evaluated as an
explicit partial sum over ``|n| <= tail_terms`` plus a closed-form remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma

from .lattice import Field, LatticeBox

TAIL_BOUND_LIMIT = 1e-13
_EPS = np.finfo(float).eps


def kernel_raw(a: int | np.ndarray) -> np.ndarray | complex:
    """Infinite-lattice kernel value -4i / (pi (4a^2 - 1)) at offset ``a``."""
    a = np.asarray(a, dtype=float)
    out = np.asarray(-4j / (np.pi * (4.0 * a * a - 1.0)))
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Kernel:
    """Periodized kernel along axis ``j`` on the signed offsets ``[-L/2, L/2)``."""

    box: LatticeBox
    j: int
    offsets: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    tail_terms: int
    tail_bound: float
    tail_correction: float

    def storage(self) -> np.ndarray:
        """Values reordered to FFT storage order (offset ``a`` at index ``a mod L``)."""
        out = np.empty(self.box.L, dtype=complex)
        out[self.offsets % self.box.L] = self.values
        return out

    def value(self, a: int) -> complex:
        return complex(self.values[int(a) + self.box.L // 2])


def _one_sided_tail(a: np.ndarray, L: int, n0: int) -> tuple[np.ndarray, np.ndarray]:
    """sum_{n >= n0} 1/(4(a + nL)^2 - 1) in closed form, plus a rounding bound."""
    lo = n0 + (2 * a - 1) / (2.0 * L)
    hi = n0 + (2 * a + 1) / (2.0 * L)
    psi_lo, psi_hi = digamma(lo), digamma(hi)
    tail = (psi_hi - psi_lo) / (4.0 * L)
    err = 8 * _EPS * (np.abs(psi_lo) + np.abs(psi_hi)) / (4.0 * L)
    return tail, err


def kernel_periodized(box: LatticeBox, j: int = 1, tail_terms: int = 64) -> Kernel:
    if not 1 <= j <= box.d:
        raise ValueError(f"axis {j} out of range for d={box.d}")
    if tail_terms < 1:
        raise ValueError("tail_terms must be >= 1")
    L = box.L
    a = np.arange(-L // 2, L // 2)
    n = np.arange(-tail_terms, tail_terms + 1)
    m = a[:, None] + L * n[None, :]
    terms = 1.0 / (4.0 * m.astype(float) ** 2 - 1.0)
    partial = terms.sum(axis=1)
    right, err_r = _one_sided_tail(a, L, tail_terms + 1)
    left, err_l = _one_sided_tail(-a, L, tail_terms + 1)
    s = partial + right + left
    scale = 4.0 / np.pi
    rounding = scale * (err_r + err_l + 4 * _EPS * np.abs(terms).sum(axis=1))
    bound = float(rounding.max())
    if bound > TAIL_BOUND_LIMIT:
        raise ArithmeticError(f"kernel tail bound {bound:.3e} exceeds {TAIL_BOUND_LIMIT:g}")
    return Kernel(
        box=box,
        j=j,
        offsets=a,
        values=-1j * scale * s,
        tail_terms=tail_terms,
        tail_bound=bound,
        tail_correction=float(scale * np.max(np.abs(right + left))),
    )


def kernel_closed_form(L: int, a: np.ndarray | int) -> np.ndarray:
    """Cotangent form of the periodized kernel, -i/L [cot(pi(2a-1)/2L) - cot(pi(2a+1)/2L)]."""
    a = np.asarray(a, dtype=float)
    c = lambda z: 1.0 / np.tan(z)
    return -1j / L * (c(np.pi * (2 * a - 1) / (2 * L)) - c(np.pi * (2 * a + 1) / (2 * L)))


def _circulant(kernel: Kernel) -> np.ndarray:
    col = kernel.storage()
    L = kernel.box.L
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    return col[idx]


def conv_partial(f: Field, j: int, kernel: Kernel | None = None) -> Field:
    """Circular convolution of ``f`` with the periodized kernel along axis ``j``."""
    if kernel is None:
        kernel = kernel_periodized(f.box, j)
    if kernel.box != f.box:
        raise ValueError(f"box mismatch: {kernel.box} vs {f.box}")
    if kernel.j != j:
        raise ValueError(f"kernel is for axis {kernel.j}, not {j}")
    C = _circulant(kernel)
    moved = np.moveaxis(f.values, j - 1, -1)
    out = moved @ C.T
    return Field(f.box, np.moveaxis(out, -1, j - 1))


def difference(f: Field, j: int) -> Field:
    """Forward difference D_j u(m) = u(m + e_j) - u(m)."""
    if not 1 <= j <= f.box.d:
        raise ValueError(f"axis {j} out of range for d={f.box.d}")
    return Field(f.box, np.roll(f.values, -1, axis=j - 1) - f.values)


def stencil_laplacian(f: Field) -> Field:
    v = f.values
    out = -2.0 * f.box.d * v
    for ax in range(f.box.d):
        out = out + np.roll(v, 1, axis=ax) + np.roll(v, -1, axis=ax)
    return Field(f.box, out)


def inner(f: Field, g: Field) -> complex:
    """<f, g> = sum_k f(k) conj(g(k))."""
    if f.box != g.box:
        raise ValueError(f"box mismatch: {f.box} vs {g.box}")
    return complex(np.vdot(g.values, f.values))


def skew_defect(u: Field, v: Field, j: int, derivative=None) -> float:
    """|<d_j u, v> + <u, d_j v>|; zero for a skew-adjoint ``derivative``."""
    if derivative is None:
        from .spectral import partial as derivative
    return abs(inner(derivative(u, j), v) + inner(u, derivative(v, j)))
