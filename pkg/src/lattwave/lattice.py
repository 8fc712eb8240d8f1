"""Periodic lattice boxes, fields on them, and the field snapshot format.

The infinite lattice Z^d is modelled by the discrete torus (Z/LZ)^d.  Storage
follows the FFT convention: along each axis the array index ``i`` holds the
site with signed coordinate ``i`` if ``i < L/2`` and ``i - L`` otherwise, so
coordinates run over ``[-L/2, L/2)`` while the forward transform is a plain
``numpy.fft.fftn`` of the stored array.  Flattening is row-major (C order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SNAPSHOT_MAGIC = "lattwave-field"
SNAPSHOT_VERSION = "v1"


@dataclass(frozen=True)
class LatticeBox:
    """Periodic truncation of Z^d with ``L`` sites per axis."""

    d: int
    L: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or not 1 <= self.d <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d!r}")
        if not isinstance(self.L, (int, np.integer)) or self.L < 4:
            raise ValueError(f"L must be an integer >= 4, got {self.L!r}")
        if self.L % 2:
            raise ValueError(f"L must be even for signed coordinates, got {self.L}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def total(self) -> int:
        return self.L**self.d

    def axis_coords(self) -> np.ndarray:
        """Signed coordinate of each storage index along one axis."""
        i = np.arange(self.L)
        return np.where(i < self.L // 2, i, i - self.L)

    @cached_property
    def coord_grids(self) -> tuple[np.ndarray, ...]:
        # cached_property works on frozen dataclasses (writes straight to __dict__)
        grids = np.meshgrid(*([self.axis_coords()] * self.d), indexing="ij")
        for g in grids:
            g.setflags(write=False)
        return tuple(grids)

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """|m|^2 at every site, in storage layout."""
        out = sum(g.astype(float) ** 2 for g in self.coord_grids)
        out.setflags(write=False)
        return out

    def weights(self, alpha: float = 1.0) -> np.ndarray:
        """<m>^alpha at every site."""
        return (1.0 + self.norm_sq) ** (0.5 * alpha)

    def coord(self, index: int) -> tuple[int, ...]:
        """Signed coordinate of flat (row-major) storage index."""
        if not 0 <= index < self.total:
            raise IndexError(f"index {index} out of range for {self.total} sites")
        multi = np.unravel_index(index, self.shape)
        half = self.L // 2
        return tuple(int(i) if i < half else int(i) - self.L for i in multi)

    def index(self, m: Sequence[int]) -> int:
        """Flat storage index of the signed coordinate ``m``."""
        m = self._check_site(m)
        return int(np.ravel_multi_index(tuple(c % self.L for c in m), self.shape))

    def contains(self, m: Sequence[int]) -> bool:
        try:
            self._check_site(m)
        except ValueError:
            return False
        return True

    def _check_site(self, m: Sequence[int] | int) -> tuple[int, ...]:
        if np.isscalar(m):
            m = (m,)
        m = tuple(int(c) for c in m)
        if len(m) != self.d:
            raise ValueError(f"site {m} has wrong dimension for d={self.d}")
        half = self.L // 2
        if any(not -half <= c < half for c in m):
            raise ValueError(f"site {m} outside signed range [-{half}, {half})")
        return m


def make_box(d: int, L: int) -> LatticeBox:
    return LatticeBox(d, L)


def weight(box: LatticeBox, m: Sequence[int] | int) -> float:
    """Japanese bracket <m> = (1 + |m|^2)^(1/2) of a signed site of ``box``."""
    m = box._check_site(m)
    return float(np.sqrt(1.0 + sum(c * c for c in m)))


@dataclass(frozen=True, eq=False)
class Field:
    """Complex function on a lattice box.

    ``values`` is stored with shape ``box.shape`` and is read-only; every
    operation returns a new field.
    """

    box: LatticeBox
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.size != self.box.total:
            raise ValueError(f"expected {self.box.total} values, got {v.size}")
        v = v.reshape(self.box.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, box: LatticeBox) -> "Field":
        return cls(box, np.zeros(box.shape, dtype=complex))

    @classmethod
    def constant(cls, box: LatticeBox, c: complex = 1.0) -> "Field":
        return cls(box, np.full(box.shape, c, dtype=complex))

    @classmethod
    def from_function(cls, box: LatticeBox, func) -> "Field":
        """Evaluate ``func(*coordinate_grids)`` on the box."""
        return cls(box, np.asarray(func(*box.coord_grids), dtype=complex) * np.ones(box.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at(self, m: Sequence[int] | int) -> complex:
        return complex(self.flat[self.box.index(m)])

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.box != self.box:
                raise ValueError(f"box mismatch: {self.box} vs {other.box}")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.box, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.box, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.box, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.box, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.box, self.values / self._coerce(other))

    def __neg__(self):
        return Field(self.box, -self.values)

    def conj(self) -> "Field":
        return Field(self.box, np.conj(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def allclose(self, other: "Field", atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.values - self._coerce(other)), initial=0.0) <= atol)


def delta_field(box: LatticeBox, site: Sequence[int] | int | None = None) -> Field:
    """Kronecker delta at ``site`` (the origin by default)."""
    if site is None:
        site = (0,) * box.d
    v = np.zeros(box.total, dtype=complex)
    v[box.index(site)] = 1.0
    return Field(box, v)


@dataclass(frozen=True)
class WaveState:
    """Cauchy pair (u, du/dt) at time ``t``."""

    u: Field
    ut: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.box != self.ut.box:
            raise ValueError("u and ut must live on the same box")

    @property
    def box(self) -> LatticeBox:
        return self.u.box

    @classmethod
    def zeros(cls, box: LatticeBox, t: float = 0.0) -> "WaveState":
        z = Field.zeros(box)
        return cls(z, z, t)

    def scaled(self, c: complex) -> "WaveState":
        return WaveState(self.u * c, self.ut * c, self.t)


def seam_tail_mass(f: Field | np.ndarray, box: LatticeBox, width: int | None = None) -> float:
    """Fraction of l^2 mass within ``width`` sites of the periodic seam.

    A site is in the seam band when some signed coordinate has
    ``|m_j| >= L/2 - width``.  Defaults to ``width = L // 8``.  Returns 0 for
    the zero field.
    """
    v = f.values if isinstance(f, Field) else np.asarray(f).reshape(box.shape)
    width = max(1, box.L // 8) if width is None else width
    cutoff = box.L // 2 - width
    band = np.zeros(box.shape, dtype=bool)
    for g in box.coord_grids:
        band |= np.abs(g) >= cutoff
    mass = np.sum(np.abs(v) ** 2)
    if mass == 0.0:
        return 0.0
    return float(np.sum(np.abs(v[band]) ** 2) / mass)


# -- snapshots ---------------------------------------------------------------

def format_snapshot(f: Field) -> str:
    lines = [f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} d={f.box.d} L={f.box.L}"]
    lines.extend(f"{z.real:.17g} {z.imag:.17g}" for z in f.flat)
    return "\n".join(lines) + "\n"


def parse_snapshot(lines: Iterable[str]) -> Field:
    it = iter(lines)
    header = next(it).split()
    if len(header) != 4 or header[0] != SNAPSHOT_MAGIC or header[1] != SNAPSHOT_VERSION:
        raise ValueError(f"not a {SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} header: {' '.join(header)!r}")
    try:
        d = int(header[2].removeprefix("d="))
        L = int(header[3].removeprefix("L="))
    except ValueError as exc:
        raise ValueError(f"malformed snapshot header {' '.join(header)!r}") from exc
    box = LatticeBox(d, L)
    vals = np.empty(box.total, dtype=complex)
    for i in range(box.total):
        try:
            re, im = next(it).split()
        except StopIteration:
            raise ValueError(f"snapshot truncated after {i} of {box.total} values") from None
        vals[i] = complex(float(re), float(im))
    return Field(box, vals)


def write_snapshot(f: Field, path: str | Path) -> None:
    Path(path).write_text(format_snapshot(f))


def read_snapshot(path: str | Path) -> Field:
    with open(path) as fh:
        return parse_snapshot(line for line in fh if line.strip())
