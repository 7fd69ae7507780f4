"""Uniform periodic grids, sampled fields, quadrature and norms.

The box is ``[-L, L)^N`` split into ``n`` cells per axis of width
``h = 2L/n``; nodes sit at the cell midpoints ``-L + (j + 1/2) h`` so that
every sum ``h^N * sum(values)`` is the midpoint rule.  Differences of two
nodes are integer multiples of ``h``, which is what lets kernels be sampled
on the offset lattice ``m h``, ``m in [-n/2, n/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameter

__all__ = [
    "GridSpec",
    "Field",
    "lp_norm",
    "lp_power",
    "mass",
    "boundary_mass",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class GridSpec:
    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        n = self.points_per_axis
        if self.dim not in (1, 2, 3):
            raise InvalidParameter(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise InvalidParameter(f"half_width must be positive, got {self.half_width}")
        if n < 8 or n & (n - 1):
            raise InvalidParameter(f"points_per_axis must be a power of two >= 8, got {n}")
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        n, h = self.points_per_axis, self.spacing
        return -self.half_width + (np.arange(n) + 0.5) * h

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of shape ``self.shape`` per axis."""
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def offset_axis(self) -> np.ndarray:
        """Kernel offsets ``m h`` for ``m = -n/2, ..., n/2 - 1`` (centered order)."""
        n = self.points_per_axis
        return (np.arange(n) - n // 2) * self.spacing

    def offsets(self) -> tuple[np.ndarray, ...]:
        ax = self.offset_axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean length of every kernel offset."""
        return np.sqrt(sum(z * z for z in self.offsets()))

    def sup_norm_coords(self) -> np.ndarray:
        """``||x||_inf`` at every node."""
        return np.max(np.abs(np.stack(self.coords())), axis=0)

    def field(self, values) -> "Field":
        return Field(self, values)

    def sample(self, func) -> "Field":
        """Evaluate ``func(*coords)`` at the nodes."""
        return Field(self, np.broadcast_to(func(*self.coords()), self.shape))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    """Real grid function.  Values are stored read-only with shape ``grid.shape``;
    ``flat`` gives the canonical row-major (lexicographic) ordering."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise InvalidParameter(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise InvalidParameter("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check_grid(other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Field):
            self._check_grid(other)
            return self.with_values(self.values / other.values)
        return self.with_values(self.values / other)

    def __add__(self, other):
        if isinstance(other, Field):
            self._check_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise InvalidParameter("fields live on different grids")

    def equals(self, other: "Field") -> bool:
        return self.grid == other.grid and np.array_equal(self.values, other.values)


def lp_norm(u: Field, p: float) -> float:
    """Midpoint-rule approximation of ``||u||_p`` for ``1 <= p < inf``."""
    if not p >= 1 or not np.isfinite(p):
        raise InvalidParameter(f"p must be finite and >= 1, got {p}")
    a = np.abs(u.values)
    if p == 1:
        return float(u.grid.cell_volume * a.sum())
    top = a.max()
    if top == 0:
        return 0.0
    a = a / top  # keeps a**p clear of under- and overflow
    if p == 2:
        return float(top * np.sqrt(u.grid.cell_volume * np.sum(a * a)))
    return float(top * (u.grid.cell_volume * np.sum(a**p)) ** (1.0 / p))


def lp_power(u: Field, p: float) -> float:
    """``||u||_p^p``, without the final root."""
    if not p >= 1 or not np.isfinite(p):
        raise InvalidParameter(f"p must be finite and >= 1, got {p}")
    a = np.abs(u.values)
    return float(u.grid.cell_volume * np.sum(a * a if p == 2 else a**p))


def mass(u: Field) -> float:
    return float(u.grid.cell_volume * u.values.sum())


def boundary_mass(u: Field, margin: float) -> float:
    """L1 mass of ``u`` in the outer shell ``||x||_inf > L - margin``."""
    L = u.grid.half_width
    if not 0 < margin < L:
        raise InvalidParameter(f"margin must lie in (0, {L}), got {margin}")
    shell = u.grid.sup_norm_coords() > L - margin
    return float(u.grid.cell_volume * np.abs(u.values[shell]).sum())


def save_field(path, u: Field) -> None:
    """Write a snapshot: a text header ``dim,n,L`` then the values in canonical order.

    ``.csv`` files hold one ``repr``-formatted value per line; any other suffix
    stores the values as little-endian float64 after the header line.  Both
    round-trip bit-exactly.
    """
    path = Path(path)
    g = u.grid
    header = f"{g.dim},{g.points_per_axis},{g.half_width!r}\n"
    if path.suffix == ".csv":
        with path.open("w") as fh:
            fh.write(header)
            fh.writelines(f"{v!r}\n" for v in u.flat.tolist())
    else:
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(u.flat.astype("<f8").tobytes())


def load_field(path) -> Field:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as fh:
            grid = _parse_header(fh.readline())
            values = np.array([float(line) for line in fh if line.strip()])
    else:
        raw = path.read_bytes()
        cut = raw.index(b"\n")
        grid = _parse_header(raw[:cut].decode("ascii"))
        values = np.frombuffer(raw[cut + 1 :], dtype="<f8").astype(float)
    return Field(grid, values)


def _parse_header(line: str) -> GridSpec:
    try:
        dim, n, L = line.strip().split(",")
        return GridSpec(int(dim), float(L), int(n))
    except ValueError as exc:
        raise InvalidParameter(f"bad field snapshot header {line!r}") from exc
