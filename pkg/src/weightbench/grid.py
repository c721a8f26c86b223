"""Uniform lattices over [-L, L]^n, cubes in cell coordinates, exact box
integrals of cell-constant functions, and the Whitney decomposition of
cell masks.

Samples are read as the constant value on their cell, so every integral over a
box (aligned or not) is an exact finite sum.  Cubes are stored in *cell units*:
a cube with ``start=(3,)`` and ``size=2`` covers physical ``[-L+3h, -L+5h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when a cube or parameter falls outside the discretized domain."""


@dataclass(frozen=True)
class GridSpec:
    dim: int
    L: float
    N: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"half width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def levels(self) -> int:
        """log2(N): the finest dyadic level (single cells)."""
        return self.N.bit_length() - 1

    def midpoints(self) -> np.ndarray:
        return -self.L + (np.arange(self.N) + 0.5) * self.h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-midpoint coordinates, one array of ``shape`` per axis."""
        x = self.midpoints()
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def to_cell(self, x) -> np.ndarray:
        """Physical coordinate(s) to (fractional) cell units."""
        return (np.asarray(x, dtype=float) + self.L) / self.h

    def to_physical(self, u) -> np.ndarray:
        return -self.L + np.asarray(u, dtype=float) * self.h

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.dim, self.L, self.N * factor)


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube ``[start, start+size)^n`` in cell units.

    Dyadic cubes have integer ``start`` that is a multiple of ``size`` and
    ``size = N / 2**level``.  Cubes may reach outside the domain; measures and
    masses are always taken over the part inside.
    """

    start: tuple[float, ...]
    size: float

    @classmethod
    def dyadic(cls, spec: GridSpec, level: int, index: Sequence[int]) -> "Cube":
        if not 0 <= level <= spec.levels:
            raise DomainError(f"level {level} outside 0..{spec.levels}")
        size = spec.N >> level
        index = tuple(int(i) for i in index)
        if len(index) != spec.dim or any(not 0 <= i < 2**level for i in index):
            raise DomainError(f"index {index} invalid at level {level}")
        return cls(tuple(i * size for i in index), size)

    @classmethod
    def centered(cls, spec: GridSpec, center, half_side: float) -> "Cube":
        """Cube with physical center and half side."""
        c = np.broadcast_to(spec.to_cell(center), (spec.dim,))
        r = half_side / spec.h
        return cls(tuple(float(v - r) for v in c), 2.0 * r)

    @classmethod
    def whole(cls, spec: GridSpec) -> "Cube":
        return cls((0,) * spec.dim, spec.N)

    @property
    def stop(self) -> tuple[float, ...]:
        return tuple(s + self.size for s in self.start)

    @property
    def aligned(self) -> bool:
        return float(self.size).is_integer() and all(float(s).is_integer() for s in self.start)

    def level(self, spec: GridSpec) -> int | None:
        """Dyadic level, or None if the cube is not in the dyadic lattice."""
        if not self.aligned or self.size < 1:
            return None
        size = int(self.size)
        if size & (size - 1) or spec.N % size:
            return None
        if any(int(s) % size or s < 0 or s + size > spec.N for s in self.start):
            return None
        return (spec.N // size).bit_length() - 1

    def inside(self, spec: GridSpec) -> bool:
        return all(s >= 0 and s + self.size <= spec.N for s in self.start)

    def side(self, spec: GridSpec) -> float:
        return self.size * spec.h

    def center(self, spec: GridSpec) -> np.ndarray:
        return spec.to_physical(np.array(self.start) + self.size / 2.0)

    def bounds(self, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        """Physical lower and upper corners (unclipped)."""
        lo = spec.to_physical(np.array(self.start, dtype=float))
        return lo, lo + self.side(spec)

    def dilate(self, lam: float) -> "Cube":
        """Concentric cube with lam times the side."""
        grow = (lam - 1.0) * self.size / 2.0
        return Cube(tuple(s - grow for s in self.start), lam * self.size)

    def clipped_cells(self, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        lo = np.clip(np.array(self.start, dtype=float), 0, spec.N)
        hi = np.clip(np.array(self.stop, dtype=float), 0, spec.N)
        return lo, hi

    def measure(self, spec: GridSpec) -> float:
        """Lebesgue measure of the part of the cube inside the domain."""
        lo, hi = self.clipped_cells(spec)
        return float(np.prod(np.maximum(hi - lo, 0.0))) * spec.cell_volume

    def slices(self, spec: GridSpec) -> tuple[slice, ...]:
        """Index slices of the cells covered by an aligned cube (clipped)."""
        if not self.aligned:
            raise DomainError(f"cube {self} is not cell-aligned")
        lo, hi = self.clipped_cells(spec)
        return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))

    def mask(self, spec: GridSpec) -> np.ndarray:
        m = np.zeros(spec.shape, dtype=bool)
        m[self.slices(spec)] = True
        return m

    def contains(self, other: "Cube") -> bool:
        return all(
            a <= b and b + other.size <= a + self.size
            for a, b in zip(self.start, other.start)
        )

    def to_dict(self, spec: GridSpec) -> dict:
        lo, hi = self.bounds(spec)
        out = {"start": list(self.start), "size": self.size, "lo": lo.tolist(), "hi": hi.tolist()}
        lev = self.level(spec)
        if lev is not None:
            out["level"] = lev
        return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.shape != self.spec.shape:
            raise ValueError(f"samples shape {arr.shape} != grid shape {self.spec.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    @classmethod
    def zeros(cls, spec: GridSpec, dtype=float) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape, dtype=dtype))

    @classmethod
    def constant(cls, spec: GridSpec, c: float) -> "GridFunction":
        return cls(spec, np.full(spec.shape, float(c)))

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "GridFunction":
        """Sample ``fn`` at cell midpoints (fn receives one array per axis)."""
        return cls(spec, np.asarray(fn(*spec.mesh()), dtype=float) * np.ones(spec.shape))

    def _check(self, other: "GridFunction") -> None:
        if other.spec != self.spec:
            raise ValueError(f"grid mismatch: {self.spec} vs {other.spec}")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.spec, self.samples + other.samples)
        return GridFunction(self.spec, self.samples + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.spec, self.samples - other.samples)
        return GridFunction(self.spec, self.samples - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.spec, self.samples * other.samples)
        return GridFunction(self.spec, self.samples * other)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.spec, -self.samples)

    def __abs__(self):
        return GridFunction(self.spec, np.abs(self.samples))

    def restrict(self, mask: np.ndarray) -> "GridFunction":
        return GridFunction(self.spec, np.where(mask, self.samples, 0))

    def total(self) -> float:
        return float(self.samples.sum()) * self.spec.cell_volume


# --------------------------------------------------------------------------
# prefix sums and box integrals


def prefix_table(spec: GridSpec, values: np.ndarray) -> np.ndarray:
    """Cumulative integral at grid nodes: shape (N+1,)*dim, zero on the lower faces."""
    P = np.zeros(tuple(n + 1 for n in values.shape), dtype=np.result_type(values, float))
    inner = values * spec.cell_volume
    for ax in range(values.ndim):
        inner = np.cumsum(inner, axis=ax)
    P[(slice(1, None),) * values.ndim] = inner
    return P


def _interp_weights(u: np.ndarray, N: int):
    u = np.clip(u, 0.0, N)
    i = np.minimum(np.floor(u).astype(np.int64), N - 1)
    return i, u - i


def _node_value(P: np.ndarray, us: Sequence[np.ndarray]) -> np.ndarray:
    """Exact cumulative integral at fractional node coordinates.

    For cell-constant data the cumulative integral is (multi)linear inside each
    cell, so linear/bilinear interpolation of the node table is exact.
    """
    N = P.shape[0] - 1
    if len(us) == 1:
        i, t = _interp_weights(us[0], N)
        return P[i] * (1 - t) + P[i + 1] * t
    (i, t), (j, s) = _interp_weights(us[0], N), _interp_weights(us[1], N)
    return (
        P[i, j] * (1 - t) * (1 - s)
        + P[i + 1, j] * t * (1 - s)
        + P[i, j + 1] * (1 - t) * s
        + P[i + 1, j + 1] * t * s
    )


def box_integrals(P: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Integrals over boxes [lo, hi) given in cell units, shape (..., dim)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape[-1] == 1:
        return _node_value(P, [hi[..., 0]]) - _node_value(P, [lo[..., 0]])
    a, b = lo[..., 0], lo[..., 1]
    c, d = hi[..., 0], hi[..., 1]
    return (
        _node_value(P, [c, d])
        - _node_value(P, [a, d])
        - _node_value(P, [c, b])
        + _node_value(P, [a, b])
    )


def aligned_sums(P: np.ndarray, starts: np.ndarray, size: int) -> np.ndarray:
    """Integrals over aligned cubes of ``size`` cells at integer ``starts`` (K, dim)."""
    starts = np.asarray(starts, dtype=np.int64)
    if starts.shape[1] == 1:
        a = starts[:, 0]
        return P[a + size] - P[a]
    a, b = starts[:, 0], starts[:, 1]
    return P[a + size, b + size] - P[a, b + size] - P[a + size, b] + P[a, b]


def integrate(f: GridFunction, Q: Cube) -> float:
    """Integral of a cell-constant function over a cube (exact Riemann sum)."""
    spec = f.spec
    if not Q.inside(spec):
        raise DomainError(f"cube {Q} lies outside the domain")
    if Q.aligned:
        return float(f.samples[Q.slices(spec)].sum()) * spec.cell_volume
    P = prefix_table(spec, f.samples)
    return float(box_integrals(P, np.array(Q.start), np.array(Q.stop)))


# --------------------------------------------------------------------------
# cube families


@dataclass(frozen=True)
class CubeFamily:
    """Aligned cubes grouped by size: ``groups[i] = (size, starts)``."""

    dim: int
    groups: tuple[tuple[int, np.ndarray], ...]

    def __len__(self):
        return sum(len(s) for _, s in self.groups)

    def cubes(self) -> Iterator[Cube]:
        for size, starts in self.groups:
            for st in starts:
                yield Cube(tuple(int(v) for v in st), size)

    @classmethod
    def of(cls, cubes: Sequence[Cube]) -> "CubeFamily":
        by_size: dict[int, list] = {}
        dim = None
        for Q in cubes:
            if not Q.aligned:
                raise DomainError(f"family cubes must be cell-aligned: {Q}")
            dim = len(Q.start)
            by_size.setdefault(int(Q.size), []).append([int(v) for v in Q.start])
        groups = tuple((m, np.array(v, dtype=np.int64)) for m, v in sorted(by_size.items()))
        return cls(dim or 1, groups)


def _starts_grid(dim: int, positions: np.ndarray) -> np.ndarray:
    if dim == 1:
        return positions[:, None]
    a, b = np.meshgrid(positions, positions, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def translate_family(spec: GridSpec, min_size: int = 1, max_size: int | None = None,
                     stride: int | None = None) -> CubeFamily:
    """Dyadic side lengths with every translate by a multiple of ``stride`` cells.

    ``stride=None`` means one cell (the default family); in 2D pass a coarser
    stride to keep the family size manageable on large grids.
    """
    max_size = spec.N if max_size is None else max_size
    groups = []
    m = 1
    while m <= spec.N:
        if min_size <= m <= max_size:
            st = 1 if stride is None else max(1, min(stride, m))
            pos = np.arange(0, spec.N - m + 1, st, dtype=np.int64)
            if pos[-1] != spec.N - m:
                pos = np.append(pos, spec.N - m)
            groups.append((m, _starts_grid(spec.dim, pos)))
        m *= 2
    return CubeFamily(spec.dim, tuple(groups))


def dyadic_family(spec: GridSpec, min_size: int = 1) -> CubeFamily:
    groups = []
    for level in range(spec.levels + 1):
        m = spec.N >> level
        if m < min_size:
            continue
        pos = np.arange(0, spec.N, m, dtype=np.int64)
        groups.append((m, _starts_grid(spec.dim, pos)))
    return CubeFamily(spec.dim, tuple(groups))


def default_family(spec: GridSpec) -> CubeFamily:
    if spec.dim == 1:
        return translate_family(spec)
    return translate_family(spec, stride=max(1, spec.N // 64))


# --------------------------------------------------------------------------
# Whitney decomposition


def _box_count(C: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Counts over integer boxes [lo, hi) clipped to the grid, via prefix table C."""
    N = C.shape[0] - 1
    lo = np.clip(lo, 0, N)
    hi = np.clip(hi, 0, N)
    if lo.shape[1] == 1:
        return C[hi[:, 0]] - C[lo[:, 0]]
    a, b, c, d = lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1]
    return C[c, d] - C[a, d] - C[c, b] + C[a, b]


def whitney_decompose(spec: GridSpec, E: np.ndarray) -> list[Cube]:
    """Maximal dyadic cubes Q inside E with dist(Q, E^c) >= diam(Q) in the sup metric.

    The complement is taken inside the domain.  Cells of E not covered by any
    such cube (the collar next to E^c) are returned as single-cell cubes, so the
    output partitions E exactly.  The result is ordered by level, then index.
    """
    E = np.asarray(E, dtype=bool)
    if E.shape != spec.shape:
        raise ValueError(f"mask shape {E.shape} != grid shape {spec.shape}")
    if not E.any():
        return []
    comp = (~E).astype(np.int64)
    C = np.zeros(tuple(n + 1 for n in comp.shape), dtype=np.int64)
    inner = comp
    for ax in range(comp.ndim):
        inner = np.cumsum(inner, axis=ax)
    C[(slice(1, None),) * comp.ndim] = inner

    covered = np.zeros(spec.shape, dtype=bool)
    out: list[Cube] = []
    for level in range(spec.levels + 1):
        m = spec.N >> level
        pos = np.arange(0, spec.N, m, dtype=np.int64)
        starts = _starts_grid(spec.dim, pos)
        # sup-distance >= side  <=>  the concentric triple (clipped) misses E^c
        bad = _box_count(C, starts - m, starts + 2 * m)
        if spec.dim == 1:
            free = ~covered[starts[:, 0]]
        else:
            free = ~covered[starts[:, 0], starts[:, 1]]
        # single cells inside E always enter: either as Whitney cells or collar
        ok = free & ((bad == 0) | (m == 1))
        if m == 1:
            ok &= E[tuple(starts.T)]
        for st in starts[ok]:
            Q = Cube(tuple(int(v) for v in st), m)
            out.append(Q)
            covered[Q.slices(spec)] = True
    return out


def whitney_satisfies_distance(spec: GridSpec, E: np.ndarray, Q: Cube) -> bool:
    """Brute-force check of dist(Q, E^c) >= diam(Q) over all complement cells."""
    comp = np.argwhere(~np.asarray(E, dtype=bool))
    if len(comp) == 0:
        return True
    lo = np.array(Q.start)
    hi = lo + Q.size
    gap = np.maximum(np.maximum(lo - (comp + 1), comp - hi), 0)
    return bool(gap.max(axis=1).min() >= Q.size)


# --------------------------------------------------------------------------
# serialization


def save_function(f: GridFunction, path: str | Path) -> None:
    """CSV (``.csv``) or flat little-endian float64 (anything else).

    Both formats start with the text header ``dim,L,N`` and its values line.
    """
    path = Path(path)
    spec = f.spec
    head = f"dim,L,N\n{spec.dim},{spec.L!r},{spec.N}\n"
    if path.suffix == ".csv":
        rows = f.samples.reshape(spec.N, -1)
        body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
        path.write_text(head + body + "\n")
    else:
        data = np.ascontiguousarray(f.samples, dtype="<f8").tobytes()
        path.write_bytes(head.encode() + data)


def load_function(path: str | Path) -> GridFunction:
    path = Path(path)
    raw = path.read_bytes()
    first = raw.index(b"\n")
    second = raw.index(b"\n", first + 1)
    if raw[:first].decode().strip() != "dim,L,N":
        raise ValueError(f"{path}: missing 'dim,L,N' header")
    dim_s, L_s, N_s = raw[first + 1:second].decode().strip().split(",")
    spec = GridSpec(int(dim_s), float(L_s), int(N_s))
    body = raw[second + 1:]
    if path.suffix == ".csv":
        rows = [r for r in body.decode().splitlines() if r.strip()]
        arr = np.array([[float(v) for v in r.split(",")] for r in rows])
    else:
        n = spec.N**spec.dim
        if len(body) != 8 * n:
            raise ValueError(f"{path}: expected {8 * n} bytes of samples, got {len(body)}")
        arr = np.frombuffer(body, dtype="<f8").copy()
    return GridFunction(spec, arr.reshape(spec.shape))
