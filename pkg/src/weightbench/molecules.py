"""Molecules: the size functional R(M) and the annular split of a molecule into blocks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockDecomposition, ls_norm, make_block
from .grid import Cube, GridFunction
from .weights import Weight


def default_epsilon(p: float, q: float) -> float:
    return 0.5 * (1.0 - q / p)


def strict_epsilon_cap(n: int, p: float, s: float, q: float) -> float | None:
    """Tighter upper bound on epsilon needed when (s-1)n - s > 0 and decay
    (s-1)n a - s b > 0 is required; None when the bound does not apply."""
    den = (s - 1.0) * n - s
    if math.isinf(s) or den <= 0:
        return None
    return 1.0 + (1.0 - (s - 1.0) * n * q / p) / den


def decay_exponent(n: int, p: float, s: float, q: float, eps: float, r: float) -> float:
    """Geometric decay rate of the annular pieces for a weight in RH_r.

    Positive exactly when r > s / (s - p).
    """
    a = 1.0 - q / p - eps
    b = 1.0 - (0.0 if math.isinf(s) else 1.0 / s) - eps
    gain = 1.0 - 1.0 / r - (0.0 if math.isinf(s) else p / s)
    return n * gain * a / ((b - a) * p)


@dataclass(eq=False)
class Molecule:
    center: np.ndarray
    samples: GridFunction
    p: float
    s: float
    q: float
    weight: Weight
    eps: float | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        spec = self.samples.spec
        # centers live on grid nodes so every concentric cube of integer half side is cell-aligned
        u = np.rint(np.broadcast_to(spec.to_cell(self.center), (spec.dim,)))
        self.center = spec.to_physical(u)
        if self.eps is None:
            self.eps = default_epsilon(self.p, self.q)
        if not 0 < self.q < self.p:
            raise ValueError(f"molecule needs 0 < q < p, got q={self.q}, p={self.p}")
        if not 0 < self.eps < 1 - self.q / self.p:
            raise ValueError(f"epsilon must lie in (0, 1 - q/p), got {self.eps}")
        if not self.s > self.p / self.q:
            raise ValueError(f"molecule needs s > p/q, got s={self.s}")
        cap = strict_epsilon_cap(spec.dim, self.p, self.s, self.q)
        if cap is not None and not self.eps < cap:
            self.notes.append(f"epsilon={self.eps:g} violates the tighter cap {cap:g}")

    @property
    def a(self) -> float:
        return 1.0 - self.q / self.p - self.eps

    @property
    def b(self) -> float:
        return 1.0 - (0.0 if math.isinf(self.s) else 1.0 / self.s) - self.eps

    def hypothesis_violations(self, r_w: float) -> list[str]:
        """Check r_w p/(r_w - 1) < s with an (estimated) critical index."""
        lower = self.p if math.isinf(r_w) else r_w * self.p / (r_w - 1.0)
        if not lower < self.s:
            return [f"r_w p/(r_w-1) = {lower:g} is not below s = {self.s:g}"]
        return []


def _cell_center_units(M: Molecule) -> np.ndarray:
    spec = M.samples.spec
    return np.broadcast_to(spec.to_cell(M.center), (spec.dim,))


def radial_distance(M: Molecule) -> np.ndarray:
    """|x - x0| in the sup metric at cell midpoints, floored at h/2."""
    spec = M.samples.spec
    mesh = spec.mesh()
    r = np.zeros(spec.shape)
    for ax, x in enumerate(mesh):
        r = np.maximum(r, np.abs(x - M.center[ax]))
    return np.maximum(r, spec.h / 2)


def molecule_R(M: Molecule) -> float:
    """||M||_s^{a/b} * ||M (|Q_r|^{-1/s} w(Q_r)^{1/p})^{b/(b-a)}||_s^{1-a/b}, r = |x - x0|."""
    spec = M.samples.spec
    w = M.weight
    r_cells = radial_distance(M) / spec.h
    u0 = _cell_center_units(M)
    lo = np.stack([u0[ax] - r_cells for ax in range(spec.dim)], axis=-1)
    hi = np.stack([u0[ax] + r_cells for ax in range(spec.dim)], axis=-1)
    mass = w.masses(lo, hi)
    vol = np.prod(np.clip(hi, 0, spec.N) - np.clip(lo, 0, spec.N), axis=-1) * spec.cell_volume
    a, b = M.a, M.b
    vol_term = 1.0 if math.isinf(M.s) else vol ** (-1.0 / M.s)
    growth = (vol_term * mass ** (1.0 / M.p)) ** (b / (b - a))
    plain = ls_norm(M.samples, M.s)
    if plain == 0:
        return 0.0
    weighted = ls_norm(GridFunction(spec, M.samples.samples * growth), M.s)
    return plain ** (a / b) * weighted ** (1.0 - a / b)


def _block_scale(M: Molecule, R: int) -> float:
    """|Q|^{1/s} w(Q)^{-1/p} for the node-centred cube of half side R cells."""
    spec = M.samples.spec
    Q = Cube(tuple(int(round(v)) - R for v in _cell_center_units(M)), 2 * R)
    wq = M.weight.mass(Q)
    if not wq > 0:
        return math.inf
    vol = Q.measure(spec)
    return (1.0 if math.isinf(M.s) else vol ** (1.0 / M.s)) * wq ** (-1.0 / M.p)


def molecule_to_blocks(M: Molecule) -> BlockDecomposition:
    """Split M over dyadic annuli around its center, one block per annulus.

    The base half side l solves ||M||_s = |Q_l|^{1/s} w(Q_l)^{-1/p} over grid
    scales (bisection on the nonincreasing majorant of the right side);
    annulus k covers 2^{k0+k-1} < |x-x0| <= 2^{k0+k} with 2^{k0-1} < l <= 2^{k0}
    in cell units.  Each piece is normalized exactly by :func:`make_block`.
    """
    spec = M.samples.spec
    d = BlockDecomposition(M.p, M.s, M.weight, spec)
    norm = ls_norm(M.samples, M.s)
    if norm == 0:
        return d
    u0 = np.rint(_cell_center_units(M)).astype(int)
    R_max = int(max(np.max(u0), np.max(spec.N - u0)))
    scales = np.array([_block_scale(M, R) for R in range(1, R_max + 1)])
    # nonincreasing majorant: G(R) = max_{R' >= R} g(R')
    major = np.maximum.accumulate(scales[::-1])[::-1]
    non_monotone = bool(np.any(np.diff(scales) > 1e-12 * np.abs(scales[:-1])))
    clamped = False
    lo, hi = 0, len(major) - 1
    if major[hi] > norm:
        idx, clamped = hi, True
    elif major[lo] <= norm:
        idx, clamped = lo, True
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if major[mid] <= norm:
                hi = mid
            else:
                lo = mid
        idx = hi
    l_cells = idx + 1
    if clamped:
        warnings.warn(f"no grid scale solves the base-cube equation; clamped to l={l_cells} cells",
                      RuntimeWarning, stacklevel=2)
    k0 = max(0, math.ceil(math.log2(l_cells)))
    d.info.update(l_cells=l_cells, k0=k0, clamped=clamped, non_monotone=non_monotone)

    r = radial_distance(M) / spec.h
    outer = 0.0
    k = 0
    while outer < r.max():
        R = 2 ** (k0 + k)
        ring = (r < R) & (r > outer)
        piece = GridFunction(spec, np.where(ring, M.samples.samples, 0.0))
        if np.any(piece.samples):
            Q = Cube(tuple(int(v) - R for v in u0), 2 * R)
            lam, blk = make_block(piece, Q, M.p, M.s, M.weight)
            d.add(lam, blk, level=k)
        outer = R
        k += 1
    return d
