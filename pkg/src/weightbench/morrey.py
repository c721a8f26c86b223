"""Weighted Morrey norm and the block/Morrey pairing bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import BlockDecomposition, coefficient_quasinorm, reconstruct
from .grid import Cube, CubeFamily, GridFunction, aligned_sums, default_family, prefix_table
from .weights import Weight, cube_windows


def conjugate(s: float) -> float:
    if s == 1:
        return math.inf
    if math.isinf(s):
        return 1.0
    if s < 1:
        raise ValueError(f"conjugate exponent needs s >= 1, got {s}")
    return s / (s - 1.0)


@dataclass(frozen=True)
class MorreyParams:
    p: float
    s: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if not self.s >= 1:
            raise ValueError(f"s must be >= 1, got {self.s}")

    @property
    def sprime(self) -> float:
        return conjugate(self.s)


@dataclass
class MorreyResult:
    value: float
    witness: Cube | None
    skipped: int

    def __float__(self):
        return self.value


def morrey_norm(g: GridFunction, p: float, sprime: float, w: Weight,
                cubes: CubeFamily | None = None, detail: bool = False):
    """sup over the cube family of |Q| w(Q)^{-1/p} (avg_Q |g|^{s'})^{1/s'}.

    Zero-weight cubes are skipped and counted.  Returns a float unless
    ``detail`` asks for the witness cube and skip count.
    """
    spec = g.spec
    cubes = default_family(spec) if cubes is None else cubes
    a = np.abs(g.samples)
    P = None if math.isinf(sprime) else prefix_table(spec, a ** sprime)
    best, wit, skipped = 0.0, None, 0
    for size, starts in cubes.groups:
        vol = (size * spec.h) ** spec.dim
        wq = w.aligned_masses(starts, size)
        ok = wq > 0
        skipped += int((~ok).sum())
        if not ok.any():
            continue
        if P is None:
            local = cube_windows(a, starts[ok], size).max(axis=1)
        else:
            local = (np.maximum(aligned_sums(P, starts[ok], size), 0.0) / vol) ** (1.0 / sprime)
        val = vol * wq[ok] ** (-1.0 / p) * local
        i = int(np.argmax(val))
        if val[i] > best:
            best = float(val[i])
            wit = Cube(tuple(int(v) for v in starts[ok][i]), size)
    if detail:
        return MorreyResult(best, wit, skipped)
    return best


@dataclass
class PairingReport:
    pairing: float
    coefficient_norm: float
    morrey: float
    ratio: float
    informational: bool


def duality_pairing_check(f_decomp: BlockDecomposition, g: GridFunction,
                          cubes: CubeFamily | None = None, r_w: float = math.inf) -> PairingReport:
    """|int f g| against coefficient quasinorm times the Morrey norm of g.

    p < 1 runs but is marked informational: the sum |lam_k| is not controlled
    by the pbar-quasinorm there.
    """
    p, s, w = f_decomp.p, f_decomp.s, f_decomp.weight
    if g.spec != f_decomp.spec:
        raise ValueError(f"grid mismatch: {g.spec} vs {f_decomp.spec}")
    lower = p if math.isinf(r_w) else r_w * p / (r_w - 1.0)
    if not lower < s:
        raise ValueError(f"pairing needs r_w p/(r_w-1) < s, got {lower:g} >= {s:g}")
    f = reconstruct(f_decomp)
    pairing = abs(float(np.sum(f.samples * g.samples)) * g.spec.cell_volume)
    cq = coefficient_quasinorm(f_decomp)
    mn = morrey_norm(g, p, conjugate(s), w, cubes)
    bound = cq * mn
    ratio = 0.0 if pairing == 0 else (math.inf if bound == 0 else pairing / bound)
    return PairingReport(pairing, cq, mn, ratio, informational=p < 1)
