"""(p, s, w)-blocks, finite block decompositions, and the level-set (Whitney)
decomposition of functions with maximal function in L^p_w."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, GridFunction, GridSpec, whitney_decompose
from .maximal import hl_maximal, lpw_norm
from .weights import Weight


class NormalizationError(ValueError):
    """A block cannot be normalized because its cube has zero weight."""


def ls_norm(f: GridFunction, s: float) -> float:
    return lpw_norm(f, s, None)


def block_bound(Q: Cube, p: float, s: float, w: Weight) -> float:
    """|Q|^{1/s} w(Q)^{-1/p}, the size allowed for a block on Q."""
    wq = w.mass(Q)
    if not wq > 0:
        return math.inf
    vol = Q.measure(w.spec)
    scale = 1.0 if math.isinf(s) else vol ** (1.0 / s)
    return scale * wq ** (-1.0 / p)


def support_mask(Q: Cube, spec: GridSpec) -> np.ndarray:
    """Cells lying entirely inside Q (clipped to the domain)."""
    lo, hi = Q.clipped_cells(spec)
    m = np.ones(spec.shape, dtype=bool)
    idx = np.arange(spec.N)
    for ax in range(spec.dim):
        inside = (idx >= lo[ax] - 1e-9) & (idx + 1 <= hi[ax] + 1e-9)
        shape = [1] * spec.dim
        shape[ax] = spec.N
        m = m & inside.reshape(shape)
    return m


@dataclass(eq=False)
class Block:
    cube: Cube
    samples: GridFunction
    p: float
    s: float
    weight: Weight

    @property
    def spec(self) -> GridSpec:
        return self.samples.spec

    def bound(self) -> float:
        return block_bound(self.cube, self.p, self.s, self.weight)

    def center(self) -> np.ndarray:
        return self.cube.center(self.spec)


@dataclass
class BlockCheck:
    valid: bool
    slack: float
    support_ok: bool

    def __bool__(self):
        return self.valid


def make_block(g: GridFunction, Q: Cube, p: float, s: float, w: Weight) -> tuple[float, Block]:
    """Split g = lam * a with a a block on Q that meets the size bound with equality."""
    if np.any(g.samples[~support_mask(Q, g.spec)] != 0):
        raise ValueError(f"function is not supported in {Q}")
    wq = w.mass(Q)
    if not wq > 0:
        raise NormalizationError(f"cube {Q.to_dict(g.spec)} has zero weight")
    norm = ls_norm(g, s)
    if norm == 0:
        return 0.0, Block(Q, GridFunction.zeros(g.spec), p, s, w)
    vol = Q.measure(g.spec)
    lam = norm * (1.0 if math.isinf(s) else vol ** (-1.0 / s)) * wq ** (1.0 / p)
    return lam, Block(Q, g * (1.0 / lam), p, s, w)


def validate_block(a: Block, rtol: float = 1e-12) -> BlockCheck:
    """Support inside the cube and ||a||_s <= |Q|^{1/s} w(Q)^{-1/p}; slack = bound / ||a||_s."""
    support_ok = not np.any(a.samples.samples[~support_mask(a.cube, a.spec)] != 0)
    norm = ls_norm(a.samples, a.s)
    bound = a.bound()
    slack = math.inf if norm == 0 else bound / norm
    return BlockCheck(support_ok and norm <= bound * (1 + rtol), slack, support_ok)


def block_lpw_bound(a: Block) -> float:
    """||a||_{L^p_w}, uniformly bounded over blocks under the reverse Holder hypothesis."""
    return lpw_norm(a.samples, a.p, a.weight)


@dataclass
class Term:
    coef: float
    block: Block
    level: int | None = None


@dataclass
class BlockDecomposition:
    p: float
    s: float
    weight: Weight
    spec: GridSpec
    terms: list[Term] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def pbar(self) -> float:
        return min(self.p, 1.0)

    def add(self, coef: float, block: Block, level: int | None = None) -> None:
        if block.spec != self.spec:
            raise ValueError(f"block grid {block.spec} != decomposition grid {self.spec}")
        self.terms.append(Term(coef, block, level))

    def __len__(self):
        return len(self.terms)


def coefficient_quasinorm(d: BlockDecomposition) -> float:
    """(sum |lam|^pbar)^{1/pbar}, with pbar = min(p, 1); the sum is exactly rounded."""
    pb = d.pbar
    return math.fsum(abs(t.coef) ** pb for t in d.terms) ** (1.0 / pb)


def reconstruct(d: BlockDecomposition) -> GridFunction:
    out = np.zeros(d.spec.shape)
    for t in d.terms:
        if t.block.spec != d.spec:
            raise ValueError(f"term grid {t.block.spec} != decomposition grid {d.spec}")
        out += t.coef * t.block.samples.samples
    return GridFunction(d.spec, out)


def ml_quasinorm(f: GridFunction, p: float, w: Weight | None = None) -> float:
    """||Mf||_{L^p_w}."""
    return lpw_norm(hl_maximal(f), p, w)


def _labels(spec: GridSpec, cubes: list[Cube]) -> np.ndarray:
    lab = np.full(spec.shape, -1, dtype=np.int64)
    for i, Q in enumerate(cubes):
        lab[Q.slices(spec)] = i
    return lab


def decompose_ml(f: GridFunction, p: float, s: float, w: Weight) -> BlockDecomposition:
    """Block decomposition from the level sets E_k = {Mf > 2^k}.

    Each E_k is split into Whitney cubes Q_k^i; on Q_k^i the piece
    beta = f chi_Q - sum of f chi over the level-(k+1) cubes inside Q is bounded
    by 3 * 2^k, giving the block beta / (3 2^k w(Q)^{1/p}) with coefficient
    3 2^k w(Q)^{1/p}.  The level range is finite, so the telescoping is exact.
    """
    spec = f.spec
    d = BlockDecomposition(p, s, w, spec)
    if not np.any(f.samples):
        return d
    Mf = hl_maximal(f).samples
    pos = Mf[Mf > 0]
    k_min = math.floor(math.log2(pos.min())) - 1
    k_max = math.floor(math.log2(Mf.max())) + 1
    d.info.update(k_min=k_min, k_max=k_max, max_beta_ratio=0.0)

    cubes = {k: whitney_decompose(spec, Mf > 2.0 ** k) for k in range(k_min, k_max + 1)}
    for k in range(k_min, k_max):
        here, nxt = cubes[k], cubes[k + 1]
        lab_next = _labels(spec, nxt)
        cap = 3.0 * 2.0 ** k
        for Q in here:
            sl = Q.slices(spec)
            children = np.unique(lab_next[sl])
            children = children[children >= 0]
            for j in children:
                if not Q.contains(nxt[j]):
                    raise RuntimeError(f"Whitney nesting failed: {nxt[j]} not inside {Q}")
            beta = np.zeros(spec.shape)
            beta[sl] = np.where(lab_next[sl] < 0, f.samples[sl], 0.0)
            peak = float(np.abs(beta).max())
            if peak > cap:
                raise RuntimeError(f"piece on {Q} exceeds 3*2^k: {peak} > {cap}")
            d.info["max_beta_ratio"] = max(d.info["max_beta_ratio"], peak / cap)
            wq = w.mass(Q)
            if not wq > 0:
                raise NormalizationError(f"Whitney cube {Q.to_dict(spec)} at level {k} has zero weight")
            lam = cap * wq ** (1.0 / p)
            d.add(lam, Block(Q, GridFunction(spec, beta / lam), p, s, w), level=k)
    return d
