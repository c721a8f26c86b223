"""Weights on the grid and finite-resolution estimators for their constants.

Every estimator returns a :class:`WeightReport`: the sup it found, the cube
(and subset) realizing it, and a per-scale curve of worst ratios.  Zero
denominators give ``inf`` with a witness instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate as sp_integrate

from .grid import (
    Cube,
    CubeFamily,
    DomainError,
    GridFunction,
    GridSpec,
    aligned_sums,
    box_integrals,
    default_family,
    load_function,
    prefix_table,
    translate_family,
)


class Weight:
    """Nonnegative cell-constant weight with a cached cumulative-mass table."""

    def __init__(self, base: GridFunction):
        s = np.asarray(base.samples, dtype=float)
        if np.any(s < 0):
            raise ValueError("weight samples must be nonnegative")
        if not s.sum() > 0:
            raise ValueError("weight must have positive total mass")
        self.base = GridFunction(base.spec, s)
        self.prefix = prefix_table(base.spec, s)

    @property
    def spec(self) -> GridSpec:
        return self.base.spec

    @property
    def samples(self) -> np.ndarray:
        return self.base.samples

    def mass(self, Q: Cube) -> float:
        """w(Q), over the part of Q inside the domain; exact for any real cube."""
        lo, hi = Q.clipped_cells(self.spec)
        return float(box_integrals(self.prefix, lo, hi))

    def masses(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Vectorized w over boxes given in cell units (clipped to the domain)."""
        N = self.spec.N
        return box_integrals(self.prefix, np.clip(lo, 0, N), np.clip(hi, 0, N))

    def aligned_masses(self, starts: np.ndarray, size: int) -> np.ndarray:
        return aligned_sums(self.prefix, starts, size)

    def coarsen(self) -> "Weight":
        """Same measure on the grid with half as many cells per axis."""
        spec = self.spec
        coarse = GridSpec(spec.dim, spec.L, spec.N // 2)
        s = self.samples
        if spec.dim == 1:
            c = 0.5 * (s[0::2] + s[1::2])
        else:
            c = 0.25 * (s[0::2, 0::2] + s[1::2, 0::2] + s[0::2, 1::2] + s[1::2, 1::2])
        return Weight(GridFunction(coarse, c))


@dataclass
class WeightReport:
    """Constant estimates keyed by (class, exponent), witnesses, and scale curves."""

    constants: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.constants[key]

    def merge(self, other: "WeightReport") -> "WeightReport":
        for name in ("constants", "witnesses", "curves", "skipped"):
            getattr(self, name).update(getattr(other, name))
        return self

    def value(self) -> float:
        """The single constant of a one-entry report."""
        (v,) = self.constants.values()
        return v

    def witness(self) -> dict:
        (v,) = self.witnesses.values()
        return v

    def to_json(self, spec: GridSpec) -> dict:
        def key(k):
            return f"{k[0]}:{k[1]}"

        def enc(x):
            if isinstance(x, float) and not math.isfinite(x):
                return "inf" if x > 0 else "nan"
            return x

        out = {"constants": {}, "witnesses": {}, "curves": {}, "skipped": {}}
        for k, v in self.constants.items():
            out["constants"][key(k)] = enc(float(v))
        for k, wit in self.witnesses.items():
            w = dict(wit)
            if "cube" in w:
                w["cube"] = w["cube"].to_dict(spec)
            if "dilate" in w:
                w["dilate"] = w["dilate"].to_dict(spec)
            out["witnesses"][key(k)] = {a: enc(b) if isinstance(b, float) else b for a, b in w.items()}
        for k, c in self.curves.items():
            out["curves"][key(k)] = [[float(a), enc(float(b))] for a, b in c]
        for k, v in self.skipped.items():
            out["skipped"][key(k)] = int(v)
        return out


def cube_windows(samples: np.ndarray, starts: np.ndarray, size: int) -> np.ndarray:
    """Cell values of aligned cubes, one row per cube: shape (K, size**dim)."""
    if samples.ndim == 1:
        return sliding_window_view(samples, size)[starts[:, 0]]
    view = sliding_window_view(samples, (size, size))
    return view[starts[:, 0], starts[:, 1]].reshape(len(starts), -1)


def _chunks(starts: np.ndarray, cells: int, budget: int = 4_000_000):
    step = max(1, budget // max(cells, 1))
    for i in range(0, len(starts), step):
        yield starts[i:i + step]


def aplus_ratio(w: Weight, Q: Cube, k: int, q: float) -> float:
    """(k/|Q|)^q * w(Q) / w(E) with E the k lightest cells of Q."""
    vals = np.sort(w.samples[Q.slices(w.spec)].ravel())
    K = vals.size
    total = vals.sum()
    part = vals[:k].sum()
    num = (k / K) ** q * total
    return math.inf if part == 0 else float(num / part)


def aplus_constant(w: Weight, q: float, cubes: CubeFamily | None = None) -> WeightReport:
    """Sup over cubes Q and subsets E of (|E|/|Q|)^q w(Q)/w(E).

    On the grid the worst E of a given cell count is the set of lightest cells,
    so sorting each cube's values makes the inner sup exact.
    """
    if not q > 0:
        raise ValueError(f"exponent must be positive, got {q}")
    cubes = default_family(w.spec) if cubes is None else cubes
    best, wit, curve = -math.inf, None, []
    for size, starts in cubes.groups:
        K = size ** w.spec.dim
        frac = (np.arange(1, K + 1) / K) ** q
        worst = -math.inf
        for chunk in _chunks(starts, K):
            vals = np.sort(cube_windows(w.samples, chunk, size), axis=1)
            part = np.cumsum(vals, axis=1)
            total = part[:, -1:]
            num = frac * total
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(part > 0, num / np.where(part > 0, part, 1), math.inf)
            flat = int(np.argmax(ratio))
            i, k = divmod(flat, K)
            r = float(ratio[i, k])
            if r > worst:
                worst = r
            if r > best:
                best = r
                wit = {"cube": Cube(tuple(int(v) for v in chunk[i]), size), "k": k + 1, "ratio": r}
        curve.append((size / w.spec.N, worst))
    rep = WeightReport()
    rep.constants[("aplus", q)] = best
    rep.witnesses[("aplus", q)] = wit
    rep.curves[("aplus", q)] = curve
    return rep


def ap_constant(w: Weight, p: float, cubes: CubeFamily | None = None) -> WeightReport:
    """Classical Muckenhoupt constant; p = 1 uses ess-sup Mw/w over cells with w > 0."""
    if p < 1:
        raise ValueError(f"A_p needs p >= 1, got {p}")
    spec = w.spec
    rep = WeightReport()
    if p == 1:
        from .maximal import hl_maximal

        Mw = hl_maximal(w.base).samples
        pos = w.samples > 0
        ratio = np.where(pos, Mw / np.where(pos, w.samples, 1.0), -math.inf)
        idx = np.unravel_index(int(np.argmax(ratio)), spec.shape)
        rep.constants[("ap", 1.0)] = float(ratio[idx])
        rep.witnesses[("ap", 1.0)] = {"cube": Cube(tuple(int(i) for i in idx), 1), "ratio": float(ratio[idx])}
        rep.curves[("ap", 1.0)] = []
        return rep

    cubes = default_family(spec) if cubes is None else cubes
    zero = w.samples == 0
    dual = np.where(zero, 0.0, np.where(zero, 1.0, w.samples) ** (-1.0 / (p - 1.0)))
    Pd = prefix_table(spec, dual)
    Pz = prefix_table(spec, zero.astype(float))
    best, wit, curve, skipped = -math.inf, None, [], 0
    for size, starts in cubes.groups:
        vol = (size * spec.h) ** spec.dim
        a = w.aligned_masses(starts, size) / vol
        b = aligned_sums(Pd, starts, size) / vol
        val = a * np.maximum(b, 0.0) ** (p - 1.0)
        # a zero cell makes the dual average infinite; cubes of zero mass are undefined
        has_zero = aligned_sums(Pz, starts, size) > 0.5
        val = np.where(has_zero, np.where(a > 0, math.inf, -math.inf), val)
        skipped += int((a <= 0).sum())
        i = int(np.argmax(val))
        curve.append((size / spec.N, float(val[i])))
        if val[i] > best:
            best = float(val[i])
            wit = {"cube": Cube(tuple(int(v) for v in starts[i]), size), "ratio": best}
    rep.constants[("ap", p)] = best
    rep.witnesses[("ap", p)] = wit
    rep.curves[("ap", p)] = curve
    rep.skipped[("ap", p)] = skipped
    return rep


def doubling_constant(w: Weight, p: float, lambdas=(2.0,), cubes: CubeFamily | None = None) -> WeightReport:
    """Sup of w(lam Q) / (lam^{np} w(Q)); dilates leaving the domain are skipped and counted."""
    spec = w.spec
    cubes = default_family(spec) if cubes is None else cubes
    best, wit, curve, skipped = -math.inf, None, [], 0
    for size, starts in cubes.groups:
        worst = -math.inf
        for lam in lambdas:
            if not lam > 1:
                raise ValueError(f"dilation factor must exceed 1, got {lam}")
            grow = (lam - 1.0) * size / 2.0
            lo = starts - grow
            hi = starts + size + grow
            ok = np.all((lo >= -1e-9) & (hi <= spec.N + 1e-9), axis=1)
            skipped += int((~ok).sum())
            if not ok.any():
                continue
            big = w.masses(lo[ok], hi[ok])
            small = w.aligned_masses(starts[ok], size)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(small > 0, big / (lam ** (spec.dim * p) * np.where(small > 0, small, 1)), math.inf)
            i = int(np.argmax(ratio))
            r = float(ratio[i])
            worst = max(worst, r)
            if r > best:
                best = r
                Q = Cube(tuple(int(v) for v in starts[ok][i]), size)
                wit = {"cube": Q, "dilate": Q.dilate(lam), "lambda": float(lam), "ratio": r}
        if worst > -math.inf:
            curve.append((size / spec.N, worst))
    rep = WeightReport()
    rep.constants[("doubling", p)] = best
    rep.witnesses[("doubling", p)] = wit
    rep.curves[("doubling", p)] = curve
    rep.skipped[("doubling", p)] = skipped
    return rep


def reverse_holder_constant(w: Weight, r: float, cubes: CubeFamily | None = None) -> WeightReport:
    """Sup over cubes of (avg w^r)^{1/r} / avg w; zero-mass cubes are skipped."""
    if not r > 1:
        raise ValueError(f"reverse Holder exponent must exceed 1, got {r}")
    spec = w.spec
    cubes = default_family(spec) if cubes is None else cubes
    Pr = prefix_table(spec, w.samples ** r)
    best, wit, curve, skipped = -math.inf, None, [], 0
    for size, starts in cubes.groups:
        vol = (size * spec.h) ** spec.dim
        m1 = w.aligned_masses(starts, size) / vol
        mr = np.maximum(aligned_sums(Pr, starts, size), 0.0) / vol
        ok = m1 > 0
        skipped += int((~ok).sum())
        if not ok.any():
            continue
        val = mr[ok] ** (1.0 / r) / m1[ok]
        i = int(np.argmax(val))
        curve.append((size / spec.N, float(val[i])))
        if val[i] > best:
            best = float(val[i])
            wit = {"cube": Cube(tuple(int(v) for v in starts[ok][i]), size), "ratio": best}
    rep = WeightReport()
    rep.constants[("rh", r)] = best
    rep.witnesses[("rh", r)] = wit
    rep.curves[("rh", r)] = curve
    rep.skipped[("rh", r)] = skipped
    return rep


def _rh_growth(ladder: list[Weight], r: float) -> float:
    fine = reverse_holder_constant(ladder[0], r, translate_family(ladder[0].spec)).value()
    coarse = reverse_holder_constant(ladder[-1], r, translate_family(ladder[-1].spec)).value()
    return fine / coarse


def critical_index(w: Weight, tolerance: float = 0.05, r_max: float = 16.0,
                   growth: float = 1.2, octaves: int = 4) -> float:
    """Estimate of the supremal reverse Holder exponent.

    An exponent r counts as divergent when the RH_r constant grows by more than
    ``growth`` between the weight coarsened ``octaves`` times and the weight
    itself.  Bisection (to width ``tolerance``) locates the switch; ``inf`` is
    returned when nothing diverges up to ``r_max``.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    ladder = [w]
    for _ in range(octaves):
        if ladder[-1].spec.N < 8:
            break
        ladder.append(ladder[-1].coarsen())

    def divergent(r):
        return _rh_growth(ladder, r) > growth

    if not divergent(r_max):
        return math.inf
    lo, hi = 1.0, r_max
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if divergent(mid):
            hi = mid
        else:
            lo = mid
    return lo


@dataclass
class ClassPResult:
    ok: bool
    witnesses: list

    def __bool__(self):
        return self.ok


def class_p_check(w: Weight, delta: float) -> ClassPResult:
    """Partition the domain into delta-cubes and require positive mass in each."""
    spec = w.spec
    k = delta / spec.h
    if not (k >= 1 and abs(k - round(k)) < 1e-9 and spec.N % round(k) == 0):
        raise DomainError(f"delta={delta} is not a cell multiple dividing 2L (h={spec.h})")
    k = int(round(k))
    fam = translate_family(spec, min_size=k, max_size=k, stride=k)
    (size, starts), = fam.groups
    mass = w.aligned_masses(starts, size)
    bad = [Cube(tuple(int(v) for v in st), size) for st, m in zip(starts, mass) if not m > 0]
    return ClassPResult(not bad, bad)


def _origin_cell_average_2d(alpha: float) -> float:
    # mean of |x|^alpha over the unit square [0,1]^2, in polar form
    val, _ = sp_integrate.quad(lambda t: (1.0 / math.cos(t)) ** (alpha + 2.0), 0.0, math.pi / 4)
    return 2.0 * val / (alpha + 2.0)


def power_weight(alpha: float, spec: GridSpec) -> Weight:
    """|x|^alpha at cell midpoints; cells touching the origin get their exact average."""
    if not alpha > -spec.dim:
        raise ValueError(f"power weight needs alpha > -n, got {alpha}")
    mesh = spec.mesh()
    r = np.sqrt(sum(m * m for m in mesh))
    with np.errstate(divide="ignore"):
        s = r ** alpha
    touch = np.ones(spec.shape, dtype=bool)
    for m in mesh:
        touch &= np.abs(m) < spec.h
    if spec.dim == 1:
        s[touch] = spec.h ** alpha / (alpha + 1.0)
    else:
        s[touch] = spec.h ** alpha * _origin_cell_average_2d(alpha)
    return Weight(GridFunction(spec, s))


def constant_weight(spec: GridSpec, c: float = 1.0) -> Weight:
    return Weight(GridFunction.constant(spec, c))


def indicator_weight(spec: GridSpec, a: float, b: float, inside: float = 1.0, outside: float = 0.0) -> Weight:
    """Value ``inside`` on cells whose midpoint lies in [a, b]^n, ``outside`` elsewhere."""
    mesh = spec.mesh()
    m = np.ones(spec.shape, dtype=bool)
    for x in mesh:
        m &= (x >= a) & (x <= b)
    return Weight(GridFunction(spec, np.where(m, inside, outside).astype(float)))


def parse_weight(desc: str, spec: GridSpec) -> Weight:
    """``builtin:power:<alpha>``, ``builtin:const[:c]``, ``builtin:indicator:<a>:<b>``
    or a path to a saved GridFunction."""
    if desc.startswith("builtin:"):
        parts = desc.split(":")[1:]
        kind = parts[0]
        if kind == "power":
            return power_weight(float(parts[1]), spec)
        if kind == "const":
            return constant_weight(spec, float(parts[1]) if len(parts) > 1 else 1.0)
        if kind == "indicator":
            return indicator_weight(spec, float(parts[1]), float(parts[2]))
        raise ValueError(f"unknown builtin weight {desc!r}")
    # a stored weight carries its own grid
    return Weight(load_function(desc))


def weight_factory(desc: str) -> Callable[[GridSpec], Weight]:
    return lambda spec: parse_weight(desc, spec)
