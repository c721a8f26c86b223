"""Inequality harness: seeded random blocks and decompositions pushed through
operators, with sup/stability reports across resolution and scale ladders."""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import (
    Block,
    BlockDecomposition,
    block_lpw_bound,
    coefficient_quasinorm,
    make_block,
    reconstruct,
)
from .grid import Cube, GridFunction, GridSpec
from .maximal import hl_maximal, lpw_norm
from .molecules import Molecule, default_epsilon, molecule_R, molecule_to_blocks
from .operators import OperatorHandle, make_operator
from .weights import Weight, constant_weight, critical_index, parse_weight

REPORT_SCHEMA = "weightbench.bound-report/1"


@dataclass
class ExperimentConfig:
    dim: int = 1
    L: float = 2.0
    resolutions: tuple[int, ...] = (512, 1024)
    weight: str = "builtin:power:0.3"
    p: float = 2.0
    q: float = 1.5
    s: float = 8.0
    eps: float | None = None
    operators: tuple[str, ...] = ("hl_max",)
    trials: int = 200
    seed: int = 0
    # support cubes have side 2L * 2^-level for level in [min_level, min_level + octaves]
    min_level: int = 2
    octaves: int = 4
    max_terms: int = 6
    stability: float = 2.0
    r_w: float | None = None
    L_ladder: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0)
    cells_per_unit: int = 16
    threads: int = 1

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """Flat ``key=value`` lines; ``grid.`` and ``exp.`` prefixes are optional."""
        cfg = cls()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"config line without '=': {raw!r}")
            cfg.set(key.strip(), val.strip())
        return cfg

    def set(self, key: str, val: str) -> None:
        key = key.split(".", 1)[1] if key.startswith(("grid.", "exp.", "weight.")) else key
        aliases = {"N": "resolutions", "ops": "operators", "ladder": "L_ladder", "n": "dim"}
        key = aliases.get(key, key)
        if key not in self.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        cur = getattr(self, key)
        if key in ("resolutions",):
            setattr(self, key, tuple(int(v) for v in val.split(",")))
        elif key == "L_ladder":
            setattr(self, key, tuple(float(v) for v in val.split(",")) if val else ())
        elif key == "operators":
            setattr(self, key, tuple(v.strip() for v in val.split(",") if v.strip()))
        elif key in ("eps", "r_w"):
            setattr(self, key, None if val in ("", "none", "None") else float(val))
        elif key == "weight":
            setattr(self, key, val)
        elif isinstance(cur, bool):
            setattr(self, key, val.lower() in ("1", "true", "yes"))
        elif isinstance(cur, int):
            setattr(self, key, int(val))
        else:
            setattr(self, key, float(val))

    def to_dict(self) -> dict:
        return asdict(self)

    def spec(self, N: int) -> GridSpec:
        return GridSpec(self.dim, self.L, N)

    def levels(self) -> list[int]:
        return list(range(self.min_level, self.min_level + self.octaves + 1))

    def epsilon(self) -> float:
        return default_epsilon(self.p, self.q) if self.eps is None else self.eps


@dataclass
class Gate:
    name: str
    mirrors: str
    ok: bool
    detail: str


def check_gates(cfg: ExperimentConfig, r_w: float, molecular: bool = False) -> list[Gate]:
    """Hypotheses of the operator bounds, evaluated with the estimated critical index."""
    lower = cfg.p if math.isinf(r_w) else r_w * cfg.p / (r_w - 1.0)
    gates = [
        Gate("q_below_p", "weight class A_q^+ with 0 < q < p (block and decomposition bounds)",
             0 < cfg.q < cfg.p, f"q={cfg.q:g}, p={cfg.p:g}"),
        Gate("rh_exponent", "r_w p/(r_w-1) < s (block-to-L^p_w operator bound)",
             lower < cfg.s, f"r_w={r_w:g}, r_w p/(r_w-1)={lower:g}, s={cfg.s:g}"),
    ]
    if molecular:
        gates.append(Gate("molecular_exponent", "max(r_w p/(r_w-1), p/q) < s (operator image is a molecule)",
                          cfg.p / cfg.q < cfg.s and lower < cfg.s, f"p/q={cfg.p / cfg.q:g}, s={cfg.s:g}"))
    return gates


@dataclass
class BoundReport:
    experiment: str
    operator: str
    rows: list[dict] = field(default_factory=list)
    per_resolution: dict = field(default_factory=dict)
    per_scale: dict = field(default_factory=dict)
    max: float = 0.0
    median: float = 0.0
    slope: float = 0.0
    resolution_ratio: float = 1.0
    scale_ratio: float = 1.0
    threshold: float = 2.0
    passed: bool = True
    gates: list = field(default_factory=list)
    hypothesis_met: bool = True
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
            return v

        out = {
            "schema": REPORT_SCHEMA,
            "experiment": self.experiment,
            "operator": self.operator,
            "trials": len(self.rows),
            "max": enc(self.max),
            "median": enc(self.median),
            "slope": enc(self.slope),
            "resolution_ratio": enc(self.resolution_ratio),
            "scale_ratio": enc(self.scale_ratio),
            "threshold": self.threshold,
            "passed": self.passed,
            "hypothesis_met": self.hypothesis_met,
            "per_resolution": {str(k): enc(v) for k, v in self.per_resolution.items()},
            "per_scale": {str(k): enc(v) for k, v in self.per_scale.items()},
            "gates": [asdict(g) for g in self.gates],
            "extra": {k: enc(v) if isinstance(v, float) else v for k, v in self.extra.items()},
        }
        if "hypothesis not met" in self.extra.get("status", ""):
            out["status"] = self.extra["status"]
        return out

    def csv_text(self) -> str:
        cols = ["experiment", "operator", "resolution", "trial", "level", "value"]
        extra = sorted({k for r in self.rows for k in r} - set(cols))
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols + extra)
        for r in self.rows:
            row = [self.experiment, self.operator] + [r.get(c) for c in cols[2:]] + [r.get(c) for c in extra]
            wr.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def _slope(xs, ys) -> float:
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or not np.all(ys > 0):
        return 0.0
    return float(np.polyfit(xs, np.log(ys), 1)[0])


def summarize(rep: BoundReport, threshold: float, scale_gate: bool = True) -> BoundReport:
    """Fill sups and ratios; ``scale_gate=False`` judges stability on resolution alone."""
    rep.threshold = threshold
    vals = np.array([r["value"] for r in rep.rows], dtype=float)
    if vals.size == 0:
        return rep
    rep.max = float(vals.max())
    rep.median = float(np.median(vals))
    for r in rep.rows:
        N, lev, v = r["resolution"], r["level"], r["value"]
        rep.per_resolution[N] = max(rep.per_resolution.get(N, 0.0), v)
        rep.per_scale.setdefault(N, {})
        rep.per_scale[N][lev] = max(rep.per_scale[N].get(lev, 0.0), v)
    res = sorted(rep.per_resolution)
    sups = [rep.per_resolution[N] for N in res]
    rep.slope = _slope(res, sups)
    rep.resolution_ratio = _spread(sups)
    rep.scale_ratio = max(_spread(list(d.values())) for d in rep.per_scale.values())
    rep.per_scale = {N: {str(k): v for k, v in sorted(d.items())} for N, d in rep.per_scale.items()}
    rep.passed = bool(rep.resolution_ratio <= threshold and (rep.scale_ratio <= threshold or not scale_gate))
    return rep


def _spread(vals) -> float:
    vals = [v for v in vals if v > 0]
    if not vals:
        return 1.0
    return max(vals) / min(vals)


# --------------------------------------------------------------------------
# random objects


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent deterministic stream per trial."""
    return np.random.default_rng([seed, trial])


def random_profile(rng: np.random.Generator, n_cells: tuple[int, ...]) -> np.ndarray:
    """Sign-mixed profile on a cube: rough (random sign per cell) or smooth."""
    kind = rng.integers(2)
    if kind == 0:
        signs = rng.choice([-1.0, 1.0], size=n_cells)
        return signs * rng.uniform(0.5, 1.5, size=n_cells)
    out = np.zeros(n_cells)
    grids = np.meshgrid(*[(np.arange(m) + 0.5) / m for m in n_cells], indexing="ij")
    for _ in range(3):
        freq = rng.integers(0, 4, size=len(n_cells))
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(k * g for k, g in zip(freq, grids))
        out = out + rng.normal() * np.cos(2 * np.pi * arg + phase)
    if not np.any(out):
        out[(0,) * len(n_cells)] = 1.0
    return out


def random_block(spec: GridSpec, w: Weight, p: float, s: float, rng: np.random.Generator,
                 levels) -> tuple[Block, int]:
    """Random dyadic support (level, position drawn first), random profile, normalized."""
    level = int(rng.choice(levels))
    level = min(level, spec.levels)
    index = tuple(int(v) for v in rng.integers(0, 2 ** level, size=spec.dim))
    Q = Cube.dyadic(spec, level, index)
    prof = random_profile(rng, (int(Q.size),) * spec.dim)
    g = np.zeros(spec.shape)
    g[Q.slices(spec)] = prof
    _, blk = make_block(GridFunction(spec, g), Q, p, s, w)
    return blk, level


def random_decomposition(spec: GridSpec, w: Weight, cfg: ExperimentConfig,
                         rng: np.random.Generator) -> tuple[BlockDecomposition, int]:
    """Finite sum of random blocks; with max_terms == 1 it is one block with coefficient 1."""
    d = BlockDecomposition(cfg.p, cfg.s, w, spec)
    if cfg.max_terms == 1:
        blk, lev = random_block(spec, w, cfg.p, cfg.s, rng, cfg.levels())
        d.add(1.0, blk, lev)
        return d, lev
    n = int(rng.integers(1, cfg.max_terms + 1))
    top = None
    for _ in range(n):
        blk, lev = random_block(spec, w, cfg.p, cfg.s, rng, cfg.levels())
        coef = float(rng.choice([-1.0, 1.0]) * rng.lognormal(0.0, 1.0))
        d.add(coef, blk, lev)
        top = lev if top is None else min(top, lev)
    return d, top


# --------------------------------------------------------------------------
# experiments


def _threads(cfg: ExperimentConfig) -> int:
    env = os.environ.get("WEIGHTBENCH_THREADS")
    return max(1, int(env)) if env else max(1, cfg.threads)


def _run_trials(cfg: ExperimentConfig, fn) -> list:
    """fn(N, spec, w, trial) -> row; rows come back in (resolution, trial) order."""
    jobs = []
    for N in cfg.resolutions:
        spec = cfg.spec(N)
        w = parse_weight(cfg.weight, spec)
        jobs.extend((N, spec, w, t) for t in range(cfg.trials))
    n = _threads(cfg)
    if n == 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(lambda j: fn(*j), jobs))


def estimated_rw(cfg: ExperimentConfig) -> float:
    if cfg.r_w is not None:
        return cfg.r_w
    spec = cfg.spec(max(cfg.resolutions))
    return critical_index(parse_weight(cfg.weight, spec))


def _start(cfg: ExperimentConfig, name: str, T: OperatorHandle, molecular: bool = False) -> BoundReport:
    r_w = estimated_rw(cfg)
    gates = check_gates(cfg, r_w, molecular)
    rep = BoundReport(name, T.name, gates=gates, hypothesis_met=all(g.ok for g in gates))
    rep.extra["r_w"] = r_w
    if not rep.hypothesis_met:
        rep.extra["status"] = "hypothesis not met (informational run)"
    return rep


def uniform_block_bound(T: OperatorHandle | str, cfg: ExperimentConfig) -> BoundReport:
    """sup over random blocks b of ||Tb||_{L^p_w}, with stability across ladders."""
    T = make_operator(T) if isinstance(T, str) else T
    rep = _start(cfg, "uniform_block_bound", T)

    def one(N, spec, w, t):
        blk, lev = random_block(spec, w, cfg.p, cfg.s, trial_rng(cfg.seed, t), cfg.levels())
        return {"resolution": N, "trial": t, "level": lev, "value": lpw_norm(T(blk.samples), cfg.p, w)}

    rep.rows = _run_trials(cfg, one)
    return summarize(rep, cfg.stability)


def decomposition_inequality(T: OperatorHandle | str, cfg: ExperimentConfig) -> BoundReport:
    """sup of ||T(sum lam_k a_k)||_{L^p_w} / (sum |lam_k|^pbar)^{1/pbar} over random decompositions."""
    T = make_operator(T) if isinstance(T, str) else T
    rep = _start(cfg, "decomposition_inequality", T)

    def one(N, spec, w, t):
        d, lev = random_decomposition(spec, w, cfg, trial_rng(cfg.seed, t))
        cq = coefficient_quasinorm(d)
        val = 0.0 if cq == 0 else lpw_norm(T(reconstruct(d)), cfg.p, w) / cq
        return {"resolution": N, "trial": t, "level": lev, "value": val, "terms": len(d)}

    rep.rows = _run_trials(cfg, one)
    # the level of a mixed-scale sum is its coarsest term, so per-scale sups are informational
    return summarize(rep, cfg.stability, scale_gate=cfg.max_terms == 1)


def bh_block_bound(T: OperatorHandle | str, cfg: ExperimentConfig) -> BoundReport:
    """For random blocks b, R(Tb) as a molecule centred at the block centre, and the
    coefficient quasinorm of its annular block split."""
    T = make_operator(T) if isinstance(T, str) else T
    rep = _start(cfg, "bh_block_bound", T, molecular=True)
    eps = cfg.epsilon()

    def one(N, spec, w, t):
        blk, lev = random_block(spec, w, cfg.p, cfg.s, trial_rng(cfg.seed, t), cfg.levels())
        M = Molecule(blk.center(), T(blk.samples), cfg.p, cfg.s, cfg.q, w, eps)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            d = molecule_to_blocks(M)
        return {"resolution": N, "trial": t, "level": lev, "value": molecule_R(M),
                "coef": coefficient_quasinorm(d), "clamped": int(bool(caught))}

    rep.rows = _run_trials(cfg, one)
    summarize(rep, cfg.stability)
    coefs = [r["coef"] for r in rep.rows]
    rep.extra["max_coefficient_quasinorm"] = float(max(coefs)) if coefs else 0.0
    rep.extra["clamped"] = int(sum(r["clamped"] for r in rep.rows))
    return rep


def indicator_maximal_norms(L_ladder, p: float, cells_per_unit: int) -> list[float]:
    """||M chi_[0,1]||_{L^p([-L, L])} with a fixed cell size 1/cells_per_unit."""
    out = []
    for L in L_ladder:
        spec = GridSpec(1, float(L), int(round(2 * L * cells_per_unit)))
        x = spec.midpoints()
        f = GridFunction(spec, ((x >= 0) & (x < 1)).astype(float))
        out.append(lpw_norm(hl_maximal(f), p, None))
    return out


def sharpness_study(cfg: ExperimentConfig) -> BoundReport:
    """Growth of ||M chi_[0,1]||_{L^1([-L,L])} in log L (slope near 2) against the
    bounded L^2 case, plus the block-scale growth of sup ||Mb||_{L^1} at q = p = 1."""
    if not cfg.L_ladder:
        raise ValueError("sharpness study needs a nonempty L ladder")
    rep = BoundReport("sharpness", "hl_max", threshold=0.15)
    l1 = indicator_maximal_norms(cfg.L_ladder, 1.0, cfg.cells_per_unit)
    l2 = indicator_maximal_norms(cfg.L_ladder, 2.0, cfg.cells_per_unit)
    logL = np.log(np.asarray(cfg.L_ladder, dtype=float))
    slope1 = float(np.polyfit(logL, l1, 1)[0]) if len(logL) > 1 else 0.0
    slope2 = float(np.polyfit(logL, l2, 1)[0]) if len(logL) > 1 else 0.0
    for i, L in enumerate(cfg.L_ladder):
        rep.rows.append({"resolution": int(round(2 * L * cfg.cells_per_unit)), "trial": i,
                         "level": float(L), "value": float(l1[i]), "l2": float(l2[i])})
    rep.max = float(max(l1))
    rep.median = float(np.median(l1))
    rep.slope = slope1
    rep.extra.update(slope_l1=slope1, slope_l2=slope2, expected_l1_slope=2.0)
    rep.extra["block_growth"] = _block_scale_growth(cfg)
    rep.passed = bool(abs(slope1 - 2.0) <= 0.15 * 2.0 and abs(slope2) <= 0.1)
    return rep


def _block_scale_growth(cfg: ExperimentConfig, per_level: int = 4) -> dict:
    """sup ||Mb||_{L^1} for (1,1)-blocks (w = 1) by support level on a fixed domain."""
    spec = GridSpec(1, 16.0, 512)
    w = constant_weight(spec)
    sups = {}
    for level in range(1, 9):
        best = 0.0
        for t in range(per_level):
            rng = trial_rng(cfg.seed, 1000 * level + t)
            blk, _ = random_block(spec, w, 1.0, 1.0, rng, [level])
            best = max(best, lpw_norm(hl_maximal(blk.samples), 1.0, None))
        sups[level] = best
    levels = np.array(sorted(sups), dtype=float)
    vals = np.array([sups[k] for k in sorted(sups)])
    slope = float(np.polyfit(levels * math.log(2), vals, 1)[0])
    return {"sup_by_level": {str(int(k)): float(v) for k, v in zip(levels, vals)},
            "slope_per_log_scale": slope}


def block_identity_values(cfg: ExperimentConfig, N: int) -> list[float]:
    """block_lpw_bound of the same blocks uniform_block_bound draws at resolution N."""
    spec = cfg.spec(N)
    w = parse_weight(cfg.weight, spec)
    return [block_lpw_bound(random_block(spec, w, cfg.p, cfg.s, trial_rng(cfg.seed, t), cfg.levels())[0])
            for t in range(cfg.trials)]


def random_test_function(spec: GridSpec, rng: np.random.Generator) -> GridFunction:
    """Pairing partner for the duality checks: signed cell values plus a smooth bump."""
    x = spec.mesh()
    bump = np.exp(-sum((xi - c) ** 2 for xi, c in zip(x, rng.uniform(-spec.L / 2, spec.L / 2, spec.dim))))
    return GridFunction(spec, rng.normal(size=spec.shape) + 2.0 * rng.normal() * bump)


def duality_study(cfg: ExperimentConfig) -> BoundReport:
    """|int f g| / (coefficient quasinorm * Morrey norm of g) over random pairs.

    Rows with terms == 1 are single normalized blocks, where the ratio is at most 1
    up to rounding; multi-block rows measure the constant for general decompositions.
    """
    from .morrey import duality_pairing_check

    rep = BoundReport("duality", "pairing", threshold=cfg.stability)
    r_w = estimated_rw(cfg)
    rep.gates = check_gates(cfg, r_w)[1:]
    rep.hypothesis_met = all(g.ok for g in rep.gates)
    single = ExperimentConfig(**{**cfg.to_dict(), "max_terms": 1})

    def one(N, spec, w, t):
        rng = trial_rng(cfg.seed, t)
        d1, lev = random_decomposition(spec, w, single, rng)
        g = random_test_function(spec, rng)
        r1 = duality_pairing_check(d1, g, r_w=r_w)
        dm, _ = random_decomposition(spec, w, cfg, rng)
        rm = duality_pairing_check(dm, g, r_w=r_w)
        return [{"resolution": N, "trial": t, "level": lev, "value": r1.ratio, "terms": 1},
                {"resolution": N, "trial": t, "level": lev, "value": rm.ratio, "terms": len(dm)}]

    pairs = _run_trials(cfg, one)
    rep.rows = [r for pair in pairs for r in pair]
    singles = [r["value"] for r in rep.rows if r["terms"] == 1]
    multi = {}
    for r in rep.rows[1::2]:
        multi[r["resolution"]] = max(multi.get(r["resolution"], 0.0), r["value"])
    rep.max = float(max(singles)) if singles else 0.0
    rep.median = float(np.median(singles)) if singles else 0.0
    rep.per_resolution = multi
    rep.resolution_ratio = _spread(list(multi.values()))
    rep.slope = _slope(sorted(multi), [multi[k] for k in sorted(multi)])
    rep.extra.update(r_w=r_w, single_block_max=rep.max,
                     multi_block_max=float(max(multi.values())) if multi else 0.0)
    rep.passed = bool(rep.max <= 1 + 1e-9 and rep.resolution_ratio <= cfg.stability)
    return rep
