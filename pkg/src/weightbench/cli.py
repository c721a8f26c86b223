"""Command-line entry point: weight analysis, decompositions, operators,
verification runs and parameter sweeps.  Every output is written atomically and
recorded with its sha256 digest in an append-only ``manifest.jsonl`` next to it."""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import decompose_ml
from .grid import GridSpec, load_function, save_function
from .molecules import Molecule, molecule_R, molecule_to_blocks
from .operators import make_operator
from .verify import (
    ExperimentConfig,
    bh_block_bound,
    decomposition_inequality,
    duality_study,
    sharpness_study,
    uniform_block_bound,
)
from .weights import (
    WeightReport,
    ap_constant,
    aplus_constant,
    critical_index,
    doubling_constant,
    parse_weight,
    reverse_holder_constant,
)

MANIFEST = "manifest.jsonl"
SWEEP_CAP = 256


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output plumbing


@contextlib.contextmanager
def atomic_path(path: str | Path):
    """Yield a temp path in the target directory; rename over the target on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path: str | Path, text: str) -> Path:
    with atomic_path(path) as tmp:
        tmp.write_text(text)
    return Path(path)


def write_json(path: str | Path, obj) -> Path:
    return write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def append_manifest(outputs: list[Path], argv: list[str], config: dict | None = None,
                    seed: int | None = None, descriptors: dict | None = None) -> None:
    """One JSON line per run in each output directory's manifest; never rewritten."""
    if not outputs:
        return
    entry = {
        "argv": argv,
        "version": __version__,
        "seed": seed,
        "config": config,
        "descriptors": descriptors or {},
        "outputs": {str(p): sha256(p) for p in outputs},
    }
    line = json.dumps(entry, sort_keys=True, default=str) + "\n"
    for d in sorted({p.resolve().parent for p in outputs}):
        with open(d / MANIFEST, "a") as fh:
            fh.write(line)


# --------------------------------------------------------------------------
# subcommands


def _grid_args(p):
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--L", type=float, default=2.0)
    p.add_argument("--N", type=int, default=256)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_weights_analyze(args) -> tuple[int, list[Path], dict]:
    spec = GridSpec(args.dim, args.L, args.N)
    w = parse_weight(args.weight, spec)
    spec = w.spec
    rep = WeightReport()
    for item in args.classes.split(","):
        name, _, val = item.strip().partition(":")
        x = float(val) if val else None
        if name == "aplus":
            rep.merge(aplus_constant(w, x))
        elif name == "ap":
            rep.merge(ap_constant(w, x))
        elif name == "rh":
            rep.merge(reverse_holder_constant(w, x))
        elif name == "doubling":
            rep.merge(doubling_constant(w, x))
        else:
            raise UsageError(f"unknown weight class {name!r}")
    out = {"weight": args.weight, "grid": {"dim": spec.dim, "L": spec.L, "N": spec.N}, **rep.to_json(spec)}
    if args.critical:
        r = critical_index(w)
        out["critical_index"] = "inf" if math.isinf(r) else r
    return _emit_json(args, out)


def _decomposition_json(d, blocks_dir: Path | None) -> tuple[dict, list[Path]]:
    terms, files = [], []
    for i, t in enumerate(d.terms):
        item = {"k": t.level, "cube": t.block.cube.to_dict(d.spec), "coef": t.coef}
        if blocks_dir is not None:
            path = blocks_dir / f"block_{i:05d}.csv"
            with atomic_path(path) as tmp:
                save_function(t.block.samples, tmp)
            item["samples"] = path.name
            files.append(path)
        terms.append(item)
    info = {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in d.info.items()}
    return {"p": d.p, "s": d.s, "pbar": d.pbar, "info": info, "terms": terms}, files


def cmd_blocks_decompose(args):
    f = load_function(args.input)
    w = parse_weight(args.weight, f.spec)
    d = decompose_ml(f, args.p, args.s, w)
    blocks_dir = Path(args.blocks_dir) if args.blocks_dir else None
    out, files = _decomposition_json(d, blocks_dir)
    code, paths, extra = _emit_json(args, out)
    return code, paths + files, extra


def cmd_molecules_split(args):
    f = load_function(args.input)
    w = parse_weight(args.weight, f.spec)
    vals = _floats(args.params)
    if len(vals) not in (3, 4):
        raise UsageError("--params expects p,s,q[,eps]")
    p, s, q = vals[:3]
    eps = vals[3] if len(vals) == 4 else None
    M = Molecule(np.array(_floats(args.center)), f, p, s, q, w, eps)
    d = molecule_to_blocks(M)
    blocks_dir = Path(args.blocks_dir) if args.blocks_dir else None
    out, files = _decomposition_json(d, blocks_dir)
    out.update(q=q, eps=M.eps, R=molecule_R(M), center=[float(c) for c in M.center], notes=M.notes)
    code, paths, extra = _emit_json(args, out)
    return code, paths + files, extra


def cmd_op_apply(args):
    f = load_function(args.input)
    T = make_operator(args.name)
    Tf = T(f)
    if not args.out:
        raise UsageError("op apply needs --out")
    with atomic_path(args.out) as tmp:
        save_function(Tf, tmp)
    return 0, [Path(args.out)], {}


VERIFY = {
    "prop75": ("operators", uniform_block_bound),
    "thm71": ("operators", decomposition_inequality),
    "prop712": ("operators", bh_block_bound),
    "sharpness": ("single", sharpness_study),
    "duality": ("single", duality_study),
}


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_text(Path(args.config).read_text()) if args.config else ExperimentConfig()
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        cfg.set(key, val)
    for flag in ("p", "s", "q", "weight", "trials", "seed", "threads"):
        val = getattr(args, flag, None)
        if val is not None:
            cfg.set(flag, str(val))
    if getattr(args, "op", None):
        cfg.set("operators", args.op)
    return cfg


def run_experiment(name: str, cfg: ExperimentConfig):
    kind, fn = VERIFY[name]
    if kind == "single":
        return [fn(cfg)]
    return [fn(op, cfg) for op in cfg.operators]


def reports_csv(reports) -> str:
    parts = []
    for i, rep in enumerate(reports):
        text = rep.csv_text()
        parts.append(text if i == 0 else text.split("\n", 1)[1])
    return "".join(parts)


def cmd_verify(args):
    cfg = load_config(args)
    reports = run_experiment(args.experiment, cfg)
    out = {"schema": "weightbench.verify/1", "experiment": args.experiment, "config": cfg.to_dict(),
           "reports": [r.to_json() for r in reports]}
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        gate = "" if r.hypothesis_met else " (hypothesis not met)"
        print(f"{args.experiment} {r.operator}: max={r.max:.6g} res-ratio={r.resolution_ratio:.3g} "
              f"scale-ratio={r.scale_ratio:.3g} slope={r.slope:.4g} {status}{gate}")
    paths = []
    if args.out:
        paths.append(write_json(args.out, out))
    if args.csv:
        paths.append(write_text(args.csv, reports_csv(reports)))
    code = 0
    if args.strict and not all(r.hypothesis_met and r.passed for r in reports):
        code = 1
    return code, paths, {"config": cfg.to_dict(), "seed": cfg.seed}


SWEEP_METRICS = ("max", "median", "slope", "resolution_ratio", "scale_ratio", "passed")


def _metric(report_json: dict, name: str):
    if name in report_json:
        return report_json[name]
    if name in report_json.get("extra", {}):
        return report_json["extra"][name]
    raise UsageError(f"unknown metric {name!r}")


def cmd_sweep(args):
    base = load_config(args)
    axes = []
    for item in args.grid or []:
        key, sep, vals = item.partition("=")
        if not sep:
            raise UsageError(f"--grid expects key=v1;v2;..., got {item!r}")
        sep_char = ";" if ";" in vals else ","
        if key in ("resolutions", "grid.N", "N", "L_ladder", "ladder", "operators", "ops"):
            sep_char = ";"
        axes.append((key, [v for v in vals.split(sep_char) if v != ""]))
    combos = list(itertools.product(*[v for _, v in axes])) if axes else [()]
    if len(combos) > args.max_combos:
        raise UsageError(f"sweep grid has {len(combos)} combinations, cap is {args.max_combos}")
    metrics = [m.strip() for m in args.metric.split(",") if m.strip()]

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([k for k, _ in axes] + ["operator", "metric", "value"])
    for combo in combos:
        cfg = ExperimentConfig(**base.to_dict())
        for (key, _), val in zip(axes, combo):
            cfg.set(key, val)
        for rep in run_experiment(args.experiment, cfg):
            js = rep.to_json()
            for m in metrics:
                v = _metric(js, m)
                wr.writerow(list(combo) + [rep.operator, m, repr(v) if isinstance(v, float) else v])
    text = buf.getvalue()
    paths = []
    if args.csv:
        paths.append(write_text(args.csv, text))
    else:
        sys.stdout.write(text)
    return 0, paths, {"config": base.to_dict(), "seed": base.seed}


def _emit_json(args, obj):
    if args.out:
        return 0, [write_json(args.out, obj)], {}
    print(json.dumps(obj, indent=2, sort_keys=True))
    return 0, [], {}


# --------------------------------------------------------------------------
# parser


def _common(p, config=True):
    p.add_argument("--out", help="output path (JSON unless stated otherwise)")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", help="exit 1 when a hypothesis gate or check fails")
    p.add_argument("--threads", type=int, help="worker threads (WEIGHTBENCH_THREADS overrides)")
    if config:
        p.add_argument("--config", help="plain-text key=value experiment config")
        p.add_argument("--csv", help="long-format CSV output")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config entry")
        p.add_argument("--p", type=float)
        p.add_argument("--s", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--weight")
        p.add_argument("--trials", type=int)
        p.add_argument("--op", help="comma-separated operator names")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="weightbench", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    wp = sub.add_parser("weights").add_subparsers(dest="action", required=True, parser_class=_Parser)
    wa = wp.add_parser("analyze", help="estimate weight-class constants")
    wa.add_argument("--weight", required=True, help="builtin:power:<alpha>, builtin:const[:c], or a file")
    wa.add_argument("--classes", default="aplus:1.5", help="comma list of aplus:q, ap:p, rh:r, doubling:p")
    wa.add_argument("--critical", action="store_true", help="also estimate the critical reverse Holder index")
    _grid_args(wa)
    _common(wa, config=False)
    wa.set_defaults(fn=cmd_weights_analyze)

    bp = sub.add_parser("blocks").add_subparsers(dest="action", required=True, parser_class=_Parser)
    bd = bp.add_parser("decompose", help="level-set block decomposition of a stored function")
    bd.add_argument("--input", required=True)
    bd.add_argument("--weight", default="builtin:const")
    bd.add_argument("--p", type=float, default=2.0)
    bd.add_argument("--s", type=float, default=4.0)
    bd.add_argument("--blocks-dir", help="directory for per-block sample files")
    _common(bd, config=False)
    bd.set_defaults(fn=cmd_blocks_decompose)

    mp = sub.add_parser("molecules").add_subparsers(dest="action", required=True, parser_class=_Parser)
    ms = mp.add_parser("split", help="annular block split of a stored molecule")
    ms.add_argument("--input", required=True)
    ms.add_argument("--center", required=True, help="x0 (comma separated in 2D)")
    ms.add_argument("--params", required=True, help="p,s,q[,eps]")
    ms.add_argument("--weight", default="builtin:const")
    ms.add_argument("--blocks-dir")
    _common(ms, config=False)
    ms.set_defaults(fn=cmd_molecules_split)

    op = sub.add_parser("op").add_subparsers(dest="action", required=True, parser_class=_Parser)
    oa = op.add_parser("apply", help="apply an operator to a stored function")
    oa.add_argument("--name", required=True)
    oa.add_argument("--input", required=True)
    _common(oa, config=False)
    oa.set_defaults(fn=cmd_op_apply)

    vp = sub.add_parser("verify", help="run an inequality experiment",
                        description="prop75: sup ||Tb|| over random blocks; thm71: ||Tf|| against the "
                                    "coefficient norm of random block sums; prop712: molecule size of Tb; "
                                    "sharpness: log growth of ||M chi|| at p = 1; duality: block/Morrey pairing")
    vp.add_argument("experiment", choices=sorted(VERIFY))
    _common(vp)
    vp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("sweep", help="run an experiment over a parameter grid")
    sp.add_argument("experiment", choices=sorted(VERIFY))
    sp.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                    help="one axis; use ';' between values that themselves contain commas")
    sp.add_argument("--metric", default="max", help=f"comma list from {', '.join(SWEEP_METRICS)} or report extras")
    sp.add_argument("--max-combos", type=int, default=SWEEP_CAP)
    _common(sp)
    sp.set_defaults(fn=cmd_sweep)
    return ap


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        code, paths, extra = args.fn(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"weightbench: error: {exc}", file=sys.stderr)
        return 2
    descriptors = {k: getattr(args, k) for k in ("weight", "input", "name") if getattr(args, k, None)}
    append_manifest(paths, argv, extra.get("config"), extra.get("seed", getattr(args, "seed", None)), descriptors)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
