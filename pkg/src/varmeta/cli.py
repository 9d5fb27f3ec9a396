"""Command-line interface: ``varmeta {analyze,test,qq,forest,incremental,simulate,fixture}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .datasets import FIXTURES
from .diagnostics import (
    INCREMENTAL_TESTS,
    WEIGHT_RULES,
    forest_rows,
    incremental_pvalues,
    qq_data,
    study_weights,
    zscores,
)
from .estimators import ESTIMATORS, EstimationError, estimate
from .ingest import IngestError, StudyTable, ingest, table_to_csv
from .meta_tests import DEFAULT_MC_REPLICATES, MIN_MC_REPLICATES, run_all
from .report import dumps_report, records_text, table_text, to_plain
from .simulation import METHODS, SimDesign, bmd_design, cohens_d_table, estimator_table, size_grid, transform_samples
from .special import DomainError, FDist
from .vst import TransformKind

SEED_ENV = "VARMETA_SEED"
MODELS = tuple(ESTIMATORS)


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class RunConfig:
    transform: TransformKind = TransformKind.T3
    model: str = "re"
    alpha: float = 0.05
    mc_replicates: int = DEFAULT_MC_REPLICATES
    seed: int = 0
    weights: str = "inverse-sqrt-c1"
    interval: str = "t"
    incremental_test: str = "Zw"

    def __post_init__(self):
        object.__setattr__(self, "transform", TransformKind.parse(self.transform))
        problems = []
        if self.model not in MODELS:
            problems.append(f"model must be one of {', '.join(MODELS)}")
        if not 0 < self.alpha < 1:
            problems.append("alpha must lie in (0, 1)")
        if self.mc_replicates < MIN_MC_REPLICATES:
            problems.append(f"mc-replicates must be at least {MIN_MC_REPLICATES}")
        if not 0 <= self.seed < 2 ** 64:
            problems.append("seed must be a 64-bit unsigned integer")
        if self.weights not in WEIGHT_RULES:
            problems.append(f"weights must be one of {', '.join(WEIGHT_RULES)}")
        if self.interval not in ("t", "normal"):
            problems.append("interval must be 't' or 'normal'")
        if self.incremental_test not in INCREMENTAL_TESTS:
            problems.append(f"incremental-test must be one of {', '.join(INCREMENTAL_TESTS)}")
        if problems:
            raise ConfigError(problems)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError([f"{SEED_ENV}={raw!r} is not an integer"]) from None


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------

def _estimate(studies, config: RunConfig):
    kw = {}
    if config.model == "pivot":
        kw["w"] = study_weights(studies, config.weights)
    if config.model == "re":
        kw["interval"] = config.interval
    return estimate(config.model, studies, config.alpha, **kw)


def run_tests(table: StudyTable, config: RunConfig) -> dict:
    studies = table.studies()
    z = zscores(studies, config.transform)
    w = study_weights(studies, config.weights)
    tests = run_all(z, w, config.mc_replicates, config.seed)
    return {"transform": config.transform, "z_scores": z, "weights": w / w.sum(), "tests": tests}


def run_analyze(table: StudyTable, config: RunConfig) -> dict:
    studies = table.studies()
    tested = run_tests(table, config)
    curve = incremental_pvalues(
        studies, config.transform, config.weights, config.mc_replicates, config.seed, config.incremental_test
    )
    return {
        "version": __version__,
        "config": asdict(config),
        "studies": [
            {"study_id": r.study_id, "s": r.ratio, "n1": r.n1, "n2": r.n2, "nu1": r.n1 - 1, "nu2": r.n2 - 1}
            for r in table.rows
        ],
        "forest": forest_rows(studies, config.alpha),
        "z_scores": tested["z_scores"],
        "tests": tested["tests"],
        "estimate": _estimate(studies, config),
        "qq": qq_data(studies, config.transform),
        "incremental": curve,
    }


def _qq_table(qq) -> str:
    return table_text(("study_id", "theoretical", "observed"), zip(qq.study_ids, qq.theoretical, qq.observed))


def _incremental_table(curve) -> str:
    rows = ((p.k_star, p.included_study_ids[-1], p.statistic, p.p_value) for p in curve.points)
    return table_text(("k_star", "added_study_id", "statistic", "p_value"), rows)


def _forest_table(rows, overall) -> str:
    body = [(r.study_id, r.ratio, r.ci_low, r.ci_high, r.p_value) for r in rows]
    body.append((f"overall:{overall.model}", overall.rho_hat, overall.ci_low, overall.ci_high, None))
    return table_text(("study_id", "ratio", "ci_low", "ci_high", "p_value"), body)


def _svg_dir(args) -> Optional[Path]:
    if args.svg is None:
        return None
    path = Path(args.svg)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Simulation config
# ---------------------------------------------------------------------------

EXPERIMENTS = ("size_grid", "estimator_table", "cohens_d", "transform_samples")


def _grid(spec, where, problems):
    if isinstance(spec, dict):
        try:
            values = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except (KeyError, TypeError, ValueError):
            problems.append(f"{where}: grid object needs numeric start, stop, num")
            return None
        return [float(v) for v in (values.round() if spec.get("round", True) else values)]
    if isinstance(spec, list) and spec and all(isinstance(v, (int, float)) for v in spec):
        return [float(v) for v in spec]
    problems.append(f"{where}: expected a list of numbers or a {{start, stop, num}} object")
    return None


def _arm_sizes(spec, where, problems):
    if spec in (None, "bmd"):
        return bmd_design().arm_sizes
    if isinstance(spec, dict):
        base = _arm_sizes(spec.get("base", "bmd"), where, problems)
        if base is None:
            return None
        copies, scale = int(spec.get("copies", 1)), int(spec.get("scale", 1))
        return tuple((a * scale, b * scale) for a, b in base) * copies
    if isinstance(spec, list) and all(isinstance(p, list) and len(p) == 2 for p in spec):
        return tuple((int(a), int(b)) for a, b in spec)
    problems.append(f"{where}: design must be 'bmd', a list of [n1, n2] pairs or {{base, copies, scale}}")
    return None


def _as_list(value):
    return value if isinstance(value, list) else [value]


def parse_sim_config(doc: dict, default_seed_value: int = 0) -> list[dict]:
    """Validate a simulation config and return normalized experiment specs."""
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    seed = doc.get("seed", default_seed_value)
    if not isinstance(seed, int) or seed < 0:
        problems.append("seed must be a nonnegative integer")
    exps = doc.get("experiments")
    if not isinstance(exps, list) or not exps:
        problems.append("experiments must be a non-empty list")
        raise ConfigError(problems)
    out = []
    names = set()
    for i, exp in enumerate(exps):
        where = f"experiments[{i}]"
        if not isinstance(exp, dict):
            problems.append(f"{where}: must be an object")
            continue
        kind = exp.get("type")
        if kind not in EXPERIMENTS:
            problems.append(f"{where}: type must be one of {', '.join(EXPERIMENTS)}")
            continue
        name = str(exp.get("name", f"{kind}_{i}"))
        if name in names:
            problems.append(f"{where}: duplicate name {name!r}")
        names.add(name)
        spec = {"type": kind, "name": name, "seed": int(exp.get("seed", seed)) if isinstance(seed, int) else 0}
        try:
            if kind == "size_grid":
                spec["transform"] = TransformKind.parse(exp.get("transform", "T3"))
                spec["nu"] = _grid(exp.get("nu", {"start": 5, "stop": 100, "num": 10}), where + ".nu", problems)
                spec["alpha"] = float(exp.get("alpha", 0.05))
                spec["replicates"] = int(exp.get("replicates", 10_000))
                if spec["replicates"] < 1:
                    problems.append(f"{where}: replicates must be positive")
            elif kind == "estimator_table":
                spec["arm_sizes"] = _arm_sizes(exp.get("design", "bmd"), where + ".design", problems)
                spec["rho"] = [float(v) for v in _as_list(exp.get("rho", 1.0))]
                spec["tau"] = [float(v) for v in _as_list(exp.get("tau", 0.0))]
                spec["replicates"] = int(exp.get("replicates", 1000))
                spec["alpha"] = float(exp.get("alpha", 0.05))
                spec["methods"] = list(exp.get("methods", METHODS))
                spec["workers"] = int(exp.get("workers", 1))
                bad = [m for m in spec["methods"] if m not in METHODS]
                if bad:
                    problems.append(f"{where}: unknown methods {bad}")
                if spec["arm_sizes"] is not None:
                    SimDesign(spec["arm_sizes"], spec["rho"][0], spec["tau"][0], spec["replicates"], spec["alpha"])
            elif kind == "cohens_d":
                spec["n1"] = [int(v) for v in _as_list(exp.get("n1", [10, 50, 75, 100, 125, 150, 190]))]
                spec["total_n"] = int(exp.get("total_n", 200))
                spec["mu"] = tuple(float(v) for v in exp.get("mu", (1.1, 1.0)))
                spec["sd"] = tuple(float(v) for v in exp.get("sd", (0.12, 0.2)))
                spec["replicates"] = int(exp.get("replicates", 10_000))
                if any(n < 2 or spec["total_n"] - n < 2 for n in spec["n1"]):
                    problems.append(f"{where}: every n1 must satisfy 2 <= n1 <= total_n - 2")
            else:
                spec["transform"] = TransformKind.parse(exp.get("transform", "T3"))
                spec["nu1"] = float(exp["nu1"])
                spec["nu2"] = float(exp["nu2"])
                spec["n"] = int(exp.get("n", 10_000))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"{where}: {exc}")
        out.append(spec)
    if problems:
        raise ConfigError(problems)
    return out


def run_experiment(spec: dict):
    """Returns (table text, plot-ready object or None)."""
    kind = spec["type"]
    if kind == "size_grid":
        grid = size_grid(spec["transform"], spec["nu"], spec["alpha"], spec["replicates"], spec["seed"])
        rows = [(a, b, grid.sizes[i, j]) for i, a in enumerate(grid.nu1) for j, b in enumerate(grid.nu2)]
        return table_text(("nu1", "nu2", "size"), rows), grid
    if kind == "estimator_table":
        rows = []
        for rho in spec["rho"]:
            for tau in spec["tau"]:
                design = SimDesign(spec["arm_sizes"], rho, tau, spec["replicates"], spec["alpha"], spec["seed"])
                for r in estimator_table(design, spec["methods"], spec["workers"]):
                    rows.append((tau, rho, r.method, r.bias, r.coverage, r.width, r.bias_tau, r.replicates, r.failures))
        header = ("tau", "rho", "method", "bias", "coverage", "width", "bias_tau", "replicates", "failures")
        return table_text(header, rows), None
    if kind == "cohens_d":
        rows = cohens_d_table(spec["n1"], spec["total_n"], spec["mu"], spec["sd"], spec["replicates"], spec["seed"])
        return records_text(rows), None
    values = transform_samples(spec["transform"], FDist(spec["nu1"], spec["nu2"]), spec["n"], spec["seed"])
    return table_text(("value",), ((v,) for v in values)), None


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_run_flags(p):
    p.add_argument("input", nargs="?", help="study table (csv/tsv); omit when using --fixture")
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="use a bundled data set instead of a file")
    p.add_argument("--transform", default="T3", help="T1, T2, T3, T4 or InverseCdf (default T3)")
    p.add_argument("--model", default="re", choices=MODELS)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mc-replicates", type=int, default=DEFAULT_MC_REPLICATES)
    p.add_argument("--seed", type=int, default=None, help=f"default 0, or ${SEED_ENV} when set")
    p.add_argument("--weights", default="inverse-sqrt-c1", choices=WEIGHT_RULES)
    p.add_argument("--interval", default="t", choices=("t", "normal"),
                   help="random-effects interval quantile: t with K-1 df or normal")
    p.add_argument("--incremental-test", default="Zw", choices=INCREMENTAL_TESTS)
    p.add_argument("--svg", metavar="DIR", help="also write SVG plots into DIR")
    p.add_argument("-o", "--output", help="write data here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varmeta", description="Meta-analysis of ratios of sample variances.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("analyze", "full JSON report: forest rows, omnibus tests, estimate, Q-Q and incremental data"),
        ("test", "omnibus tests only (JSON)"),
        ("qq", "Q-Q plot data (CSV)"),
        ("forest", "per-study F-test intervals and the overall estimate (CSV)"),
        ("incremental", "p-value as studies are added by increasing |Z| (CSV)"),
    ):
        _add_run_flags(sub.add_parser(name, help=text, description=text))
    sim = sub.add_parser("simulate", help="run simulation experiments from a JSON config (CSV)")
    sim.add_argument("config", help="JSON config file")
    sim.add_argument("--seed", type=int, default=None, help="default seed for experiments without one")
    sim.add_argument("--out-dir", help="write one <name>.csv per experiment here")
    sim.add_argument("--svg", metavar="DIR", help="also write size-grid plots into DIR")
    fix = sub.add_parser("fixture", help="print a bundled study table as CSV")
    fix.add_argument("name", choices=sorted(FIXTURES))
    return parser


def _load_table(args) -> StudyTable:
    if args.fixture and args.input:
        raise ConfigError(["give either an input file or --fixture, not both"])
    if args.fixture:
        return FIXTURES[args.fixture]()
    if not args.input:
        raise ConfigError(["an input file or --fixture is required"])
    return ingest(args.input)


def _config(args) -> RunConfig:
    seed = default_seed() if args.seed is None else args.seed
    return RunConfig(
        transform=args.transform, model=args.model, alpha=args.alpha, mc_replicates=args.mc_replicates,
        seed=seed, weights=args.weights, interval=args.interval, incremental_test=args.incremental_test,
    )


def _emit(text: str, args) -> None:
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _run(args) -> None:
    if args.command == "fixture":
        sys.stdout.write(table_to_csv(FIXTURES[args.name]()))
        return
    if args.command == "simulate":
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{args.config}: invalid JSON ({exc})"]) from None
        seed = default_seed() if args.seed is None else args.seed
        specs = parse_sim_config(doc, seed)
        svg = _svg_dir(args)
        out_dir = Path(args.out_dir) if args.out_dir else None
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
        for spec in specs:
            print(f"running {spec['name']} ({spec['type']})", file=sys.stderr)
            text, grid = run_experiment(spec)
            if out_dir:
                (out_dir / f"{spec['name']}.csv").write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(f"# {spec['name']}\n{text}\n")
            if svg is not None and grid is not None:
                from .plots import size_grid_svg

                size_grid_svg(grid, svg / f"{spec['name']}.svg")
        return

    table = _load_table(args)
    config = _config(args)
    studies = table.studies()
    svg = _svg_dir(args)
    if args.command == "analyze":
        report = run_analyze(table, config)
        _emit(dumps_report(report), args)
        if svg is not None:
            from . import plots

            plots.qq_svg(report["qq"], svg / "qq.svg")
            plots.forest_svg(report["forest"], svg / "forest.svg", report["estimate"])
            plots.incremental_svg(report["incremental"], svg / "incremental.svg")
    elif args.command == "test":
        _emit(dumps_report({"config": asdict(config), **to_plain(run_tests(table, config))}), args)
    elif args.command == "qq":
        qq = qq_data(studies, config.transform)
        _emit(_qq_table(qq), args)
        if svg is not None:
            from .plots import qq_svg

            qq_svg(qq, svg / "qq.svg")
    elif args.command == "forest":
        rows = forest_rows(studies, config.alpha)
        overall = _estimate(studies, config)
        _emit(_forest_table(rows, overall), args)
        if svg is not None:
            from .plots import forest_svg

            forest_svg(rows, svg / "forest.svg", overall)
    elif args.command == "incremental":
        curve = incremental_pvalues(
            studies, config.transform, config.weights, config.mc_replicates, config.seed, config.incremental_test
        )
        _emit(_incremental_table(curve), args)
        if svg is not None:
            from .plots import incremental_svg

            incremental_svg(curve, svg / "incremental.svg")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except (IngestError, ConfigError) as exc:
        for line in exc.diagnostics:
            print(f"varmeta: error: {line}", file=sys.stderr)
        return 1
    except (DomainError, EstimationError, ValueError, RuntimeError, OSError) as exc:
        print(f"varmeta: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
