"""Command-line front end: configure, run and report one analysis.

A run is described by a flat JSON object (see ``RunConfig``); command-line
flags override the file. Precedence, lowest first: built-in defaults, the
preset, the config file, explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import KINDS, NUMERIC, ColumnSpec, Dataset, load_csv
from .errors import ConfigError, GSAError
from .estimation import estimate_game
from .report import ResultDocument, emit_json, emit_svg, rank_rows
from .resampling import METHODS, BootstrapPlan, allocate, bootstrap_allocations

logger = logging.getLogger(__name__)

PRESETS = {
    "covid-protocol": {"reps": 100, "subsample_fraction": 0.8, "ci": [0.025, 0.975], "bias_correct": False},
    "ct-protocol": {
        "neighbors": 100,
        "reps": 200,
        "subsample_fraction": 0.9,
        "ci": [0.05, 0.95],
        "bias_correct": True,
        "renormalize": True,
        # neighbourhood variances averaged over a random subset of query rows
        "n_query": 80,
    },
}
GENERATORS = ("ishigami", "gaussian", "sir", "ct-dose")


@dataclass
class RunConfig:
    input: str | None = None
    columns: list | None = None
    generator: dict | None = None
    target: str | None = None
    methods: list = field(default_factory=lambda: ["shapley", "pme"])
    neighbors: int = 3
    ann_epsilon: float = 0.0
    n_query: int | None = None
    reps: int = 0
    subsample_fraction: float = 0.9
    ci: list = field(default_factory=lambda: [0.05, 0.95])
    bias_correct: bool = False
    ci_basis: str = "raw"
    renormalize: bool = False
    seed: int = 0
    out_json: str | None = None
    out_svg: str | None = None
    preset: str | None = None
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {unknown}")
        merged = {}
        preset = data.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        merged.update(data)
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if (self.input is None) == (self.generator is None):
            raise ConfigError("give exactly one of an input CSV or a synthetic generator")
        if not self.methods:
            raise ConfigError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if int(self.neighbors) < 2:
            raise ConfigError("neighbors must be >= 2")
        if self.ann_epsilon < 0:
            raise ConfigError("ann_epsilon must be non-negative")
        if self.reps < 0 or self.reps == 1:
            raise ConfigError("reps must be 0 (no bootstrap) or at least 2")
        if len(self.ci) != 2:
            raise ConfigError("ci takes two quantiles")

    def plan(self) -> BootstrapPlan | None:
        if self.reps == 0:
            return None
        return BootstrapPlan(int(self.reps), float(self.subsample_fraction), tuple(self.ci),
                             bool(self.bias_correct), int(self.seed))


def _csv_header(path) -> list[str]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh))]
    except StopIteration:
        raise ConfigError(f"{path}: empty file") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _column_specs(cfg: RunConfig, header: list[str]) -> list[ColumnSpec]:
    if cfg.columns is None:
        return [ColumnSpec(name, NUMERIC, output=name == cfg.target) for name in header]
    specs = []
    for entry in cfg.columns:
        kind = entry.get("kind", NUMERIC)
        if kind not in KINDS:
            raise ConfigError(f"column {entry.get('name')!r}: unknown kind {kind!r}")
        bounds = entry.get("bounds")
        specs.append(ColumnSpec(entry["name"], kind, tuple(entry["levels"]) if entry.get("levels") else None,
                                tuple(bounds) if bounds else None, entry["name"] == cfg.target))
    return specs


def _generator_target(gen: dict) -> str:
    model = gen.get("model")
    if model == "sir":
        return gen.get("output", "peak_infected")
    if model == "ct-dose":
        return f"{gen.get('organ', 'brain')}_dose"
    return "Y"


def _generate(gen: dict, seed: int) -> Dataset:
    from .models import benchmarks, dose, sir

    model = gen.get("model")
    seed = int(gen.get("seed", seed))
    n = int(gen.get("n", 1000))
    if model == "ishigami":
        return benchmarks.ishigami_sample(n, gen.get("a", 7.0), gen.get("b", 0.1), seed)
    if model == "gaussian":
        return benchmarks.linear_gaussian_sample(n, gen["weights"], np.asarray(gen["correlation"]), seed)
    if model == "sir":
        corr = np.asarray(gen.get("correlation", np.eye(3)))
        return sir.sir_demo_sample(n, corr, seed, gen.get("output", "peak_infected"))
    if model == "ct-dose":
        tables = (dose.DoseTables.from_json(gen["tables"]) if "tables" in gen
                  else dose.synth_dose_tables(int(gen.get("tables_seed", 0))))
        return dose.ncict_sample(n, gen.get("exam_class", "head"), tables, seed, gen.get("organ", "brain"))
    raise ConfigError(f"unknown generator {model!r}; choose from {list(GENERATORS)}")


def load_input(cfg: RunConfig) -> Dataset:
    """Validate the target against the data source, then load or generate the data."""
    if cfg.input is not None:
        header = _csv_header(cfg.input)
        target = cfg.target or (header[-1] if header else None)
        if target not in header:
            raise ConfigError(f"target column {target!r} not found in {cfg.input}")
        cfg.target = target
        specs = _column_specs(cfg, header)
        missing = [s.name for s in specs if s.name not in header]
        if missing:
            raise ConfigError(f"columns {missing} not found in {cfg.input}")
        if not any(s.output for s in specs):
            raise ConfigError(f"target column {target!r} has no column spec")
        return load_csv(cfg.input, specs)
    gen = dict(cfg.generator)
    produced = _generator_target(gen)
    if gen.get("model") not in GENERATORS:
        raise ConfigError(f"unknown generator {gen.get('model')!r}; choose from {list(GENERATORS)}")
    if cfg.target is not None and cfg.target != produced:
        raise ConfigError(f"target column {cfg.target!r} not produced by generator {gen['model']!r} "
                          f"(its output is {produced!r})")
    cfg.target = produced
    return _generate(gen, cfg.seed)


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.seen = Counter()

    def emit(self, record):
        self.seen[record.getMessage()] += 1

    def summary(self) -> list[str]:
        return [msg if count == 1 else f"{msg} (x{count})" for msg, count in self.seen.items()]


def run(config: RunConfig) -> ResultDocument:
    """Load or generate data, estimate, allocate, bootstrap and assemble the document."""
    config.validate()
    timings = {}
    collector = _WarningCollector()
    root = logging.getLogger("gsapme")
    root.addHandler(collector)
    try:
        t0 = time.perf_counter()
        ds = load_input(config)
        timings["load"] = time.perf_counter() - t0
        knn = {"n_query": config.n_query, "seed": config.seed}
        plan = config.plan()
        methods = {}
        diagnostics = {}
        t0 = time.perf_counter()
        if plan is None:
            game = estimate_game(ds, config.neighbors, config.ann_epsilon, **knn)
            for m in config.methods:
                a = allocate(game, m, config.renormalize)
                methods[m] = rank_rows(ds.input_names, a.shares)
                diagnostics[m] = _plain(a.diagnostics)
        else:
            reports = bootstrap_allocations(ds, config.methods, plan, config.neighbors, config.ann_epsilon,
                                            config.renormalize, config.ci_basis, config.n_jobs, **knn)
            for m, rep in reports.items():
                methods[m] = rank_rows(ds.input_names, rep.estimate, rep.ci_low, rep.ci_high)
                diagnostics[m] = _plain(rep.diagnostics)
        timings["analysis"] = time.perf_counter() - t0
    except GSAError as exc:
        raise type(exc)(f"{_module_of(exc)}: {exc}") from exc
    finally:
        root.removeHandler(collector)

    settings = asdict(config)
    for key in ("out_json", "out_svg", "n_jobs"):
        settings.pop(key)
    meta = {
        "settings": settings,
        "seed": config.seed,
        "target": config.target,
        "n": ds.n,
        "d": ds.d,
        "inputs": list(ds.input_names),
        "bootstrap": plan is not None,
        "diagnostics": diagnostics,
        "warnings": collector.summary(),
    }
    return ResultDocument(methods, meta, timings)


def _module_of(exc) -> str:
    tb = exc.__traceback__
    module = "gsapme"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("gsapme"):
            module = name
        tb = tb.tb_next
    return module


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsapme", description="Shapley effects and proportional marginal "
                                "effects from given data, with bootstrap intervals.")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--generator", choices=GENERATORS, help="synthetic data generator instead of a CSV")
    p.add_argument("--n", type=int, help="sample size for --generator")
    p.add_argument("--target", help="output column")
    p.add_argument("--method", action="append", choices=METHODS, help="repeatable; default shapley and pme")
    p.add_argument("--neighbors", type=int, help="neighbourhood size k")
    p.add_argument("--ann-epsilon", type=float, help="approximate search slack (0 = exact)")
    p.add_argument("--n-query", type=int, help="average neighbourhood variances over this many random rows")
    p.add_argument("--reps", type=int, help="bootstrap repetitions (0 = none)")
    p.add_argument("--subsample-fraction", type=float)
    p.add_argument("--ci", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--bias-correct", action="store_true", default=None)
    p.add_argument("--renormalize", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int, help="parallel bootstrap workers")
    p.add_argument("--out-json")
    p.add_argument("--out-svg")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in the JSON")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("the config file must hold a JSON object")
    flags = {
        "input": args.input,
        "target": args.target,
        "methods": args.method,
        "neighbors": args.neighbors,
        "ann_epsilon": args.ann_epsilon,
        "n_query": args.n_query,
        "reps": args.reps,
        "subsample_fraction": args.subsample_fraction,
        "ci": args.ci,
        "bias_correct": args.bias_correct,
        "renormalize": args.renormalize,
        "seed": args.seed,
        "n_jobs": args.n_jobs,
        "out_json": args.out_json,
        "out_svg": args.out_svg,
        "preset": args.preset,
    }
    if args.generator:
        gen = dict(data.get("generator") or {})
        gen["model"] = args.generator
        data["generator"] = gen
        data.pop("input", None)
    if args.n is not None:
        if not data.get("generator"):
            raise ConfigError("--n applies to a synthetic generator")
        data["generator"] = dict(data["generator"], n=args.n)
    if args.input:
        data.pop("generator", None)
    merged = dict(data)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig.from_dict(merged)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        doc = run(cfg)
        if cfg.out_json:
            emit_json(doc, cfg.out_json, timings=args.timings)
        if cfg.out_svg:
            emit_svg(doc, cfg.out_svg, title=f"{cfg.target}")
    except (GSAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not cfg.out_json:
        for m, rows in doc.methods.items():
            print(m)
            for row in rows:
                ci = "" if row["ci_low"] is None else f"  [{row['ci_low']:.4f}, {row['ci_high']:.4f}]"
                print(f"  {row['rank']:>2}  {row['name']:<16} {row['estimate']: .4f}{ci}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
