"""Experiment runner.

``emas run`` executes N repeats of one configuration under one or all
execution models, writes one trace CSV per run plus a summary CSV, renders
comparison figures, and prints a table of final best fitness and
reproduction throughput. ``emas report`` re-renders the figures from
previously written trace CSVs. Exit status is zero only when every run
completed with its conservation checks intact.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
from dataclasses import dataclass, field

from . import engine_concurrent, engine_hybrid, engine_seq
from .arenas import BehaviourConfig
from .config import TOPOLOGY_KINDS, RunConfig
from .core import ConfigError, ConservationError, ProblemConfig, Recombination
from .metrics import (
    ExperimentSummary,
    RunTrace,
    aggregate,
    mean_ci,
    read_events_csv,
    split_traces,
    write_events_csv,
    write_summary_csv,
)

logger = logging.getLogger(__name__)

MODELS = ("sequential", "hybrid", "concurrent")

ENGINES = {
    "sequential": engine_seq.run,
    "hybrid": engine_hybrid.run,
    "concurrent": engine_concurrent.run,
}


@dataclass
class ExperimentConfig:
    """Fully resolved invocation: what to run, how often, and where to write."""

    model: str = "all"
    dimension: int = 10
    domain_min: float = -50.0
    domain_max: float = 50.0
    islands: int = 4
    population: int = 30
    duration_ms: int | None = 60_000
    steps: int | None = None
    repeats: int = 10
    seed: int = 0
    units: int | None = None  # None resolves to the island count
    migration_prob: float = 0.01
    topology: str = "fully_connected"
    initial_energy: int = 10
    reproduction_threshold: int = 10
    fight_transfer: int = 1
    child_energy: int = 10
    flush_timeout_ms: float = 10.0
    mutation_rate: float | None = None
    mutation_sigma: float | None = None
    recombination: str = "uniform_crossover"
    ledger: bool = False
    bucket_ms: int | None = None
    plot: bool = True
    out: str | None = None

    def __post_init__(self) -> None:
        if self.model not in MODELS + ("all",):
            raise ConfigError(f"model must be one of {MODELS + ('all',)}, got {self.model!r}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.units is None:
            self.units = self.islands
        if self.units < 1:
            raise ConfigError(f"units must be >= 1, got {self.units}")
        if (self.steps is None) == (self.duration_ms is None):
            raise ConfigError("exactly one of --duration and --steps must be set")
        if self.steps is not None and self.model in ("concurrent", "all"):
            raise ConfigError("--steps is not available with the concurrent engine; use --duration")
        if self.out is None:
            raise ConfigError("an output directory is required (--out DIR)")
        if self.bucket_ms is None:
            if self.duration_ms is not None:
                self.bucket_ms = max(1, self.duration_ms // 60)
            else:
                self.bucket_ms = max(1, self.steps // 50)

    def models(self) -> tuple[str, ...]:
        return MODELS if self.model == "all" else (self.model,)

    def run_config(self, model: str, repeat: int) -> RunConfig:
        problem = ProblemConfig(
            dimension=self.dimension,
            domain_min=self.domain_min,
            domain_max=self.domain_max,
            mutation_rate=self.mutation_rate,
            mutation_sigma=self.mutation_sigma,
            recombination=Recombination(self.recombination),
        )
        behaviour = BehaviourConfig(
            reproduction_threshold=self.reproduction_threshold,
            migration_probability=self.migration_prob,
            fight_transfer=self.fight_transfer,
            child_energy=self.child_energy,
            initial_energy=self.initial_energy,
        )
        return RunConfig(
            problem=problem,
            behaviour=behaviour,
            islands=self.islands,
            population_per_island=self.population,
            topology_kind=self.topology,
            seed=self.seed + repeat,
            steps=self.steps,
            duration_ms=self.duration_ms,
            execution_units=self.units,
            flush_timeout_ms=self.flush_timeout_ms,
            ledger=self.ledger,
            run_id=f"{model}-{repeat:02d}",
        )


def parse_duration(text: str) -> int:
    """``Nms``, ``Ns``, or ``Nm`` to milliseconds."""
    text = text.strip()
    if text.endswith("ms"):
        number, scale = text[:-2], 1
    elif text.endswith("s"):
        number, scale = text[:-1], 1000
    elif text.endswith("m"):
        number, scale = text[:-1], 60_000
    else:
        raise ConfigError(f"duration must look like 60s, 15m, or 500ms, got {text!r}")
    try:
        value = float(number)
    except ValueError as exc:
        raise ConfigError(f"duration must look like 60s, 15m, or 500ms, got {text!r}") from exc
    if value <= 0:
        raise ConfigError(f"duration must be positive, got {text!r}")
    return int(value * scale)


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` comments and blank lines ignored."""
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def build_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, config file, and flags (flags win per key)."""
    values: dict[str, object] = {}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key == "duration":
                values["duration_ms"] = parse_duration(raw)
            elif key in ("steps", "dimension", "islands", "population", "repeats", "seed", "units",
                         "initial_energy", "reproduction_threshold", "fight_transfer",
                         "child_energy", "bucket_ms"):
                values[key] = int(raw)
            elif key in ("domain_min", "domain_max", "migration_prob", "flush_timeout_ms",
                         "mutation_rate", "mutation_sigma"):
                values[key] = float(raw)
            elif key in ("ledger", "plot"):
                if raw.lower() not in _BOOL:
                    raise ConfigError(f"config key {key} must be a boolean, got {raw!r}")
                values[key] = _BOOL[raw.lower()]
            elif key in ("model", "topology", "recombination", "out"):
                values[key] = raw
            else:
                raise ConfigError(f"unknown config key {key!r}")

    flag_map = {
        "model": args.model,
        "dimension": args.dimension,
        "domain_min": args.domain_min,
        "domain_max": args.domain_max,
        "islands": args.islands,
        "population": args.population,
        "repeats": args.repeats,
        "seed": args.seed,
        "units": args.units,
        "migration_prob": args.migration_prob,
        "topology": args.topology,
        "initial_energy": args.initial_energy,
        "reproduction_threshold": args.reproduction_threshold,
        "fight_transfer": args.fight_transfer,
        "child_energy": args.child_energy,
        "flush_timeout_ms": args.flush_timeout_ms,
        "mutation_rate": args.mutation_rate,
        "mutation_sigma": args.mutation_sigma,
        "recombination": args.recombination,
        "bucket_ms": args.bucket_ms,
        "out": args.out,
    }
    for key, value in flag_map.items():
        if value is not None:
            values[key] = value
    if args.ledger:
        values["ledger"] = True
    if args.no_plot:
        values["plot"] = False
    if args.duration is not None:
        values["duration_ms"] = parse_duration(args.duration)
        values["steps"] = None
    elif args.steps is not None:
        values["steps"] = args.steps
        values["duration_ms"] = None
    elif "steps" in values and "duration_ms" not in values:
        values["duration_ms"] = None  # config file chose a step budget

    defaults = ExperimentConfig.__dataclass_fields__
    known = {k: v for k, v in values.items() if k in defaults}
    return ExperimentConfig(**known)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute all runs, write outputs, print the comparison table."""
    try:
        os.makedirs(cfg.out, exist_ok=True)
        probe = os.path.join(cfg.out, ".write-probe")
        with open(probe, "w", encoding="utf-8") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as exc:
        print(f"error: output directory {cfg.out!r} is not writable: {exc}", file=sys.stderr)
        return 1

    traces_by_model: dict[str, list[RunTrace]] = {}
    for model in cfg.models():
        traces: list[RunTrace] = []
        for repeat in range(cfg.repeats):
            run_config = cfg.run_config(model, repeat)
            logger.info("running %s repeat %d/%d", model, repeat + 1, cfg.repeats)
            try:
                trace = ENGINES[model](run_config)
            except (ConservationError, RuntimeError) as exc:
                print(f"error: run {run_config.run_id} failed: {exc}", file=sys.stderr)
                return 1
            path = os.path.join(cfg.out, f"trace_{model}_{repeat:02d}.csv")
            write_events_csv(path, trace.events, trace.config)
            traces.append(trace)
        traces_by_model[model] = traces

    summaries = [_summarize(traces, cfg.bucket_ms) for traces in traces_by_model.values()]
    write_summary_csv(os.path.join(cfg.out, "summary.csv"), summaries)
    _print_table(traces_by_model)

    if cfg.plot:
        from . import report

        for path in report.render_figures(cfg.out, traces_by_model):
            print(f"wrote {path}")
    return 0


def _summarize(traces: list[RunTrace], bucket_ms: int) -> ExperimentSummary:
    if len(traces) >= 2:
        return aggregate(traces, bucket_ms)
    trace = traces[0]
    summary = ExperimentSummary(
        model=trace.model,
        cores=int(trace.config.get("units", "1")),
        bucket_ms=bucket_ms,
        runs=1,
    )
    series = trace.best_fitness_series()
    end = trace.duration_ms()
    for t in range(0, (end // bucket_ms + 1) * bucket_ms + 1, bucket_ms):
        value = series[0][1]
        for ts, v in series:
            if ts > t:
                break
            value = v
        summary.best_fitness.append((t, value, 0.0))
    summary.scalars["reproductions_per_sec"] = (trace.reproductions_per_sec(), 0.0)
    summary.scalars["final_best_fitness"] = (trace.final_best(), 0.0)
    return summary


def _print_table(traces_by_model: dict[str, list[RunTrace]]) -> None:
    print(f"{'model':<12} {'runs':>4}  {'final best (mean ± 95% CI)':<30} {'repro/sec (mean ± 95% CI)':<28}")
    for model, traces in traces_by_model.items():
        best_mean, best_hw = mean_ci([t.final_best() for t in traces])
        rps_mean, rps_hw = mean_ci([t.reproductions_per_sec() for t in traces])
        best = f"{best_mean:.6g} ± {best_hw:.3g}"
        rps = f"{rps_mean:.1f} ± {rps_hw:.1f}"
        print(f"{model:<12} {len(traces):>4}  {best:<30} {rps:<28}")


def run_report(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(os.path.join(args.out, "trace_*.csv")))
    if not paths:
        print(f"error: no trace CSVs found under {args.out!r}", file=sys.stderr)
        return 1
    traces_by_model: dict[str, list[RunTrace]] = {}
    for path in paths:
        config, events = read_events_csv(path)
        for trace in split_traces(config, events):
            traces_by_model.setdefault(trace.model, []).append(trace)
    from . import report

    for path in report.render_figures(args.out, traces_by_model):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emas",
        description="Energy-based evolutionary multi-agent optimization experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment and write traces, summary, figures")
    run_p.add_argument("--model", choices=MODELS + ("all",), default=None,
                       help="execution model (default: all)")
    run_p.add_argument("--dimension", type=int, default=None, help="problem dimension (default: 10)")
    run_p.add_argument("--domain-min", type=float, default=None, help="domain lower bound (default: -50)")
    run_p.add_argument("--domain-max", type=float, default=None, help="domain upper bound (default: 50)")
    run_p.add_argument("--islands", type=int, default=None, help="island count (default: 4)")
    run_p.add_argument("--population", type=int, default=None, help="agents per island (default: 30)")
    budget = run_p.add_mutually_exclusive_group()
    budget.add_argument("--duration", default=None, help="wall-clock budget, e.g. 60s or 15m (default: 60s)")
    budget.add_argument("--steps", type=int, default=None,
                        help="step budget instead of wall clock (sequential and hybrid only)")
    run_p.add_argument("--repeats", type=int, default=None, help="runs per model (default: 10)")
    run_p.add_argument("--seed", type=int, default=None,
                       help="master seed; repeat i uses seed+i (default: 0)")
    run_p.add_argument("--units", type=int, default=None,
                       help="execution units for the hybrid engine (default: islands)")
    run_p.add_argument("--migration-prob", type=float, default=None,
                       help="per-decision migration probability (default: 0.01)")
    run_p.add_argument("--topology", choices=TOPOLOGY_KINDS, default=None,
                       help="migration topology (default: fully_connected)")
    run_p.add_argument("--initial-energy", type=int, default=None, help="starting energy (default: 10)")
    run_p.add_argument("--reproduction-threshold", type=int, default=None,
                       help="reproduce strictly above this energy (default: 10)")
    run_p.add_argument("--fight-transfer", type=int, default=None,
                       help="energy taken by a fight winner (default: 1)")
    run_p.add_argument("--child-energy", type=int, default=None, help="newborn energy (default: 10)")
    run_p.add_argument("--flush-timeout-ms", type=float, default=None,
                       help="concurrent arena straggler flush (default: 10)")
    run_p.add_argument("--mutation-rate", type=float, default=None,
                       help="per-coordinate mutation probability (default: 1/dimension)")
    run_p.add_argument("--mutation-sigma", type=float, default=None,
                       help="mutation noise sigma (default: domain span / 100)")
    run_p.add_argument("--recombination", choices=[r.value for r in Recombination], default=None,
                       help="crossover operator (default: uniform_crossover)")
    run_p.add_argument("--ledger", action="store_true",
                       help="emit per-event energy deltas into the trace CSVs")
    run_p.add_argument("--bucket-ms", type=int, default=None,
                       help="summary bucket width in ms (default: budget/60)")
    run_p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    run_p.add_argument("--config", default=None, help="flat key=value config file; flags override it")
    run_p.add_argument("--out", default=None, help="output directory (required)")
    run_p.set_defaults(func=_cmd_run)

    report_p = sub.add_parser("report", help="re-render figures from trace CSVs in a directory")
    report_p.add_argument("--out", required=True, help="directory containing trace_*.csv")
    report_p.set_defaults(func=run_report)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = build_experiment(args)
    return run_experiment(cfg)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EMAS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
