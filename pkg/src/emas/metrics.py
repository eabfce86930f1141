"""Event collection, run traces, and multi-run aggregation.

Engines emit flat :class:`MetricEvent` rows into a :class:`BufferSink`
through a per-island :class:`Recorder`; everything downstream (best-ever
series, reproduction counts, confidence intervals) is computed post hoc
from the events. The CSV layout is one event per line with the resolved
experiment configuration echoed as ``# key=value`` comment lines, so a
file is sufficient to re-run the experiment.
"""

from __future__ import annotations

import csv
import math
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field

from .core import ConfigError

FITNESS_SAMPLE = "fitness_sample"
FIGHT_COUNT = "fight_count"
REPRODUCTION_COUNT = "reproduction_count"
DEATH_COUNT = "death_count"
MIGRATION_COUNT = "migration_count"

# Emitted only when an emigrant could not be delivered during teardown;
# its absence from a trace is the normal, asserted-on case.
SHUTDOWN_LOSS_COUNT = "shutdown_loss_count"

LEDGER_INIT = "ledger_init"
LEDGER_FIGHT = "ledger_fight"
LEDGER_REPRODUCTION = "ledger_reproduction"
LEDGER_DEATH = "ledger_death"
LEDGER_MIGRATION = "ledger_migration"
LEDGER_EMIGRATE = "ledger_emigrate"
LEDGER_IMMIGRATE = "ledger_immigrate"
LEDGER_FINAL = "ledger_final"

COUNT_KINDS = (FIGHT_COUNT, REPRODUCTION_COUNT, DEATH_COUNT, MIGRATION_COUNT)

CSV_HEADER = ("run_id", "model", "island", "timestamp_ms", "kind", "value")
SUMMARY_HEADER = ("model", "cores", "bucket_ms", "metric", "mean", "ci95_half_width")

# Config keys that legitimately differ between repeats of one experiment.
RUN_SPECIFIC_KEYS = frozenset({"run_id", "seed"})


@dataclass(frozen=True, slots=True)
class MetricEvent:
    run_id: str
    model: str
    island: int
    timestamp_ms: int
    kind: str
    value: float


class BufferSink:
    """Thread-safe in-memory event buffer.

    ``record`` holds the lock only for a list append, so emitters are never
    blocked for longer than a bounded enqueue. Events offered after close
    are dropped and counted; tests assert the drop count stays zero.
    """

    def __init__(self) -> None:
        self._events: list[MetricEvent] = []
        self._lock = threading.Lock()
        self._closed = False
        self.dropped = 0

    def record(self, event: MetricEvent) -> bool:
        with self._lock:
            if self._closed:
                self.dropped += 1
                return False
            self._events.append(event)
            return True

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def events(self) -> list[MetricEvent]:
        with self._lock:
            return list(self._events)


def wall_clock_ms(origin: float | None = None) -> Callable[[], int]:
    """Monotonic wall clock in whole milliseconds since ``origin``."""
    t0 = time.monotonic() if origin is None else origin
    return lambda: int((time.monotonic() - t0) * 1000.0)


class Recorder:
    """Per-island emitting context feeding one sink.

    Fitness is recorded event-driven (only on strict improvement) plus a
    periodic heartbeat re-sample of the current best, so a stalled search
    still produces a series. Meeting counts are accumulated and flushed as
    batched count events at ``count_interval_ms`` cadence; an interval of
    zero flushes on every call, which the sequential engine uses for
    per-step, byte-deterministic output. Timestamps are clamped to be
    non-decreasing within this context.
    """

    def __init__(
        self,
        run_id: str,
        model: str,
        island: int,
        sink: BufferSink,
        clock,
        count_interval_ms: int = 250,
        heartbeat_ms: int = 1000,
        ledger: bool = False,
    ) -> None:
        self.run_id = run_id
        self.model = model
        self.island = island
        self.sink = sink
        self.clock = clock
        self.count_interval_ms = count_interval_ms
        self.heartbeat_ms = heartbeat_ms
        self.ledger = ledger
        self.best = math.inf
        self._counts: dict[str, int] = {kind: 0 for kind in COUNT_KINDS}
        self._last_count_flush = 0
        self._last_heartbeat = 0
        self._last_ts = 0
        self._last_sample: tuple[int, float] | None = None

    def _emit(self, kind: str, value: float) -> None:
        ts = max(self.clock(), self._last_ts)
        self._last_ts = ts
        if kind == FITNESS_SAMPLE:
            self._last_sample = (ts, value)
        self.sink.record(MetricEvent(self.run_id, self.model, self.island, ts, kind, value))

    def observe_fitness(self, fitness: float) -> None:
        if fitness < self.best:
            self.best = fitness
            self._emit(FITNESS_SAMPLE, fitness)

    def heartbeat(self) -> None:
        """Re-sample the current best if the heartbeat interval elapsed."""
        now = self.clock()
        if now - self._last_heartbeat >= self.heartbeat_ms and math.isfinite(self.best):
            self._last_heartbeat = now
            self._emit(FITNESS_SAMPLE, self.best)

    def count(self, kind: str, n: int = 1) -> None:
        self._counts[kind] += n

    def maybe_flush(self) -> None:
        if self.clock() - self._last_count_flush >= self.count_interval_ms:
            self.flush_counts()

    def flush_counts(self) -> None:
        self._last_count_flush = self.clock()
        for kind in COUNT_KINDS:
            if self._counts[kind]:
                self._emit(kind, self._counts[kind])
                self._counts[kind] = 0

    def ledger_event(self, kind: str, value: int) -> None:
        if self.ledger:
            self._emit(kind, value)

    def finish(self) -> None:
        """Flush pending counts and close the series with a final best sample.

        The terminal sample is skipped when it would duplicate the last one
        exactly, so a zero-work run keeps its single initial sample.
        """
        self.flush_counts()
        if math.isfinite(self.best):
            ts = max(self.clock(), self._last_ts)
            if self._last_sample != (ts, self.best):
                self._emit(FITNESS_SAMPLE, self.best)


@dataclass
class RunTrace:
    """One run's events plus the series derived from them."""

    run_id: str
    model: str
    config: dict[str, str]
    events: list[MetricEvent]

    def best_fitness_series(self) -> list[tuple[int, float]]:
        """Global best-ever breakpoints: value at t is the min sample at or before t."""
        samples = sorted(
            ((e.timestamp_ms, e.value) for e in self.events if e.kind == FITNESS_SAMPLE),
            key=lambda p: p[0],
        )
        series: list[tuple[int, float]] = []
        best = math.inf
        for ts, value in samples:
            if value < best:
                best = value
                if series and series[-1][0] == ts:
                    series[-1] = (ts, best)
                else:
                    series.append((ts, best))
        return series

    def reproduction_cumulative(self) -> list[tuple[int, int]]:
        counts = sorted(
            ((e.timestamp_ms, int(e.value)) for e in self.events if e.kind == REPRODUCTION_COUNT),
            key=lambda p: p[0],
        )
        series: list[tuple[int, int]] = []
        total = 0
        for ts, n in counts:
            total += n
            if series and series[-1][0] == ts:
                series[-1] = (ts, total)
            else:
                series.append((ts, total))
        return series

    def total_reproductions(self) -> int:
        return sum(int(e.value) for e in self.events if e.kind == REPRODUCTION_COUNT)

    def duration_ms(self) -> int:
        if "duration_ms" in self.config:
            return int(self.config["duration_ms"])
        return max((e.timestamp_ms for e in self.events), default=0)

    def reproductions_per_sec(self) -> float:
        ms = self.duration_ms()
        if ms == 0:
            return 0.0
        return self.total_reproductions() / (ms / 1000.0)

    def final_best(self) -> float:
        return min((e.value for e in self.events if e.kind == FITNESS_SAMPLE), default=math.inf)


def fitness_vs_reproductions(trace: RunTrace) -> list[tuple[int, float]]:
    """Join best-ever fitness with cumulative reproductions on time.

    One point per fitness breakpoint at the reproduction count reached by
    then; x is non-decreasing and y non-increasing by construction. With no
    reproductions the result is the single point (0, initial best).
    """
    fitness = trace.best_fitness_series()
    if not fitness:
        return []
    repro = trace.reproduction_cumulative()
    points: list[tuple[int, float]] = []
    i = 0
    total = 0
    for ts, best in fitness:
        while i < len(repro) and repro[i][0] <= ts:
            total = repro[i][1]
            i += 1
        if points and points[-1][0] == total:
            points[-1] = (total, best)
        else:
            points.append((total, best))
    return points


def reproductions_to_target(trace: RunTrace, target: float) -> int | None:
    """Cumulative reproductions when the best first reaches ``target``, else None."""
    for reproductions, best in fitness_vs_reproductions(trace):
        if best <= target:
            return reproductions
    return None


@dataclass
class ExperimentSummary:
    """Per-bucket mean and 95% half-width over N runs of one configuration."""

    model: str
    cores: int
    bucket_ms: int
    runs: int
    best_fitness: list[tuple[int, float, float]] = field(default_factory=list)  # (t, mean, hw)
    scalars: dict[str, tuple[float, float]] = field(default_factory=dict)  # metric -> (mean, hw)


def mean_ci(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, 1.96 * math.sqrt(var) / math.sqrt(n)


def step_sample(series: list[tuple[int, float]], t: int) -> float:
    """Step-function sample: last value at or before t, first value before that."""
    value = series[0][1]
    for ts, v in series:
        if ts > t:
            break
        value = v
    return value


def aggregate(traces: list[RunTrace], bucket_ms: int) -> ExperimentSummary:
    """Resample each run's best-ever series onto bucket boundaries, then mean/CI.

    Requires at least two traces of the same model and configuration;
    run-specific keys (run id, seed) are allowed to differ. Series are
    carried forward as step functions, so runs that end early still
    contribute their final value to later buckets.
    """
    if len(traces) < 2:
        raise ConfigError(f"aggregate needs >= 2 traces, got {len(traces)}")
    if bucket_ms < 1:
        raise ConfigError(f"bucket_ms must be >= 1, got {bucket_ms}")
    reference = traces[0]

    def comparable(config: dict[str, str]) -> dict[str, str]:
        return {k: v for k, v in config.items() if k not in RUN_SPECIFIC_KEYS}

    for trace in traces[1:]:
        if trace.model != reference.model:
            raise ConfigError(f"mixed models in aggregate: {reference.model} vs {trace.model}")
        if comparable(trace.config) != comparable(reference.config):
            raise ConfigError("mixed configurations in aggregate")

    series = [t.best_fitness_series() for t in traces]
    if any(not s for s in series):
        raise ConfigError("aggregate needs at least one fitness sample per trace")
    end = max(t.duration_ms() for t in traces)
    boundaries = range(0, (end // bucket_ms + 1) * bucket_ms + 1, bucket_ms)

    summary = ExperimentSummary(
        model=reference.model,
        cores=int(reference.config.get("units", "1")),
        bucket_ms=bucket_ms,
        runs=len(traces),
    )
    for t in boundaries:
        mean, hw = mean_ci([step_sample(s, t) for s in series])
        summary.best_fitness.append((t, mean, hw))
    summary.scalars["reproductions_per_sec"] = mean_ci([t.reproductions_per_sec() for t in traces])
    summary.scalars["final_best_fitness"] = mean_ci([t.final_best() for t in traces])
    return summary


def _format_value(value: float) -> str:
    if float(value) == int(value):
        return str(int(value))
    return repr(float(value))


def write_events_csv(path: str, events: list[MetricEvent], config: dict[str, str]) -> None:
    """Write one event per line, preceded by ``# key=value`` config echo lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(config):
            fh.write(f"# {key}={config[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for e in events:
            writer.writerow((e.run_id, e.model, e.island, e.timestamp_ms, e.kind, _format_value(e.value)))


def read_events_csv(path: str) -> tuple[dict[str, str], list[MetricEvent]]:
    config: dict[str, str] = {}
    rows: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                config[key.strip()] = value
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ConfigError(f"unexpected events CSV header: {header}")
    events = [
        MetricEvent(run_id, model, int(island), int(ts), kind, float(value))
        for run_id, model, island, ts, kind, value in reader
    ]
    return config, events


def split_traces(config: dict[str, str], events: list[MetricEvent]) -> list[RunTrace]:
    """Group a combined event list into per-run traces, preserving file order."""
    by_run: dict[str, list[MetricEvent]] = {}
    models: dict[str, str] = {}
    for e in events:
        by_run.setdefault(e.run_id, []).append(e)
        models[e.run_id] = e.model
    return [
        RunTrace(run_id=run_id, model=models[run_id], config=dict(config), events=evs)
        for run_id, evs in by_run.items()
    ]


def write_summary_csv(path: str, summaries: list[ExperimentSummary]) -> None:
    """Summary rows: bucket_ms column holds the bucket boundary timestamp.

    Scalar metrics (reproductions per second, final best) are written with
    the last boundary as their timestamp.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            for t, mean, hw in s.best_fitness:
                writer.writerow((s.model, s.cores, t, "best_fitness", repr(mean), repr(hw)))
            end = s.best_fitness[-1][0] if s.best_fitness else 0
            for metric in sorted(s.scalars):
                mean, hw = s.scalars[metric]
                writer.writerow((s.model, s.cores, end, metric, repr(mean), repr(hw)))


def read_summary_csv(path: str) -> list[dict[str, str]]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader)
