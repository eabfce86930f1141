"""Recorder, trace analysis, aggregation, and CSV round-trip tests."""

import pytest

from emas import metrics
from emas.metrics import (
    BufferSink,
    ExperimentSummary,
    MetricEvent,
    Recorder,
    RunTrace,
    aggregate,
    fitness_vs_reproductions,
    mean_ci,
    read_events_csv,
    read_summary_csv,
    reproductions_to_target,
    split_traces,
    step_sample,
    write_events_csv,
    write_summary_csv,
)


class FakeClock:
    def __init__(self):
        self.now = 0

    def __call__(self):
        return self.now


def make_recorder(**kwargs):
    sink = BufferSink()
    clock = FakeClock()
    rec = Recorder("run-00", "sequential", 0, sink, clock, **kwargs)
    return rec, sink, clock


def kinds(sink):
    return [(e.kind, e.value) for e in sink.events()]


class TestRecorder:
    def test_fitness_sampled_only_on_improvement(self):
        rec, sink, clock = make_recorder()
        rec.observe_fitness(5.0)
        rec.observe_fitness(7.0)  # worse: ignored
        clock.now = 3
        rec.observe_fitness(5.0)  # equal: ignored
        rec.observe_fitness(4.5)
        rec.finish()
        samples = [e for e in sink.events() if e.kind == metrics.FITNESS_SAMPLE]
        assert [(e.timestamp_ms, e.value) for e in samples] == [(0, 5.0), (3, 4.5)]

    def test_heartbeat_resamples_after_interval(self):
        rec, sink, clock = make_recorder(heartbeat_ms=1000)
        rec.observe_fitness(5.0)
        clock.now = 500
        rec.heartbeat()  # too soon
        clock.now = 1200
        rec.heartbeat()
        samples = [e for e in sink.events() if e.kind == metrics.FITNESS_SAMPLE]
        assert [(e.timestamp_ms, e.value) for e in samples] == [(0, 5.0), (1200, 5.0)]

    def test_counts_batched_until_flush_interval(self):
        rec, sink, clock = make_recorder(count_interval_ms=250)
        rec.count(metrics.FIGHT_COUNT, 3)
        rec.maybe_flush()  # interval not yet elapsed
        assert kinds(sink) == []
        clock.now = 300
        rec.count(metrics.FIGHT_COUNT, 2)
        rec.maybe_flush()
        assert kinds(sink) == [(metrics.FIGHT_COUNT, 5.0)]

    def test_finish_flushes_pending_counts(self):
        rec, sink, clock = make_recorder()
        rec.count(metrics.DEATH_COUNT, 1)
        rec.observe_fitness(2.0)
        clock.now = 40
        rec.finish()
        assert (metrics.DEATH_COUNT, 1.0) in kinds(sink)

    def test_finish_emits_terminal_sample_once(self):
        rec, sink, clock = make_recorder()
        rec.observe_fitness(2.0)
        clock.now = 90
        rec.finish()
        samples = [e for e in sink.events() if e.kind == metrics.FITNESS_SAMPLE]
        assert [(e.timestamp_ms, e.value) for e in samples] == [(0, 2.0), (90, 2.0)]

    def test_finish_skips_duplicate_terminal_sample(self):
        rec, sink, clock = make_recorder()
        rec.observe_fitness(2.0)
        rec.finish()  # same timestamp, same value: one sample only
        samples = [e for e in sink.events() if e.kind == metrics.FITNESS_SAMPLE]
        assert len(samples) == 1

    def test_closed_sink_counts_drops(self):
        rec, sink, clock = make_recorder()
        sink.close()
        rec.observe_fitness(1.0)
        assert sink.dropped == 1 and sink.events() == []

    def test_ledger_events_gated_by_flag(self):
        rec, sink, _ = make_recorder(ledger=False)
        rec.ledger_event(metrics.LEDGER_FIGHT, 0)
        assert kinds(sink) == []
        rec2, sink2, _ = make_recorder(ledger=True)
        rec2.ledger_event(metrics.LEDGER_FIGHT, 0)
        assert kinds(sink2) == [(metrics.LEDGER_FIGHT, 0.0)]

    def test_timestamps_never_decrease(self):
        rec, sink, clock = make_recorder()
        clock.now = 100
        rec.observe_fitness(5.0)
        clock.now = 50  # simulated clock hiccup
        rec.observe_fitness(1.0)
        stamps = [e.timestamp_ms for e in sink.events()]
        assert stamps == sorted(stamps)


def trace(events, config=None):
    evs = [MetricEvent("run-00", "sequential", i, t, k, v) for (i, t, k, v) in events]
    return RunTrace("run-00", "sequential", config or {}, evs)


class TestRunTrace:
    def test_best_fitness_series_is_min_prefix(self):
        tr = trace(
            [
                (0, 0, metrics.FITNESS_SAMPLE, 9.0),
                (1, 0, metrics.FITNESS_SAMPLE, 7.0),
                (0, 10, metrics.FITNESS_SAMPLE, 8.0),  # not a global improvement
                (1, 20, metrics.FITNESS_SAMPLE, 3.0),
            ]
        )
        assert tr.best_fitness_series() == [(0, 7.0), (20, 3.0)]
        values = [v for _, v in tr.best_fitness_series()]
        assert values == sorted(values, reverse=True)

    def test_reproduction_totals(self):
        tr = trace(
            [
                (0, 100, metrics.REPRODUCTION_COUNT, 4.0),
                (1, 200, metrics.REPRODUCTION_COUNT, 6.0),
            ],
            config={"duration_ms": "1000"},
        )
        assert tr.total_reproductions() == 10
        assert tr.reproductions_per_sec() == pytest.approx(10.0)
        assert tr.reproduction_cumulative() == [(100, 4), (200, 10)]

    def test_duration_falls_back_to_last_event(self):
        tr = trace([(0, 640, metrics.FITNESS_SAMPLE, 1.0)])
        assert tr.duration_ms() == 640


class TestFitnessVsReproductions:
    def test_no_reproductions_gives_initial_point(self):
        tr = trace([(0, 0, metrics.FITNESS_SAMPLE, 6.0)])
        assert fitness_vs_reproductions(tr) == [(0, 6.0)]

    def test_breakpoints_align_with_cumulative_births(self):
        tr = trace(
            [
                (0, 0, metrics.FITNESS_SAMPLE, 9.0),
                (0, 100, metrics.REPRODUCTION_COUNT, 5.0),
                (0, 150, metrics.FITNESS_SAMPLE, 4.0),
                (0, 200, metrics.REPRODUCTION_COUNT, 4.0),
                (0, 250, metrics.FITNESS_SAMPLE, 2.0),
            ]
        )
        curve = fitness_vs_reproductions(tr)
        assert curve == [(0, 9.0), (5, 4.0), (9, 2.0)]
        fitnesses = [f for _, f in curve]
        assert fitnesses == sorted(fitnesses, reverse=True)

    def test_reproductions_to_target(self):
        tr = trace(
            [
                (0, 0, metrics.FITNESS_SAMPLE, 9.0),
                (0, 100, metrics.REPRODUCTION_COUNT, 5.0),
                (0, 150, metrics.FITNESS_SAMPLE, 4.0),
            ]
        )
        assert reproductions_to_target(tr, 4.0) == 5
        assert reproductions_to_target(tr, 9.5) == 0
        assert reproductions_to_target(tr, 1.0) is None


class TestAggregate:
    def make_trace(self, run_id, seed, samples, repro_total, duration=1000):
        config = {"run_id": run_id, "seed": str(seed), "model": "sequential", "duration_ms": str(duration)}
        events = [MetricEvent(run_id, "sequential", 0, t, metrics.FITNESS_SAMPLE, v) for t, v in samples]
        events.append(MetricEvent(run_id, "sequential", 0, duration, metrics.REPRODUCTION_COUNT, repro_total))
        return RunTrace(run_id, "sequential", config, events)

    def test_identical_traces_have_zero_width(self):
        traces = [self.make_trace(f"run-{i:02d}", i, [(0, 5.0)], 100.0) for i in range(3)]
        summary = aggregate(traces, bucket_ms=500)
        assert summary.runs == 3
        for _, mean, hw in summary.best_fitness:
            assert mean == 5.0 and hw == 0.0

    def test_ci_formula(self):
        # Two values 2.0 and 4.0: mean 3.0, sd sqrt(2), hw = 1.96*sqrt(2)/sqrt(2) = 1.96.
        traces = [
            self.make_trace("run-00", 0, [(0, 2.0)], 10.0),
            self.make_trace("run-01", 1, [(0, 4.0)], 10.0),
        ]
        summary = aggregate(traces, bucket_ms=1000)
        _, mean, hw = summary.best_fitness[0]
        assert mean == pytest.approx(3.0)
        assert hw == pytest.approx(1.96)

    def test_reproductions_per_sec_scalar(self):
        traces = [self.make_trace(f"run-{i:02d}", i, [(0, 5.0)], 100.0, duration=10_000) for i in range(2)]
        summary = aggregate(traces, bucket_ms=5000)
        mean, hw = summary.scalars["reproductions_per_sec"]
        assert mean == pytest.approx(10.0) and hw == pytest.approx(0.0)

    def test_single_trace_rejected(self):
        with pytest.raises(ValueError):
            aggregate([self.make_trace("run-00", 0, [(0, 5.0)], 1.0)], bucket_ms=100)

    def test_mixed_configs_rejected(self):
        t1 = self.make_trace("run-00", 0, [(0, 5.0)], 1.0)
        t2 = self.make_trace("run-01", 1, [(0, 5.0)], 1.0)
        t2.config["dimension"] = "7"
        with pytest.raises(ValueError):
            aggregate([t1, t2], bucket_ms=100)

    def test_run_specific_keys_ignored_in_comparison(self):
        t1 = self.make_trace("run-00", 0, [(0, 5.0)], 1.0)
        t2 = self.make_trace("run-01", 999, [(0, 5.0)], 1.0)
        assert aggregate([t1, t2], bucket_ms=500).runs == 2

    def test_carry_forward_between_samples(self):
        t1 = self.make_trace("run-00", 0, [(0, 8.0), (900, 2.0)], 1.0)
        t2 = self.make_trace("run-01", 1, [(0, 8.0), (900, 2.0)], 1.0)
        summary = aggregate([t1, t2], bucket_ms=250)
        by_t = {t: mean for t, mean, _ in summary.best_fitness}
        assert by_t[500] == 8.0  # improvement at 900 not yet visible
        assert by_t[1000] == 2.0


class TestHelpers:
    def test_mean_ci_single_value(self):
        assert mean_ci([4.0]) == (4.0, 0.0)

    def test_step_sample_carries_forward(self):
        series = [(0, 9.0), (100, 5.0)]
        assert step_sample(series, 50) == 9.0
        assert step_sample(series, 100) == 5.0
        assert step_sample(series, 5000) == 5.0

    def test_step_sample_before_first_point_carries_back(self):
        assert step_sample([(100, 5.0)], 0) == 5.0


class TestCsvRoundTrip:
    def test_events_round_trip(self, tmp_path):
        config = {"seed": "3", "model": "sequential", "dimension": "10"}
        events = [
            MetricEvent("run-00", "sequential", 0, 0, metrics.FITNESS_SAMPLE, 7.25),
            MetricEvent("run-00", "sequential", 1, 250, metrics.FIGHT_COUNT, 12.0),
        ]
        path = tmp_path / "trace.csv"
        write_events_csv(path, events, config)
        got_config, got_events = read_events_csv(path)
        assert got_config == config
        assert got_events == events

    def test_header_line_and_comments(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_events_csv(path, [], {"b_key": "2", "a_key": "1"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# a_key=1"  # sorted echo
        assert lines[1] == "# b_key=2"
        assert lines[2] == "run_id,model,island,timestamp_ms,kind,value"

    def test_integral_values_written_without_decimal(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_events_csv(path, [MetricEvent("r", "sequential", 0, 5, metrics.FIGHT_COUNT, 3.0)], {})
        assert path.read_text().splitlines()[-1] == "r,sequential,0,5,fight_count,3"

    def test_split_traces_by_run(self):
        events = [
            MetricEvent("run-00", "sequential", 0, 0, metrics.FITNESS_SAMPLE, 1.0),
            MetricEvent("run-01", "sequential", 0, 0, metrics.FITNESS_SAMPLE, 2.0),
            MetricEvent("run-00", "sequential", 0, 9, metrics.FIGHT_COUNT, 1.0),
        ]
        traces = split_traces({"model": "sequential"}, events)
        assert sorted(t.run_id for t in traces) == ["run-00", "run-01"]
        by_id = {t.run_id: t for t in traces}
        assert len(by_id["run-00"].events) == 2

    def test_summary_round_trip(self, tmp_path):
        summary = ExperimentSummary(
            model="hybrid",
            cores=4,
            bucket_ms=500,
            runs=3,
            best_fitness=[(500, 6.5, 0.25), (1000, 4.0, 0.5)],
            scalars={"reproductions_per_sec": (12.0, 1.0), "final_best_fitness": (4.0, 0.5)},
        )
        path = tmp_path / "summary.csv"
        write_summary_csv(path, [summary])
        rows = read_summary_csv(path)
        assert rows[0]["model"] == "hybrid"
        assert rows[0]["metric"] == "best_fitness"
        assert float(rows[0]["mean"]) == 6.5
        buckets = {r["bucket_ms"] for r in rows if r["metric"] == "best_fitness"}
        assert buckets == {"500", "1000"}
        scalar_rows = {r["metric"]: r for r in rows if not r["metric"].startswith("best")}
        assert scalar_rows["reproductions_per_sec"]["bucket_ms"] == "1000"
