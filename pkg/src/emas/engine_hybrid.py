"""Hybrid engine: one OS process per island, migration by message passing.

Each island worker owns its population and generator outright and runs the
sequential per-step loop; the only inter-island effect is an agent pickled
into another island's inbox queue (transfer of ownership). A shared
semaphore caps how many workers may compute a step at once, which is the
``execution_units`` knob the scaling comparison turns. Workers use fork
start semantics, so the engine must be started before the parent creates
any threads of its own.

Shutdown: the coordinator sets a stop event; every worker finishes the step
it is in (including that step's emigrant sends), then reports its events
and final population over a result queue and exits. Immigrants still
sitting in inboxes afterwards are drained and credited to their destination
island by the coordinator, which is what makes the final energy accounting
exact.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import queue
import time
import traceback

from . import metrics
from .config import RunConfig
from .core import Agent, ConservationError, derive_rng, initial_population
from .engine_seq import record_outcome
from .arenas import partition_and_meet
from .metrics import BufferSink, MetricEvent, Recorder, RunTrace, wall_clock_ms

logger = logging.getLogger(__name__)

MODEL = "hybrid"

_JOIN_GRACE_S = 30.0


def _island_worker(
    island: int,
    config: RunConfig,
    t0: float,
    inboxes: list,
    results,
    stop,
    semaphore,
) -> None:
    """Worker body: drain inbox, step, send emigrants, until stopped."""
    try:
        rng = derive_rng(config.seed, island)
        population = initial_population(
            config.population_per_island, config.problem, config.behaviour.initial_energy, rng
        )
        sink = BufferSink()
        step_counter = 0
        if config.steps is not None:
            clock = lambda: step_counter  # noqa: E731 - virtual clock, 1 step = 1 ms
        else:
            clock = wall_clock_ms(origin=t0)
        recorder = Recorder(
            run_id=config.run_id,
            model=MODEL,
            island=island,
            sink=sink,
            clock=clock,
            count_interval_ms=config.count_interval_ms,
            heartbeat_ms=config.heartbeat_ms,
            ledger=config.ledger,
        )
        recorder.ledger_event(metrics.LEDGER_INIT, sum(a.energy for a in population))
        recorder.observe_fitness(min(a.fitness for a in population))
        topology = config.topology()
        inbox = inboxes[island]
        losses = 0

        def keep_going() -> bool:
            if config.steps is not None:
                return step_counter < config.steps
            return not stop.is_set()

        while keep_going():
            while True:
                try:
                    immigrant: Agent = inbox.get_nowait()
                except queue.Empty:
                    break
                population.append(immigrant)
                recorder.ledger_event(metrics.LEDGER_IMMIGRATE, immigrant.energy)
            with semaphore:
                outcome = partition_and_meet(
                    population, island, config.behaviour, config.problem, topology, rng
                )
            population = outcome.population
            record_outcome(recorder, outcome)
            for agent, dest in outcome.emigrants:
                try:
                    inboxes[dest].put(agent)
                    recorder.ledger_event(metrics.LEDGER_EMIGRATE, -agent.energy)
                except (ValueError, OSError):
                    population.append(agent)  # keep it: energy must not vanish
                    losses += 1
            rng.shuffle(population)
            step_counter += 1
            recorder.maybe_flush()
            recorder.heartbeat()

        recorder.finish()
        results.put(("ok", island, sink.events(), population, losses, step_counter))
    except Exception:  # surfaced by the coordinator as a run failure
        results.put(("error", island, traceback.format_exc(), [], 0, 0))


def run(config: RunConfig) -> RunTrace:
    """Execute one hybrid run and merge per-island streams into a trace."""
    ctx = mp.get_context("fork")
    inboxes = [ctx.Queue() for _ in range(config.islands)]
    results = ctx.Queue()
    stop = ctx.Event()
    semaphore = ctx.Semaphore(config.execution_units)
    t0 = time.monotonic()
    workers = [
        ctx.Process(
            target=_island_worker,
            args=(island, config, t0, inboxes, results, stop, semaphore),
            name=f"island-{island}",
        )
        for island in range(config.islands)
    ]
    for w in workers:
        w.start()

    if config.duration_ms is not None:
        time.sleep(config.duration_ms / 1000.0)
        stop.set()

    outcomes: dict[int, tuple[list[MetricEvent], list[Agent], int, int]] = {}
    errors: list[str] = []
    deadline = time.monotonic() + _JOIN_GRACE_S + (0 if config.duration_ms else 600)
    for _ in range(config.islands):
        remaining = max(0.1, deadline - time.monotonic())
        try:
            status, island, payload, population, losses, steps = results.get(timeout=remaining)
        except queue.Empty:
            break
        if status == "ok":
            outcomes[island] = (payload, population, losses, steps)
        else:
            errors.append(f"island {island}:\n{payload}")
    stop.set()
    for w in workers:
        w.join(timeout=_JOIN_GRACE_S)
        if w.is_alive():
            w.terminate()
            errors.append(f"worker {w.name} failed to stop and was terminated")
    if errors:
        raise RuntimeError("hybrid run failed:\n" + "\n".join(errors))
    if len(outcomes) != config.islands:
        raise RuntimeError(f"hybrid run lost workers: got {len(outcomes)}/{config.islands} results")

    events: list[MetricEvent] = []
    populations: dict[int, list[Agent]] = {}
    total_losses = 0
    for island in range(config.islands):
        island_events, population, losses, steps = outcomes[island]
        events.extend(island_events)
        populations[island] = population
        total_losses += losses

    # Credit leftover in-flight immigrants to their destination islands.
    final_ts = max((e.timestamp_ms for e in events), default=0)
    for island, inbox in enumerate(inboxes):
        while True:
            try:
                immigrant = inbox.get(timeout=0.05)
            except queue.Empty:
                break
            populations[island].append(immigrant)
            if config.ledger:
                events.append(
                    MetricEvent(
                        config.run_id, MODEL, island, final_ts, metrics.LEDGER_IMMIGRATE, immigrant.energy
                    )
                )
        inbox.close()
        inbox.join_thread()

    initial_total = config.islands * config.population_per_island * config.behaviour.initial_energy
    final_total = sum(a.energy for pop in populations.values() for a in pop)
    if config.ledger:
        for island in range(config.islands):
            island_total = sum(a.energy for a in populations[island])
            events.append(
                MetricEvent(config.run_id, MODEL, island, final_ts, metrics.LEDGER_FINAL, island_total)
            )
    if total_losses:
        events.append(
            MetricEvent(config.run_id, MODEL, 0, final_ts, metrics.SHUTDOWN_LOSS_COUNT, total_losses)
        )
    if final_total != initial_total:
        raise ConservationError(
            f"run {config.run_id}: total energy drifted from {initial_total} to {final_total}"
        )
    logger.debug("hybrid run %s: %d islands, total energy %d", config.run_id, config.islands, final_total)
    return RunTrace(run_id=config.run_id, model=MODEL, config=config.snapshot(MODEL), events=events)
