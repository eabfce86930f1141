"""Sequential discrete-event engine.

One execution context sweeps every island once per step: behaviour routing,
all meetings, end-of-step delivery of emigrants, then a shuffle of each
island's population. Each island owns a dedicated generator derived from
the master seed, mirroring the hybrid engine's per-worker generators, so a
(seed, config, step budget) triple determines the whole trajectory and the
emitted trace byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import metrics
from .arenas import ArenaKind, StepOutcome, partition_and_meet
from .config import RunConfig
from .core import Agent, ConservationError, RandomSource, derive_rng, initial_population
from .metrics import BufferSink, Recorder, RunTrace, wall_clock_ms

logger = logging.getLogger(__name__)

MODEL = "sequential"

LEDGER_BY_KIND = {
    ArenaKind.DEATH: metrics.LEDGER_DEATH,
    ArenaKind.FIGHT: metrics.LEDGER_FIGHT,
    ArenaKind.REPRODUCTION: metrics.LEDGER_REPRODUCTION,
    ArenaKind.MIGRATION: metrics.LEDGER_MIGRATION,
}


@dataclass
class SimState:
    islands: list[list[Agent]]
    step_counter: int
    rngs: list[RandomSource]

    def total_energy(self) -> int:
        return sum(a.energy for pop in self.islands for a in pop)

    def best_fitness(self) -> float:
        return min(a.fitness for pop in self.islands for a in pop)


def new_sim(config: RunConfig) -> SimState:
    rngs = [derive_rng(config.seed, i) for i in range(config.islands)]
    islands = [
        initial_population(
            config.population_per_island, config.problem, config.behaviour.initial_energy, rngs[i]
        )
        for i in range(config.islands)
    ]
    return SimState(islands=islands, step_counter=0, rngs=rngs)


def record_outcome(recorder: Recorder, outcome: StepOutcome) -> None:
    """Translate one island sweep into metric counts and ledger deltas."""
    recorder.count(metrics.FIGHT_COUNT, outcome.count(ArenaKind.FIGHT))
    recorder.count(metrics.REPRODUCTION_COUNT, outcome.births)
    recorder.count(metrics.DEATH_COUNT, outcome.deaths)
    recorder.count(metrics.MIGRATION_COUNT, len(outcome.emigrants))
    if outcome.best_new_fitness is not None:
        recorder.observe_fitness(outcome.best_new_fitness)
    if recorder.ledger:
        for kind, delta in outcome.meetings:
            recorder.ledger_event(LEDGER_BY_KIND[kind], delta)


def step(state: SimState, config: RunConfig, recorders: list[Recorder] | None = None) -> SimState:
    """Advance every island by one sweep, then migrate and shuffle.

    All islands are swept against their pre-step populations before any
    emigrant is delivered, so migration lands at the end of the step.
    """
    topology = config.topology()
    pending: list[tuple[Agent, int]] = []
    for island, population in enumerate(state.islands):
        outcome = partition_and_meet(
            population, island, config.behaviour, config.problem, topology, state.rngs[island]
        )
        state.islands[island] = outcome.population
        pending.extend(outcome.emigrants)
        if recorders is not None:
            record_outcome(recorders[island], outcome)
            for agent, _ in outcome.emigrants:
                recorders[island].ledger_event(metrics.LEDGER_EMIGRATE, -agent.energy)
    for agent, dest in pending:
        state.islands[dest].append(agent)
        if recorders is not None:
            recorders[dest].ledger_event(metrics.LEDGER_IMMIGRATE, agent.energy)
    for island, population in enumerate(state.islands):
        state.rngs[island].shuffle(population)
    state.step_counter += 1
    return state


def run(config: RunConfig) -> RunTrace:
    """Execute one sequential run under a step or wall-clock budget."""
    state = new_sim(config)
    sink = BufferSink()
    if config.steps is not None:
        clock = lambda: state.step_counter  # noqa: E731 - virtual clock, 1 step = 1 ms
    else:
        clock = wall_clock_ms()
    recorders = [
        Recorder(
            run_id=config.run_id,
            model=MODEL,
            island=island,
            sink=sink,
            clock=clock,
            count_interval_ms=config.count_interval_ms,
            heartbeat_ms=config.heartbeat_ms,
            ledger=config.ledger,
        )
        for island in range(config.islands)
    ]
    initial_total = state.total_energy()
    for island, population in enumerate(state.islands):
        recorders[island].ledger_event(metrics.LEDGER_INIT, sum(a.energy for a in population))
        recorders[island].observe_fitness(min(a.fitness for a in population))

    if config.steps is not None:
        for _ in range(config.steps):
            step(state, config, recorders)
            for r in recorders:
                r.maybe_flush()
                r.heartbeat()
    else:
        while clock() < config.duration_ms:
            step(state, config, recorders)
            for r in recorders:
                r.maybe_flush()
                r.heartbeat()

    final_total = state.total_energy()
    if final_total != initial_total:
        raise ConservationError(
            f"run {config.run_id}: total energy drifted from {initial_total} to {final_total}"
        )
    for island, population in enumerate(state.islands):
        recorders[island].ledger_event(metrics.LEDGER_FINAL, sum(a.energy for a in population))
        recorders[island].finish()
    sink.close()
    logger.debug(
        "sequential run %s: %d steps, best %.6g", config.run_id, state.step_counter, state.best_fitness()
    )
    return RunTrace(run_id=config.run_id, model=MODEL, config=config.snapshot(MODEL), events=sink.events())
