"""Fully concurrent engine: every agent and every arena is its own task.

There is no population-wide step. Each agent task loops on its own pace:
pick an arena from current energy, send itself with a one-shot reply
future, await the outcome. Arena tasks gather senders until their capacity
(two for fight and reproduction, one for death and migration) and apply the
shared meeting functions; a straggler waiting alone in a pairwise arena is
flushed after ``flush_timeout_ms`` (a fight flush returns the agent
unchanged, a reproduction flush breeds asexually). Migration swaps the
agent's arena set, which is the only thing that makes an island an island.

Everything runs on one event loop, so a single generator serves all arena
decisions without locking; scheduling order, not the generator, is the
source of nondeterminism. Shutdown is a drain: a stopping flag makes agents
retire at their next decision point, arenas answer everything still queued
with a shutdown reply, and survivors record themselves exactly once, which
is what makes the final energy accounting exact.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field

from . import metrics
from .arenas import (
    ArenaKind,
    BehaviourConfig,
    Topology,
    behaviour,
    fight_meeting,
    reproduction_meeting,
)
from .config import RunConfig
from .core import Agent, ConfigError, ConservationError, ProblemConfig, RandomSource, derive_rng, initial_population
from .metrics import BufferSink, Recorder, RunTrace, wall_clock_ms

logger = logging.getLogger(__name__)

MODEL = "concurrent"

_SENTINEL = object()
_DRAIN_GRACE_S = 30.0


@dataclass
class IslandArenas:
    """The four arena mailboxes that constitute one logical island."""

    island: int
    death: asyncio.Queue
    fight: asyncio.Queue
    reproduction: asyncio.Queue
    migration: asyncio.Queue

    def queue_for(self, kind: ArenaKind) -> asyncio.Queue:
        return getattr(self, kind.value)


@dataclass
class _System:
    config: RunConfig
    cfg: BehaviourConfig
    problem: ProblemConfig
    topology: Topology
    rng: RandomSource
    recorders: list[Recorder]
    arena_sets: list[IslandArenas]
    survivors: list[tuple[int, Agent]] = field(default_factory=list)
    agent_tasks: list[asyncio.Task] = field(default_factory=list)
    stopping: bool = False

    def spawn(self, agent: Agent, arenas: IslandArenas) -> None:
        self.agent_tasks.append(asyncio.create_task(_agent_loop(agent, arenas, self)))


async def _agent_loop(agent: Agent, arenas: IslandArenas, system: _System) -> None:
    """One agent's life: choose, send, await, repeat, until death or drain."""
    while True:
        if system.stopping:
            system.survivors.append((arenas.island, agent))
            return
        kind = behaviour(agent, system.cfg, system.rng)
        if kind is ArenaKind.DEATH:
            arenas.death.put_nowait((agent, None))
            return
        reply: asyncio.Future = asyncio.get_running_loop().create_future()
        arenas.queue_for(kind).put_nowait((agent, reply))
        tag, payload = await reply
        if tag == "state":
            agent = payload
        elif tag == "migrate":
            arenas = payload
        else:  # "shutdown": keep the last confirmed state and retire
            system.survivors.append((arenas.island, agent))
            return


async def _death_arena(q: asyncio.Queue, island: int, system: _System) -> None:
    recorder = system.recorders[island]
    while True:
        item = await q.get()
        if item is _SENTINEL:
            return
        agent, _ = item
        if agent.energy != 0:
            raise ConservationError(f"agent with energy {agent.energy} sent to death arena")
        recorder.count(metrics.DEATH_COUNT, 1)
        recorder.ledger_event(metrics.LEDGER_DEATH, 0)
        await asyncio.sleep(0)


async def _migration_arena(q: asyncio.Queue, island: int, system: _System) -> None:
    recorder = system.recorders[island]
    neighbors = system.topology.neighbors[island]
    while True:
        item = await q.get()
        if item is _SENTINEL:
            await _drain(q, system)
            return
        agent, reply = item
        if system.stopping:
            reply.set_result(("shutdown", None))
        elif not neighbors:
            reply.set_result(("state", agent))
        else:
            dest = neighbors[system.rng.integers(len(neighbors))]
            recorder.count(metrics.MIGRATION_COUNT, 1)
            recorder.ledger_event(metrics.LEDGER_EMIGRATE, -agent.energy)
            system.recorders[dest].ledger_event(metrics.LEDGER_IMMIGRATE, agent.energy)
            reply.set_result(("migrate", system.arena_sets[dest]))
        await asyncio.sleep(0)


async def _pair_arena(kind: ArenaKind, q: asyncio.Queue, island: int, system: _System) -> None:
    """Fight or reproduction arena: capacity 2 with a straggler flush."""
    recorder = system.recorders[island]
    timeout = system.config.flush_timeout_ms / 1000.0
    pending: tuple | None = None
    while True:
        if pending is None:
            item = await q.get()
        else:
            try:
                item = await asyncio.wait_for(q.get(), timeout)
            except asyncio.TimeoutError:
                _flush_single(kind, pending, island, system)
                pending = None
                continue
        if item is _SENTINEL:
            if pending is not None:
                pending[1].set_result(("shutdown", None))
            await _drain(q, system)
            return
        if system.stopping:
            item[1].set_result(("shutdown", None))
            if pending is not None:
                pending[1].set_result(("shutdown", None))
                pending = None
            continue
        if pending is None:
            pending = item
            continue
        first, second = pending, item
        pending = None
        _meet_pair(kind, first, second, island, system)
        await asyncio.sleep(0)


def _meet_pair(kind: ArenaKind, first: tuple, second: tuple, island: int, system: _System) -> None:
    a, reply_a = first
    b, reply_b = second
    recorder = system.recorders[island]
    energy_in = a.energy + b.energy
    if kind is ArenaKind.FIGHT:
        result = fight_meeting(a, b, system.cfg)
        recorder.count(metrics.FIGHT_COUNT, 1)
        recorder.ledger_event(metrics.LEDGER_FIGHT, result.total_energy() - energy_in)
        winner, loser = result.survivors
        reply_a.set_result(("state", winner if winner.genotype is a.genotype else loser))
        reply_b.set_result(("state", winner if winner.genotype is b.genotype else loser))
    else:
        result = reproduction_meeting([a, b], system.cfg, system.problem, system.rng)
        recorder.count(metrics.REPRODUCTION_COUNT, 2)
        recorder.ledger_event(metrics.LEDGER_REPRODUCTION, result.total_energy() - energy_in)
        parent_a, parent_b, child_1, child_2 = result.survivors
        reply_a.set_result(("state", parent_a))
        reply_b.set_result(("state", parent_b))
        arenas = system.arena_sets[island]
        for child in (child_1, child_2):
            recorder.observe_fitness(child.fitness)
            system.spawn(child, arenas)


def _flush_single(kind: ArenaKind, item: tuple, island: int, system: _System) -> None:
    """Straggler flush: a lone fighter passes unchanged, a lone breeder selfs."""
    agent, reply = item
    recorder = system.recorders[island]
    if system.stopping:
        reply.set_result(("shutdown", None))
        return
    if kind is ArenaKind.FIGHT:
        reply.set_result(("state", agent))
        return
    result = reproduction_meeting([agent], system.cfg, system.problem, system.rng)
    recorder.count(metrics.REPRODUCTION_COUNT, 1)
    recorder.ledger_event(metrics.LEDGER_REPRODUCTION, result.total_energy() - agent.energy)
    parent, child = result.survivors
    reply.set_result(("state", parent))
    recorder.observe_fitness(child.fitness)
    system.spawn(child, system.arena_sets[island])


async def _drain(q: asyncio.Queue, system: _System) -> None:
    """Answer anything still queued after the sentinel with shutdown replies.

    By the time sentinels are placed every agent task has finished, which
    means every send was already answered; this sweep only defends against
    protocol regressions.
    """
    while not q.empty():
        item = q.get_nowait()
        if item is _SENTINEL:
            continue
        _, reply = item
        if reply is not None:
            reply.set_result(("shutdown", None))
        await asyncio.sleep(0)


async def _sampler(system: _System) -> None:
    interval = max(0.05, system.config.count_interval_ms / 1000.0)
    while not system.stopping:
        await asyncio.sleep(interval)
        for recorder in system.recorders:
            recorder.maybe_flush()
            recorder.heartbeat()


async def _run_async(config: RunConfig) -> RunTrace:
    sink = BufferSink()
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
    arena_sets = [
        IslandArenas(
            island=island,
            death=asyncio.Queue(),
            fight=asyncio.Queue(),
            reproduction=asyncio.Queue(),
            migration=asyncio.Queue(),
        )
        for island in range(config.islands)
    ]
    system = _System(
        config=config,
        cfg=config.behaviour,
        problem=config.problem,
        topology=config.topology(),
        rng=derive_rng(config.seed, config.islands),
        recorders=recorders,
        arena_sets=arena_sets,
    )

    arena_tasks = []
    for arenas in arena_sets:
        island = arenas.island
        arena_tasks.append(asyncio.create_task(_death_arena(arenas.death, island, system)))
        arena_tasks.append(asyncio.create_task(_migration_arena(arenas.migration, island, system)))
        arena_tasks.append(asyncio.create_task(_pair_arena(ArenaKind.FIGHT, arenas.fight, island, system)))
        arena_tasks.append(
            asyncio.create_task(_pair_arena(ArenaKind.REPRODUCTION, arenas.reproduction, island, system))
        )

    initial_total = 0
    for island in range(config.islands):
        population = initial_population(
            config.population_per_island, config.problem, config.behaviour.initial_energy, derive_rng(config.seed, island)
        )
        initial_total += sum(a.energy for a in population)
        recorders[island].ledger_event(metrics.LEDGER_INIT, sum(a.energy for a in population))
        recorders[island].observe_fitness(min(a.fitness for a in population))
        for agent in population:
            system.spawn(agent, arena_sets[island])

    sampler = asyncio.create_task(_sampler(system))
    await asyncio.sleep(config.duration_ms / 1000.0)
    system.stopping = True

    deadline = time.monotonic() + _DRAIN_GRACE_S
    while True:
        live = [t for t in system.agent_tasks if not t.done()]
        if not live:
            break
        if time.monotonic() > deadline:
            raise RuntimeError(f"{len(live)} agent tasks failed to drain within {_DRAIN_GRACE_S}s")
        await asyncio.wait(live, timeout=deadline - time.monotonic())
    for task in system.agent_tasks:
        task.result()  # re-raise any agent failure
    await sampler

    for arenas in arena_sets:
        for q in (arenas.death, arenas.fight, arenas.reproduction, arenas.migration):
            q.put_nowait(_SENTINEL)
    await asyncio.wait_for(asyncio.gather(*arena_tasks), _DRAIN_GRACE_S)

    final_by_island = [0] * config.islands
    for island, agent in system.survivors:
        final_by_island[island] += agent.energy
    final_total = sum(final_by_island)
    if final_total != initial_total:
        raise ConservationError(
            f"run {config.run_id}: total energy drifted from {initial_total} to {final_total}"
        )
    for island in range(config.islands):
        recorders[island].ledger_event(metrics.LEDGER_FINAL, final_by_island[island])
        recorders[island].finish()
    sink.close()
    logger.debug(
        "concurrent run %s: %d survivors, total energy %d",
        config.run_id,
        len(system.survivors),
        final_total,
    )
    return RunTrace(run_id=config.run_id, model=MODEL, config=config.snapshot(MODEL), events=sink.events())


def run(config: RunConfig) -> RunTrace:
    """Execute one concurrent run for its wall-clock duration."""
    if config.steps is not None:
        raise ConfigError("the concurrent engine has no steps; use a wall-clock duration")
    return asyncio.run(_run_async(config))
