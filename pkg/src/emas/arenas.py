"""Behaviour routing and the per-arena meeting functions.

Agents never interact directly: a behaviour function maps each agent to an
arena kind based on its energy, and each arena applies a pure meeting
function to the group it gathered (the mediator pattern). Every meeting is
exactly energy-neutral, which :func:`partition_and_meet` asserts with integer
arithmetic on every call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import (
    Agent,
    ConfigError,
    ConservationError,
    ProblemConfig,
    RandomSource,
    mutate,
    new_agent,
    recombine,
)

IslandRef = int


class ArenaKind(Enum):
    DEATH = "death"
    FIGHT = "fight"
    REPRODUCTION = "reproduction"
    MIGRATION = "migration"


@dataclass
class BehaviourConfig:
    """Energy thresholds and amounts steering the behaviour/meeting cycle.

    The reproduction threshold is strict: an agent reproduces only with
    energy strictly greater than it, so with threshold 10 an agent needs 11.
    ``child_energy`` is what every newborn receives; a reproducing pair funds
    each child half-and-half, a lone parent funds the whole child. The
    threshold must cover child_energy so a reproducing parent stays alive.
    """

    reproduction_threshold: int = 10
    migration_probability: float = 0.01
    fight_transfer: int = 1
    child_energy: int = 10
    initial_energy: int = 10

    def __post_init__(self) -> None:
        if self.reproduction_threshold < 1:
            raise ConfigError(f"reproduction_threshold must be >= 1, got {self.reproduction_threshold}")
        if self.reproduction_threshold < self.child_energy:
            raise ConfigError(
                "reproduction_threshold must be >= child_energy so a reproducing "
                f"parent survives its donation, got {self.reproduction_threshold} < {self.child_energy}"
            )
        if not 0.0 <= self.migration_probability < 1.0:
            raise ConfigError(f"migration_probability must be in [0, 1), got {self.migration_probability}")
        if self.fight_transfer < 1:
            raise ConfigError(f"fight_transfer must be >= 1, got {self.fight_transfer}")
        if self.child_energy < 1:
            raise ConfigError(f"child_energy must be >= 1, got {self.child_energy}")
        if self.child_energy % 2 != 0:
            raise ConfigError(f"child_energy must be even for an integral pairwise split, got {self.child_energy}")
        if self.initial_energy < 1:
            raise ConfigError(f"initial_energy must be >= 1, got {self.initial_energy}")


@dataclass(frozen=True)
class Topology:
    """Migration graph over islands; ``neighbors[i]`` are valid destinations from i."""

    neighbors: tuple[tuple[IslandRef, ...], ...]

    @property
    def islands(self) -> int:
        return len(self.neighbors)

    @classmethod
    def fully_connected(cls, islands: int) -> "Topology":
        if islands < 1:
            raise ConfigError(f"topology needs >= 1 island, got {islands}")
        return cls(tuple(tuple(j for j in range(islands) if j != i) for i in range(islands)))

    @classmethod
    def ring(cls, islands: int) -> "Topology":
        if islands < 1:
            raise ConfigError(f"topology needs >= 1 island, got {islands}")
        if islands == 1:
            return cls(((),))
        return cls(tuple(tuple(sorted({(i - 1) % islands, (i + 1) % islands})) for i in range(islands)))


@dataclass
class MeetingResult:
    """Output of one meeting: updated survivors plus any emigrants with destinations."""

    survivors: list[Agent]
    emigrants: list[tuple[Agent, IslandRef]] = field(default_factory=list)

    def total_energy(self) -> int:
        return sum(a.energy for a in self.survivors) + sum(a.energy for a, _ in self.emigrants)


def behaviour(a: Agent, cfg: BehaviourConfig, rng: RandomSource) -> ArenaKind:
    """Choose an arena from the agent's current energy.

    Zero energy routes to death unconditionally; otherwise migration is
    chosen with a fixed low probability, then energy above the reproduction
    threshold selects reproduction and anything else fights.
    """
    if a.energy == 0:
        return ArenaKind.DEATH
    if cfg.migration_probability > 0.0 and rng.random() < cfg.migration_probability:
        return ArenaKind.MIGRATION
    if a.energy > cfg.reproduction_threshold:
        return ArenaKind.REPRODUCTION
    return ArenaKind.FIGHT


def death_meeting(group: list[Agent]) -> MeetingResult:
    """Remove the gathered agents; they must all have reached zero energy."""
    for a in group:
        if a.energy != 0:
            raise ConservationError(f"agent with energy {a.energy} routed to death arena")
    return MeetingResult(survivors=[])


def fight_meeting(a: Agent, b: Agent, cfg: BehaviourConfig) -> MeetingResult:
    """The better (lower-fitness) agent takes energy from the worse one.

    Ties make the second agent lose. The transfer is clamped to the loser's
    energy, so a loser drained to zero is routed to death on its next choice.
    """
    if b.fitness < a.fitness:
        winner, loser = b, a
    else:
        winner, loser = a, b
    t = min(cfg.fight_transfer, loser.energy)
    return MeetingResult(survivors=[winner.with_energy(winner.energy + t), loser.with_energy(loser.energy - t)])


def reproduction_meeting(
    group: list[Agent], cfg: BehaviourConfig, problem: ProblemConfig, rng: RandomSource
) -> MeetingResult:
    """Create children funded by the parents' energy, exactly conserving it.

    A pair recombines, both children are mutated, and each child receives
    child_energy funded half by each parent (so each parent donates
    child_energy in total). A lone agent reproduces asexually: one mutated
    child, fully funded by the parent. The lone path serves both the
    sequential odd-leftover rule and the concurrent timeout flush.
    """
    donation = cfg.child_energy
    for a in group:
        if a.energy <= donation:
            raise ConservationError(
                f"reproducing agent energy {a.energy} cannot donate {donation} and stay alive"
            )
    if len(group) == 2:
        p1, p2 = group
        g1, g2 = recombine(p1.genotype, p2.genotype, problem, rng)
        children = [
            new_agent(mutate(g1, problem, rng), cfg.child_energy, problem),
            new_agent(mutate(g2, problem, rng), cfg.child_energy, problem),
        ]
        parents = [p1.with_energy(p1.energy - donation), p2.with_energy(p2.energy - donation)]
        return MeetingResult(survivors=parents + children)
    if len(group) == 1:
        p = group[0]
        child = new_agent(mutate(p.genotype, problem, rng), cfg.child_energy, problem)
        return MeetingResult(survivors=[p.with_energy(p.energy - donation), child])
    raise ConfigError(f"reproduction meeting takes one or two agents, got {len(group)}")


def migration_meeting(
    group: list[Agent], self_island: IslandRef, topology: Topology, rng: RandomSource
) -> MeetingResult:
    """Assign each agent a destination drawn uniformly from the island's neighbors.

    With no neighbors (single island) there is nowhere to go and the agents
    are returned unchanged.
    """
    neighbors = topology.neighbors[self_island]
    if not neighbors:
        return MeetingResult(survivors=list(group))
    emigrants = [(a, neighbors[rng.integers(len(neighbors))]) for a in group]
    return MeetingResult(survivors=[], emigrants=emigrants)


@dataclass
class StepOutcome:
    """Everything one behaviour/meeting sweep over a population produced."""

    population: list[Agent]
    emigrants: list[tuple[Agent, IslandRef]]
    meetings: list[tuple[ArenaKind, int]]  # (kind, measured energy delta) per meeting
    births: int
    deaths: int
    best_new_fitness: float | None

    def count(self, kind: ArenaKind) -> int:
        return sum(1 for k, _ in self.meetings if k is kind)


def _checked(kind: ArenaKind, energy_in: int, result: MeetingResult) -> tuple[ArenaKind, int]:
    delta = result.total_energy() - energy_in
    if delta != 0:
        raise ConservationError(f"{kind.value} meeting changed total energy by {delta}")
    return (kind, delta)


def partition_and_meet(
    population: list[Agent],
    self_island: IslandRef,
    cfg: BehaviourConfig,
    problem: ProblemConfig,
    topology: Topology,
    rng: RandomSource,
) -> StepOutcome:
    """One full sweep: route every agent to an arena and run all meetings.

    Fight and reproduction groups are shuffled and met pairwise; an odd
    fight leftover passes through unchanged, an odd reproduction leftover
    reproduces asexually. Survivors of all arenas are concatenated and
    emigrants returned separately. Raises ConservationError if any meeting
    fails to conserve energy exactly.
    """
    groups: dict[ArenaKind, list[Agent]] = {kind: [] for kind in ArenaKind}
    for a in population:
        groups[behaviour(a, cfg, rng)].append(a)

    meetings: list[tuple[ArenaKind, int]] = []
    survivors: list[Agent] = []
    births = 0
    best_new: float | None = None

    dead = groups[ArenaKind.DEATH]
    if dead:
        result = death_meeting(dead)
        meetings.append(_checked(ArenaKind.DEATH, sum(a.energy for a in dead), result))
        survivors.extend(result.survivors)

    emigrants: list[tuple[Agent, IslandRef]] = []
    migrants = groups[ArenaKind.MIGRATION]
    if migrants:
        result = migration_meeting(migrants, self_island, topology, rng)
        meetings.append(_checked(ArenaKind.MIGRATION, sum(a.energy for a in migrants), result))
        survivors.extend(result.survivors)
        emigrants.extend(result.emigrants)

    fighters = groups[ArenaKind.FIGHT]
    rng.shuffle(fighters)
    for i in range(0, len(fighters) - 1, 2):
        a, b = fighters[i], fighters[i + 1]
        result = fight_meeting(a, b, cfg)
        meetings.append(_checked(ArenaKind.FIGHT, a.energy + b.energy, result))
        survivors.extend(result.survivors)
    if len(fighters) % 2 == 1:
        survivors.append(fighters[-1])

    breeders = groups[ArenaKind.REPRODUCTION]
    rng.shuffle(breeders)
    for i in range(0, len(breeders) - 1, 2):
        pair = [breeders[i], breeders[i + 1]]
        result = reproduction_meeting(pair, cfg, problem, rng)
        meetings.append(_checked(ArenaKind.REPRODUCTION, pair[0].energy + pair[1].energy, result))
        survivors.extend(result.survivors)
        births += 2
        f = min(result.survivors[-2].fitness, result.survivors[-1].fitness)
        best_new = f if best_new is None else min(best_new, f)
    if len(breeders) % 2 == 1:
        lone = breeders[-1]
        result = reproduction_meeting([lone], cfg, problem, rng)
        meetings.append(_checked(ArenaKind.REPRODUCTION, lone.energy, result))
        survivors.extend(result.survivors)
        births += 1
        f = result.survivors[-1].fitness
        best_new = f if best_new is None else min(best_new, f)

    return StepOutcome(
        population=survivors,
        emigrants=emigrants,
        meetings=meetings,
        births=births,
        deaths=len(dead),
        best_new_fitness=best_new,
    )
