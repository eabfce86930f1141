"""Brute-force oracles backing the derived test values.

Two independent verification routes live here: a ledger replayer that
re-checks energy conservation from a run's serialized event log, and an
exhaustive enumerator of every outcome a single behaviour/meeting sweep can
reach on a small population. Both deliberately reimplement the rules they
check instead of calling engine code; they share only the domain types.
They are unashamedly slow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .arenas import BehaviourConfig, Topology
from .core import Agent, ConfigError, ProblemConfig

# CSV schema knowledge is restated here on purpose: the oracle reads the
# file format contract, not the writer's code.
_HEADER = ("run_id", "model", "island", "timestamp_ms", "kind", "value")
_DELTA_KINDS = ("ledger_fight", "ledger_reproduction", "ledger_death", "ledger_migration")
_INIT = "ledger_init"
_FINAL = "ledger_final"
_EMIGRATE = "ledger_emigrate"
_IMMIGRATE = "ledger_immigrate"


def scalar_rastrigin(xs) -> float:
    """Per-term Rastrigin evaluated with plain math, no vectorization."""
    return math.fsum(10.0 + x * x - 10.0 * math.cos(2.0 * math.pi * x) for x in xs)


@dataclass
class LedgerReport:
    """Verdict of replaying one or more run logs."""

    ok: bool
    inconclusive: bool = False
    reason: str | None = None
    violations: list[str] = field(default_factory=list)
    initial_total: int = 0
    final_total: int = 0

    @property
    def first_violation(self) -> str | None:
        return self.violations[0] if self.violations else None


def _parse_int(value: str) -> int:
    f = float(value)
    i = int(f)
    if f != i:
        raise ConfigError(f"ledger value {value!r} is not an integer")
    return i


def replay_ledger(path: str) -> LedgerReport:
    """Re-derive every balance in a trace CSV and flag the first break.

    Checks, per run in the file: every per-meeting delta is exactly zero;
    every island's init total plus all recorded deltas equals its final
    total; emigration and immigration cancel globally (nothing in flight);
    and the global final total equals the global initial total. A log
    without init and final markers for every participating island is
    truncated and reported inconclusive rather than passed.
    """
    rows: list[tuple[str, str, int, str, str]] = []
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = tuple(next(reader, ()))
    if header != _HEADER:
        return LedgerReport(ok=False, inconclusive=True, reason=f"unexpected header {header}")
    for run_id, _model, island, _ts, kind, value in reader:
        if kind.startswith("ledger_"):
            rows.append((run_id, kind, int(island), value, ""))

    if not rows:
        return LedgerReport(ok=False, inconclusive=True, reason="no ledger events in log")

    report = LedgerReport(ok=True)
    runs: dict[str, list[tuple[str, int, str]]] = {}
    for run_id, kind, island, value, _ in rows:
        runs.setdefault(run_id, []).append((kind, island, value))
    for run_id, events in runs.items():
        _replay_run(run_id, events, report)
    report.ok = not report.violations and not report.inconclusive
    return report


def _replay_run(run_id: str, events: list[tuple[str, int, str]], report: LedgerReport) -> None:
    init: dict[int, int] = {}
    final: dict[int, int] = {}
    delta: dict[int, int] = {}
    flow = 0  # emigrations are negative, immigrations positive
    for position, (kind, island, raw) in enumerate(events):
        value = _parse_int(raw)
        if kind == _INIT:
            if island in init:
                report.violations.append(f"{run_id}: duplicate init for island {island}")
            init[island] = value
        elif kind == _FINAL:
            if island in final:
                report.violations.append(f"{run_id}: duplicate final for island {island}")
            final[island] = value
        elif kind in _DELTA_KINDS:
            if value != 0:
                report.violations.append(
                    f"{run_id}: event {position} ({kind}, island {island}) has nonzero delta {value}"
                )
            delta[island] = delta.get(island, 0) + value
        elif kind == _EMIGRATE:
            if value >= 0:
                report.violations.append(
                    f"{run_id}: event {position} emigration delta {value} is not negative"
                )
            delta[island] = delta.get(island, 0) + value
            flow += value
        elif kind == _IMMIGRATE:
            if value <= 0:
                report.violations.append(
                    f"{run_id}: event {position} immigration delta {value} is not positive"
                )
            delta[island] = delta.get(island, 0) + value
            flow += value
        else:
            report.violations.append(f"{run_id}: unknown ledger kind {kind!r}")

    islands = set(init) | set(final) | set(delta)
    missing = sorted(i for i in islands if i not in init or i not in final)
    if missing:
        report.inconclusive = True
        report.reason = f"{run_id}: islands {missing} lack init/final markers (truncated log)"
        return
    for island in sorted(islands):
        expected = init[island] + delta.get(island, 0)
        if expected != final[island]:
            report.violations.append(
                f"{run_id}: island {island} init {init[island]} + deltas {delta.get(island, 0)}"
                f" = {expected}, but final is {final[island]}"
            )
    if flow != 0:
        report.violations.append(f"{run_id}: {flow} energy left in flight between islands")
    initial_total = sum(init.values())
    final_total = sum(final.values())
    if initial_total != final_total:
        report.violations.append(
            f"{run_id}: global total drifted from {initial_total} to {final_total}"
        )
    report.initial_total += initial_total
    report.final_total += final_total


# An outcome signature is the sorted tuple of agent entries: survivors as
# ("A", fitness rounded to 9 places, energy) and emigrants as
# ("E", fitness, energy, destination). Rounding absorbs summation-order
# noise between the oracle's arithmetic and the engine's.
Signature = tuple


def _survivor_entry(fitness: float, energy: int) -> tuple:
    return ("A", round(fitness, 9), energy)


def _emigrant_entry(fitness: float, energy: int, dest: int) -> tuple:
    return ("E", round(fitness, 9), energy, dest)


def outcome_signature(survivors: list[Agent], emigrants: list[tuple[Agent, int]]) -> Signature:
    entries = [_survivor_entry(a.fitness, a.energy) for a in survivors]
    entries.extend(_emigrant_entry(a.fitness, a.energy, dest) for a, dest in emigrants)
    return tuple(sorted(entries))


def _matchings(indices: list[int]):
    """All unordered pairings; odd groups yield every choice of unpaired leftover."""
    if len(indices) % 2 == 1:
        for i in indices:
            rest = [j for j in indices if j != i]
            for pairs in _pairings(rest):
                yield pairs, i
    else:
        for pairs in _pairings(indices):
            yield pairs, None


def _pairings(indices: list[int]):
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for k, partner in enumerate(rest):
        remaining = rest[:k] + rest[k + 1 :]
        for tail in _pairings(remaining):
            yield [(first, partner)] + tail


def _fight_variants(fighters: list[Agent], cfg: BehaviourConfig) -> set[tuple]:
    """Entry multisets reachable by pairing the fight group in any order.

    On a fitness tie either agent can lose (the engine's shuffle decides
    which one arrived second), so tied pairs branch both ways.
    """
    variants: set[tuple] = set()
    for pairs, leftover in _matchings(list(range(len(fighters)))):
        options_per_pair = []
        for i, j in pairs:
            a, b = fighters[i], fighters[j]
            if a.fitness == b.fitness:
                options_per_pair.append([(a, b), (b, a)])
            elif a.fitness < b.fitness:
                options_per_pair.append([(a, b)])
            else:
                options_per_pair.append([(b, a)])
        for chosen in product(*options_per_pair):
            entries = []
            for winner, loser in chosen:
                t = min(cfg.fight_transfer, loser.energy)
                entries.append(_survivor_entry(winner.fitness, winner.energy + t))
                entries.append(_survivor_entry(loser.fitness, loser.energy - t))
            if leftover is not None:
                lo = fighters[leftover]
                entries.append(_survivor_entry(lo.fitness, lo.energy))
            variants.add(tuple(sorted(entries)))
    return variants


def _child_fitness_options(a: Agent, b: Agent, problem: ProblemConfig) -> set[tuple[float, float]]:
    """Fitness pairs of the two children, over every crossover mask."""
    ga, gb = a.genotype, b.genotype
    if problem.recombination.value == "arithmetic_mean":
        mid = (ga + gb) / 2.0
        f = float(problem.objective(mid))
        return {(f, f)}
    options: set[tuple[float, float]] = set()
    n = len(ga)
    for mask_bits in product((False, True), repeat=n):
        mask = np.array(mask_bits)
        c1 = np.where(mask, ga, gb)
        c2 = np.where(mask, gb, ga)
        options.add((float(problem.objective(c1)), float(problem.objective(c2))))
    return options


def _repro_variants(breeders: list[Agent], cfg: BehaviourConfig, problem: ProblemConfig) -> set[tuple]:
    """Entry multisets reachable by the reproduction group, over all pairings and masks."""
    donation = cfg.child_energy
    variants: set[tuple] = set()
    for pairs, leftover in _matchings(list(range(len(breeders)))):
        options_per_pair = []
        for i, j in pairs:
            a, b = breeders[i], breeders[j]
            pair_options = []
            for f1, f2 in _child_fitness_options(a, b, problem):
                pair_options.append(
                    (
                        _survivor_entry(a.fitness, a.energy - donation),
                        _survivor_entry(b.fitness, b.energy - donation),
                        _survivor_entry(f1, cfg.child_energy),
                        _survivor_entry(f2, cfg.child_energy),
                    )
                )
            options_per_pair.append(pair_options)
        for chosen in product(*options_per_pair):
            entries = [entry for grp in chosen for entry in grp]
            if leftover is not None:
                p = breeders[leftover]
                child_fitness = float(problem.objective(p.genotype))
                entries.append(_survivor_entry(p.fitness, p.energy - donation))
                entries.append(_survivor_entry(child_fitness, cfg.child_energy))
            variants.add(tuple(sorted(entries)))
    return variants


def _migration_variants(movers: list[Agent], self_island: int, topology: Topology) -> set[tuple]:
    neighbors = topology.neighbors[self_island]
    if not movers:
        return {()}
    if not neighbors:
        return {tuple(sorted(_survivor_entry(a.fitness, a.energy) for a in movers))}
    variants: set[tuple] = set()
    for destinations in product(neighbors, repeat=len(movers)):
        entries = [
            _emigrant_entry(a.fitness, a.energy, dest) for a, dest in zip(movers, destinations)
        ]
        variants.add(tuple(sorted(entries)))
    return variants


def enumerate_meetings(
    population: list[Agent],
    self_island: int,
    cfg: BehaviourConfig,
    problem: ProblemConfig,
    topology: Topology,
) -> set[Signature]:
    """Every outcome signature one sweep over ``population`` can produce.

    Enumerates migration subsets, fight pairings (both orders on ties),
    reproduction pairings with every crossover mask, and migrant
    destinations. Requires mutation disabled so child fitness is a function
    of the mask alone. Every enumerated outcome is checked for exact energy
    conservation before it is admitted to the set.
    """
    if len(population) > 6:
        raise ConfigError(f"enumeration is exponential; population {len(population)} > 6")
    if problem.mutation_rate != 0.0:
        raise ConfigError("enumeration requires mutation_rate = 0 for deterministic children")

    total_in = sum(a.energy for a in population)
    alive = [a for a in population if a.energy > 0]
    if cfg.migration_probability == 0.0:
        subsets = [()]
    else:
        subsets = [
            combo for r in range(len(alive) + 1) for combo in combinations(range(len(alive)), r)
        ]

    outcomes: set[Signature] = set()
    for subset in subsets:
        movers = [alive[i] for i in subset]
        rest = [a for i, a in enumerate(alive) if i not in subset]
        breeders = [a for a in rest if a.energy > cfg.reproduction_threshold]
        fighters = [a for a in rest if a.energy <= cfg.reproduction_threshold]
        for fv in _fight_variants(fighters, cfg):
            for rv in _repro_variants(breeders, cfg, problem):
                for mv in _migration_variants(movers, self_island, topology):
                    signature = tuple(sorted(fv + rv + mv))
                    total_out = sum(entry[2] for entry in signature)
                    if total_out != total_in:
                        raise AssertionError(
                            f"oracle produced a non-conserving outcome: {total_in} -> {total_out}"
                        )
                    outcomes.add(signature)
    return outcomes
