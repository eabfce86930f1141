"""Run-level configuration shared by the three engines.

A :class:`RunConfig` fully determines one run: problem, behaviour
constants, island layout, budget (step count or wall-clock duration), and
engine knobs. Its :meth:`RunConfig.snapshot` is the flat string mapping
echoed into trace CSV headers, chosen so a trace file alone suffices to
reproduce the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .arenas import BehaviourConfig, Topology
from .core import ConfigError, ProblemConfig


class ExecutionModel(Enum):
    SEQUENTIAL = "sequential"
    HYBRID = "hybrid"
    CONCURRENT = "concurrent"


TOPOLOGY_KINDS = ("fully_connected", "ring")


@dataclass
class RunConfig:
    problem: ProblemConfig
    behaviour: BehaviourConfig = field(default_factory=BehaviourConfig)
    islands: int = 4
    population_per_island: int = 30
    topology_kind: str = "fully_connected"
    seed: int = 0
    steps: int | None = None  # step budget; uses a virtual clock (1 step = 1 ms)
    duration_ms: int | None = None  # wall-clock budget on a monotonic clock
    execution_units: int = 1  # parallelism cap, meaningful for the hybrid engine
    flush_timeout_ms: float = 10.0  # concurrent arenas' straggler flush
    count_interval_ms: int = 250
    heartbeat_ms: int = 1000
    ledger: bool = False
    run_id: str = "run-00"

    def __post_init__(self) -> None:
        if self.islands < 1:
            raise ConfigError(f"islands must be >= 1, got {self.islands}")
        if self.population_per_island < 1:
            raise ConfigError(f"population_per_island must be >= 1, got {self.population_per_island}")
        if self.topology_kind not in TOPOLOGY_KINDS:
            raise ConfigError(f"topology must be one of {TOPOLOGY_KINDS}, got {self.topology_kind!r}")
        if (self.steps is None) == (self.duration_ms is None):
            raise ConfigError("exactly one of steps and duration_ms must be set")
        if self.steps is not None and self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.duration_ms is not None and self.duration_ms < 1:
            raise ConfigError(f"duration_ms must be >= 1, got {self.duration_ms}")
        if self.execution_units < 1:
            raise ConfigError(f"execution_units must be >= 1, got {self.execution_units}")
        if self.flush_timeout_ms <= 0:
            raise ConfigError(f"flush_timeout_ms must be > 0, got {self.flush_timeout_ms}")
        if self.count_interval_ms < 0:
            raise ConfigError(f"count_interval_ms must be >= 0, got {self.count_interval_ms}")
        if self.heartbeat_ms < 1:
            raise ConfigError(f"heartbeat_ms must be >= 1, got {self.heartbeat_ms}")

    def topology(self) -> Topology:
        if self.topology_kind == "ring":
            return Topology.ring(self.islands)
        return Topology.fully_connected(self.islands)

    def snapshot(self, model: str) -> dict[str, str]:
        """Flat provenance mapping for the trace CSV header."""
        p, b = self.problem, self.behaviour
        entries: dict[str, str] = {
            "run_id": self.run_id,
            "model": model,
            "seed": str(self.seed),
            "dimension": str(p.dimension),
            "domain_min": repr(p.domain_min),
            "domain_max": repr(p.domain_max),
            "mutation_rate": repr(p.mutation_rate),
            "mutation_sigma": repr(p.mutation_sigma),
            "recombination": p.recombination.value,
            "islands": str(self.islands),
            "population": str(self.population_per_island),
            "topology": self.topology_kind,
            "initial_energy": str(b.initial_energy),
            "reproduction_threshold": str(b.reproduction_threshold),
            "fight_transfer": str(b.fight_transfer),
            "child_energy": str(b.child_energy),
            "migration_prob": repr(b.migration_probability),
            "units": str(self.execution_units),
            "flush_timeout_ms": repr(self.flush_timeout_ms),
            "count_interval_ms": str(self.count_interval_ms),
            "heartbeat_ms": str(self.heartbeat_ms),
            "ledger": str(self.ledger).lower(),
        }
        if self.steps is not None:
            entries["steps"] = str(self.steps)
        if self.duration_ms is not None:
            entries["duration_ms"] = str(self.duration_ms)
        return entries
