"""Evolutionary multi-agent optimization with energy-based selection.

Agents carry immutable genotypes and an integer life energy exchanged in
peer-to-peer meetings; selection emerges from the energy flow instead of a
central operator. The same model runs under three execution engines
(sequential, hybrid islands, fully concurrent) that share configuration,
metrics, and conservation oracles.
"""

from .arenas import ArenaKind, BehaviourConfig, MeetingResult, StepOutcome, Topology, behaviour, partition_and_meet
from .config import ExecutionModel, RunConfig
from .core import (
    Agent,
    ConfigError,
    ConservationError,
    ProblemConfig,
    Recombination,
    derive_rng,
    initial_population,
    mutate,
    new_agent,
    rastrigin,
    recombine,
)
from .metrics import (
    BufferSink,
    ExperimentSummary,
    MetricEvent,
    Recorder,
    RunTrace,
    aggregate,
    fitness_vs_reproductions,
    read_events_csv,
    reproductions_to_target,
    split_traces,
    write_events_csv,
    write_summary_csv,
)
from .oracles import LedgerReport, enumerate_meetings, outcome_signature, replay_ledger, scalar_rastrigin

__version__ = "1.0.0"

__all__ = [
    "Agent",
    "ArenaKind",
    "BehaviourConfig",
    "BufferSink",
    "ConfigError",
    "ConservationError",
    "ExecutionModel",
    "ExperimentSummary",
    "LedgerReport",
    "MeetingResult",
    "MetricEvent",
    "ProblemConfig",
    "Recombination",
    "Recorder",
    "RunConfig",
    "RunTrace",
    "StepOutcome",
    "Topology",
    "aggregate",
    "behaviour",
    "derive_rng",
    "enumerate_meetings",
    "fitness_vs_reproductions",
    "initial_population",
    "mutate",
    "new_agent",
    "outcome_signature",
    "partition_and_meet",
    "rastrigin",
    "read_events_csv",
    "recombine",
    "replay_ledger",
    "reproductions_to_target",
    "scalar_rastrigin",
    "split_traces",
    "write_events_csv",
    "write_summary_csv",
]
