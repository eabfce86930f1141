"""Problem-independent domain types, the Rastrigin benchmark and variation operators.

Agents carry a real-valued genotype, a fitness value cached at creation (genotypes
are immutable after birth, so the objective is evaluated exactly once per agent)
and an integer amount of life-energy. Energy being an integer makes conservation
an exact, assertable invariant rather than a floating-point approximation.

All stochastic operations take an explicit numpy Generator so that runs are
seedable and reproducible; callers that need independent streams derive them
with :func:`derive_rng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

RandomSource = np.random.Generator

Genotype = np.ndarray
"""A candidate solution: 1-D float vector of length ``dimension``."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class ConservationError(RuntimeError):
    """An exact invariant (energy conservation, death-at-zero) was violated."""


class Recombination(Enum):
    UNIFORM = "uniform_crossover"
    MEAN = "arithmetic_mean"


def derive_rng(seed: int, *key: int) -> RandomSource:
    """Derive an independent, reproducible generator from a master seed and a key.

    The master seed and key are hashed together by numpy's SeedSequence, so
    (seed, 0) and (seed, 1) yield statistically independent streams.
    """
    entropy = tuple(int(k) & 0xFFFFFFFFFFFFFFFF for k in (seed, *key))
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True, slots=True)
class Agent:
    """An individual: genotype, cached fitness and current life-energy."""

    genotype: Genotype
    fitness: float
    energy: int

    def with_energy(self, energy: int) -> "Agent":
        """Copy of this agent at a different energy level (genotype shared)."""
        if energy < 0:
            raise ValueError(f"energy can never go negative, got {energy}")
        return Agent(self.genotype, self.fitness, energy)


@dataclass
class ProblemConfig:
    """Benchmark problem and variation-operator settings.

    ``mutation_rate`` defaults to 1/dimension and ``mutation_sigma`` to one
    percent of the domain span, standard real-coded choices; both can be
    overridden. ``objective`` is the function to minimize and must be a
    module-level callable so configs can cross process boundaries.
    """

    dimension: int
    domain_min: float = -50.0
    domain_max: float = 50.0
    mutation_rate: float | None = None
    mutation_sigma: float | None = None
    recombination: Recombination = Recombination.UNIFORM
    objective: Callable[[Genotype], float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        if not self.domain_min < self.domain_max:
            raise ConfigError(
                f"domain_min must be < domain_max, got [{self.domain_min}, {self.domain_max}]"
            )
        if self.mutation_rate is None:
            self.mutation_rate = 1.0 / self.dimension
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError(f"mutation_rate must be in [0, 1], got {self.mutation_rate}")
        if self.mutation_sigma is None:
            self.mutation_sigma = (self.domain_max - self.domain_min) / 100.0
        if not self.mutation_sigma > 0:
            raise ConfigError(f"mutation_sigma must be > 0, got {self.mutation_sigma}")
        if not isinstance(self.recombination, Recombination):
            self.recombination = Recombination(self.recombination)
        if self.objective is None:
            self.objective = rastrigin


def rastrigin(g: Genotype) -> float:
    """Rastrigin objective, f(x) = 10 n + sum(x_i^2 - 10 cos(2 pi x_i)).

    Highly multimodal with a single global minimum f(0, ..., 0) = 0.
    """
    n = g.shape[0]
    return float(10.0 * n + np.sum(g * g - 10.0 * np.cos(2.0 * math.pi * g)))


def new_agent(genotype: Genotype, energy: int, cfg: ProblemConfig) -> Agent:
    """Create an agent, evaluating the objective exactly once."""
    genotype.flags.writeable = False
    return Agent(genotype, cfg.objective(genotype), energy)


def mutate(g: Genotype, cfg: ProblemConfig, rng: RandomSource) -> Genotype:
    """Per-component Gaussian perturbation, clamped to the domain box.

    Each component is perturbed independently with probability
    ``mutation_rate`` by a N(0, mutation_sigma) sample. Returns a new vector;
    the input is never modified.
    """
    n = g.shape[0]
    mask = rng.random(n) < cfg.mutation_rate
    out = np.where(mask, g + rng.normal(0.0, cfg.mutation_sigma, n), g)
    np.clip(out, cfg.domain_min, cfg.domain_max, out=out)
    return out


def recombine(
    a: Genotype, b: Genotype, cfg: ProblemConfig, rng: RandomSource
) -> tuple[Genotype, Genotype]:
    """Recombine two parent genotypes into two children.

    Uniform crossover gives child one each gene from a or b with probability
    one half and child two the complementary gene, so the per-position
    multiset of parent genes is preserved. Arithmetic mean gives both
    children the component-wise midpoint.
    """
    if a.shape != b.shape:
        raise ConfigError(f"parent genotype lengths differ: {a.shape} vs {b.shape}")
    if cfg.recombination is Recombination.MEAN:
        mid = (a + b) / 2.0
        return mid, mid.copy()
    mask = rng.random(a.shape[0]) < 0.5
    return np.where(mask, a, b), np.where(mask, b, a)


def initial_population(
    count: int, cfg: ProblemConfig, initial_energy: int, rng: RandomSource
) -> list[Agent]:
    """Agents sampled uniformly over the domain hypercube, all at initial_energy."""
    if count < 1:
        raise ConfigError(f"population count must be >= 1, got {count}")
    samples = rng.uniform(cfg.domain_min, cfg.domain_max, (count, cfg.dimension))
    return [new_agent(samples[i], initial_energy, cfg) for i in range(count)]
