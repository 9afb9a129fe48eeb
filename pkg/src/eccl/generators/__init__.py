"""Map generation: constraint scoring, rejection sampling, and evolution."""

from .constraints import (all_factors, center_of, center_radius,
                          constrained_fitness, factor_home_blocks,
                          factor_home_center, factor_home_paths,
                          factor_separate_quads, is_feasible)
from .constructive import GenConfig, GenerationError, generate, propose
from .evolution import (Chromosome, EvoConfig, EvolveResult, GenerationStats,
                        crossover, evolve, feasible_fitness, mutate,
                        random_grid)

__all__ = [
    "all_factors",
    "center_of",
    "center_radius",
    "constrained_fitness",
    "factor_home_blocks",
    "factor_home_center",
    "factor_home_paths",
    "factor_separate_quads",
    "is_feasible",
    "GenConfig",
    "GenerationError",
    "generate",
    "propose",
    "Chromosome",
    "EvoConfig",
    "EvolveResult",
    "GenerationStats",
    "crossover",
    "evolve",
    "feasible_fitness",
    "mutate",
    "random_grid",
]
