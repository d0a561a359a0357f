"""Exact nearest-neighbor search with LSH: confirmation sampling, hash-table
sequences, the LSH Forest trie, and the fully adaptive forest query."""

from .adaptive import (
    AdaptiveConfig,
    AdaptiveResult,
    ForestEnsemble,
    adaptive_nearest_neighbor,
    build_ensemble,
)
from .confirmation import (
    CsResult,
    CsState,
    DiscreteDistribution,
    confirmation_sampling,
    exact_output_distribution,
    expected_samples_bound,
    failure_bound,
)
from .core import (
    CostCounters,
    Dataset,
    FormatError,
    Metric,
    QueryOrder,
    RngSeed,
    derive_rng,
    distance,
)
from .families import (
    BitSampling,
    HashSpec,
    HashString,
    LshFamily,
    SignRandomProjection,
    concat_hash,
    make_family,
    pack_strings,
)
from .forest import (
    Forest,
    ForestTrie,
    LevelCursor,
    build_forest,
    expected_collisions,
    forest_from_bytes,
    forest_to_bytes,
    load_forest,
    save_forest,
)
from .oracle import (
    DistanceProfile,
    OptReport,
    static_level_choice,
    brute_force_nn,
    natural_algorithm,
    opt_report,
    profile,
    simulate_cs,
)
from .tables import NnResult, QueryStats, SequenceExhausted, TableSequence

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "AdaptiveResult",
    "BitSampling",
    "CostCounters",
    "CsResult",
    "CsState",
    "Dataset",
    "DiscreteDistribution",
    "DistanceProfile",
    "Forest",
    "FormatError",
    "ForestEnsemble",
    "ForestTrie",
    "HashSpec",
    "HashString",
    "LevelCursor",
    "LshFamily",
    "Metric",
    "NnResult",
    "OptReport",
    "QueryOrder",
    "QueryStats",
    "RngSeed",
    "SequenceExhausted",
    "SignRandomProjection",
    "TableSequence",
    "adaptive_nearest_neighbor",
    "static_level_choice",
    "brute_force_nn",
    "build_ensemble",
    "build_forest",
    "concat_hash",
    "confirmation_sampling",
    "derive_rng",
    "distance",
    "exact_output_distribution",
    "expected_collisions",
    "expected_samples_bound",
    "failure_bound",
    "forest_from_bytes",
    "forest_to_bytes",
    "load_forest",
    "make_family",
    "natural_algorithm",
    "opt_report",
    "pack_strings",
    "profile",
    "save_forest",
    "simulate_cs",
]
