"""Nash Social Welfare relaxations, contention-resolution rounding, and
desk-scale verification for matroid-rank, coverage, and matching valuations."""

from .errors import InputError, UnsupportedSizeError
from .matroids import (
    ExplicitMatroid,
    GraphicMatroid,
    PartitionMatroid,
    UniformMatroid,
    is_independent,
    polytope_check,
    rank,
    weighted_rank,
)
from .valuations import (
    BipartiteMatchingMatroid,
    Coverage,
    KPartiteMatching,
    SumOfWeightedRanks,
    WeightedMatroidRank,
    check_monotone_submodular,
    coverage_to_rank_sum,
    evaluate,
)
from .instances import Instance, generate, instance_digest, parse_instance, serialize_instance
from .relaxation import (
    DualPoint,
    FractionalSolution,
    ProgramSpec,
    build_program,
    dual_separation,
    feasible,
    induced_solution,
    log_objective,
)
from .saddle import InnerResult, SolveConfig, SolveResult, inner_inf, primal_supergradient, solve
from .contention import CrsSpec, check_monotone, estimate_marginal, resolve
from .rounding import Allocation, RoundingTrace, coupled_round, round0, round1, round2, round3, round4
from .analysis import (
    MCEstimate,
    brute_force_opt,
    count_constrained_mappings,
    distinct_tuple_sum,
    expected_product_coverage,
    gurvits_check,
    mc_expected_product,
    nsw_value,
)
from .pipeline import RunReport, run_pipeline

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
