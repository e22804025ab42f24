"""Tropical (max-plus) support vector machines for phylogenetic trees."""

from .classifier import TrainedModel, assign_point, evaluate, predict, train
from .coalescent import SimConfig, coalescent_gene_tree, generate_dataset, yule_species_tree
from .hard import (IndexAssignment, build_hard_lp, case_constants, classify_case, construct_omega,
                   enumerate_assignments, hard_feasible_and_margin)
from .lp import LinearProgram, LPOutcome, NumericalBreakdown, solve
from .phylo import (cophenetic, is_ultrametric, parse_newick, serialize_newick,
                    ultrametric_to_tree)
from .soft import (SoftMarginConfig, build_soft_lp_case, build_soft_lp_general, solve_soft,
                   verify_gamma_vanishing)
from .tropical import (dist_to_hyperplane, sector_membership, trop_add, trop_combine,
                       trop_distance, trop_mul, trop_segment)

__all__ = [
    "TrainedModel", "assign_point", "evaluate", "predict", "train",
    "SimConfig", "coalescent_gene_tree", "generate_dataset", "yule_species_tree",
    "IndexAssignment", "build_hard_lp", "case_constants", "classify_case", "construct_omega",
    "enumerate_assignments", "hard_feasible_and_margin",
    "LinearProgram", "LPOutcome", "NumericalBreakdown", "solve",
    "cophenetic", "is_ultrametric", "parse_newick", "serialize_newick", "ultrametric_to_tree",
    "SoftMarginConfig", "build_soft_lp_case", "build_soft_lp_general", "solve_soft",
    "verify_gamma_vanishing",
    "dist_to_hyperplane", "sector_membership", "trop_add", "trop_combine", "trop_distance",
    "trop_mul", "trop_segment",
]

__version__ = "0.1.0"
