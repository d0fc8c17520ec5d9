"""Numerical lab for the vector Witsenhausen problem with causal controllers and channel feedback."""

__version__ = "0.1.0"

from .affine import AffinePolicy, affine_costs, gaussian_frontier_sample, timeshare_affine
from .binary_example import BinaryDesign, verify_infeasibility_report
from .designs import (CausalDesign, FeedbackNoncausalDesign, assemble_joint_causal,
                      assemble_joint_feedback, load_design, dump_design)
from .measures import (JointPmf, conditional_mutual_information, entropy, info_constraint_value,
                       mutual_information)
from .model import CostPair, DiscreteModel, Grid, ModelParams, cost_pair_from_joint
from .simulator import (Scenario, StationaryPolicy, feedback_containment_check, run_block,
                        verify_achievability)
from .solver import Frontier, SolverSettings, pareto_frontier_causal, solve_noncausal_feedback

__all__ = [
    "AffinePolicy", "BinaryDesign", "CausalDesign", "CostPair", "DiscreteModel",
    "FeedbackNoncausalDesign", "Frontier", "Grid", "JointPmf", "ModelParams", "Scenario",
    "SolverSettings", "StationaryPolicy", "affine_costs", "assemble_joint_causal",
    "assemble_joint_feedback", "conditional_mutual_information", "cost_pair_from_joint",
    "dump_design", "entropy", "feedback_containment_check", "gaussian_frontier_sample",
    "info_constraint_value", "load_design", "mutual_information", "pareto_frontier_causal",
    "run_block", "solve_noncausal_feedback", "timeshare_affine", "verify_achievability",
    "verify_infeasibility_report",
]
