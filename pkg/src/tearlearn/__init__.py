"""Causal structure learning with an acyclicity penalty and an exact tear post-processor."""

__version__ = "0.1.0"

from .acyclicity import AcyclicityMode, grad_h_exp, grad_h_poly, h_exp, h_poly
from .datagen import GroundTruth, prior_lower_triangular, random_triangular_w, sample_nonlinear
from .daggnn import GnnArch, train_daggnn
from .graph import enumerate_simple_cycles, is_acyclic, nonzero_streams
from .linear import TrainConfig, TrainResult, train_linear
from .metrics import bge_score, edge_confusion, gaussian_bic, score_report
from .milp import InfeasibleTearError, PriorSpec, solve_tear
from .postprocess import TearConfig, TearReport, preprocess, tear_until_acyclic, truncate_until_acyclic

__all__ = [
    "AcyclicityMode",
    "GnnArch",
    "GroundTruth",
    "InfeasibleTearError",
    "PriorSpec",
    "TearConfig",
    "TearReport",
    "TrainConfig",
    "TrainResult",
    "bge_score",
    "edge_confusion",
    "enumerate_simple_cycles",
    "gaussian_bic",
    "grad_h_exp",
    "grad_h_poly",
    "h_exp",
    "h_poly",
    "is_acyclic",
    "nonzero_streams",
    "preprocess",
    "prior_lower_triangular",
    "random_triangular_w",
    "sample_nonlinear",
    "score_report",
    "solve_tear",
    "tear_until_acyclic",
    "train_daggnn",
    "train_linear",
    "truncate_until_acyclic",
]
