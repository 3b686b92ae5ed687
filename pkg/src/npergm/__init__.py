"""Non-parametric exponential random graph models fitted on subsamples.

The dyads of a network are split into the rounds of a 1-factorization
of the complete graph. Within one round the edges are conditionally
independent under a Markov graph model, so every round gives an
ordinary (parametric or penalized spline) logistic regression. The
per-round estimates are then combined into mean and depth-median
summaries.
"""

import os as _os

# pick a threading layer without probing the (optional) TBB runtime
_os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"

from .basis import ExpBasis, build_basis, constraint_matrix  # noqa: E402
from .combine import (  # noqa: E402
    CurveFamily,
    MedianModel,
    evaluate_curve_family,
    mean_curve,
    modified_band_depth,
    select_median,
)
from .design import OneFactorization, Subsample, extract_subsample, one_factorization, validate_factorization  # noqa: E402
from .diagnose import GibbsTrace, ResidualReport, gibbs_simulate, pearson_node_residuals, predict_edge_prob  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .glm import GlmFit, aggregate_estimates, fit_logistic, fit_parametric_all  # noqa: E402
from .graph import UndirectedGraph, change_statistics, count_statistics, load_edge_list, read_edge_list  # noqa: E402
from .npfit import FitConfig, NpModel, determine_directions, fit_np_all, fit_np_sample, penalized_objective, schall_update  # noqa: E402
from .qp import QpProblem, QpSolution, solve_qp  # noqa: E402
