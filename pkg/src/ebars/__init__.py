"""Bayesian free-knot spline regression by reversible-jump MCMC.

Exact normal evidence or an EBIC surrogate scores knot configurations;
a two-stage ISOMAP + spline pipeline denoises point clouds near a
low-dimensional manifold.
"""

from .dataset import Dataset
from .evidence import fit, log_posterior_ebic, log_posterior_exact
from .inference import predict, summarize
from .model_space import CandidateGrid, KnotState, make_uniform_grid
from .sampler import ChainConfig, ChainTrace, run
from .spline_basis import basis_at, build_knot_vector, design_matrix_1d, tensor_design_matrix
from .tsme import gmsd, isomap, tsme

__version__ = "0.1.0"

__all__ = [
    "CandidateGrid",
    "ChainConfig",
    "ChainTrace",
    "Dataset",
    "KnotState",
    "basis_at",
    "build_knot_vector",
    "design_matrix_1d",
    "fit",
    "gmsd",
    "isomap",
    "log_posterior_ebic",
    "log_posterior_exact",
    "make_uniform_grid",
    "predict",
    "run",
    "summarize",
    "tensor_design_matrix",
    "tsme",
]
