"""Selective state-space scan: parameters, discretization, kernels, adjoints."""

from .backend import available_backends, get_backend, set_backend
from .params import (
    ScanActivations,
    SsmLayerParams,
    discretize,
    init_ssm_params,
    zeros_like_ssm,
)
from .reference import naive_unroll
from .scan import scan_backward, scan_forward, selectivity

__all__ = [
    "ScanActivations",
    "SsmLayerParams",
    "available_backends",
    "discretize",
    "get_backend",
    "init_ssm_params",
    "naive_unroll",
    "scan_backward",
    "scan_forward",
    "selectivity",
    "set_backend",
    "zeros_like_ssm",
]
