"""Multiresolution, heterogeneous calibration of high-dimensional simulation models."""

from mrcalib.params import (
    Discrete,
    Full,
    ParameterSpace,
    ParameterSpec,
    Scale,
    SearchRange,
    Shrunk,
)
from mrcalib.plan import RunConfig, RunPlan, default_plan, traditional_plan

__all__ = [
    "Discrete",
    "Full",
    "ParameterSpace",
    "ParameterSpec",
    "RunConfig",
    "RunPlan",
    "Scale",
    "SearchRange",
    "Shrunk",
    "default_plan",
    "traditional_plan",
]

__version__ = "0.1.0"
