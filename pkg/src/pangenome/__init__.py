"""Infinitely-many-genes model with horizontal gene transfer.

Forward finite-population simulation (:mod:`pangenome.moran`), backward
gene-graph sampling (:mod:`pangenome.agtg`) and closed-form moments
(:mod:`pangenome.analytics`), each usable as an oracle for the others.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    InsufficientData,
    NonConvergence,
    NotConverged,
    RangeError,
    ResourceLimit,
    SingularSystem,
)
from .params import ModelParams, RngSpec, validate  # noqa: E402

__all__ = [
    "InsufficientData",
    "ModelParams",
    "NonConvergence",
    "NotConverged",
    "RangeError",
    "ResourceLimit",
    "RngSpec",
    "SingularSystem",
    "validate",
]
