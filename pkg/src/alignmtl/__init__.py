"""Gradient alignment and aggregation for multi-task optimization."""

__version__ = "0.1.0"

from .aggregators import (
    AlignedMTL,
    AlignedMTLUB,
    AlignmentResult,
    CAGrad,
    GradientAggregator,
    IMTLG,
    MGDA,
    PCGrad,
    SharedRepGradients,
    UniformScalarization,
    ZeroGradient,
    align,
    align_ub,
    available_methods,
    cagrad,
    imtl_g,
    make_aggregator,
    mgda,
    pcgrad,
    uniform,
)
from .diagnostics import StabilityReport, gms, stability_report
from .linalg import Spectrum, condition_number, gram, sym_eigh
from .trajectory import Trajectory, TrajectoryRecord

__all__ = [
    "AlignedMTL",
    "AlignedMTLUB",
    "AlignmentResult",
    "CAGrad",
    "GradientAggregator",
    "IMTLG",
    "MGDA",
    "PCGrad",
    "SharedRepGradients",
    "Spectrum",
    "StabilityReport",
    "Trajectory",
    "TrajectoryRecord",
    "UniformScalarization",
    "ZeroGradient",
    "align",
    "align_ub",
    "available_methods",
    "cagrad",
    "condition_number",
    "gms",
    "gram",
    "imtl_g",
    "make_aggregator",
    "mgda",
    "pcgrad",
    "stability_report",
    "sym_eigh",
    "uniform",
    "__version__",
]
