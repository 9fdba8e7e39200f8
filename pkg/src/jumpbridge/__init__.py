"""Jump-diffusion Schrödinger-bridge generator for time series."""

from __future__ import annotations

from .core import (
    Dataset,
    KernelConfig,
    NormRecord,
    ReferenceParams,
    RngSpec,
    TimeGrid,
    denormalize,
    load_csv,
    load_dataset,
    normalize,
    save_dataset,
)
from .errors import (
    DataError,
    DomainError,
    EstimationError,
    JumpBridgeError,
    NumericalError,
    ParseError,
    UnsupportedOperationError,
    UsageError,
)
from .simulate import SimConfig, SyntheticSeries, simulate, to_dataset

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "DomainError",
    "EstimationError",
    "JumpBridgeError",
    "KernelConfig",
    "NormRecord",
    "NumericalError",
    "ParseError",
    "ReferenceParams",
    "RngSpec",
    "SimConfig",
    "SyntheticSeries",
    "TimeGrid",
    "UnsupportedOperationError",
    "UsageError",
    "denormalize",
    "load_csv",
    "load_dataset",
    "normalize",
    "save_dataset",
    "simulate",
    "to_dataset",
]
