"""Exact solution paths for the clustered Lasso and OSCAR."""

from .core_model import Dataset, Model, PathConfig, objective_value, ridge_augment
from .errors import (
    ClustPathError,
    ConvergenceError,
    DegeneracyError,
    InputError,
    IterationCapError,
    NumericalError,
    RankDeficientError,
    StateCorruptionError,
)
from .path import Breakpoint, EventKind, EventRecord, PathTracker, SolutionPath, run_path, solution_at

__version__ = "0.1.0"
