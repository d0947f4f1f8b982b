"""Rectified-flow solvers, inversion/denoising loops, and the 2-D demo."""

from .demo2d import FlowDemo2D, Velocity2D, rf_train_step, sample_two_gaussians, time_features
from .solver import (
    FunctionField,
    LatentState,
    SolverProbe,
    SourcePath,
    StepController,
    TimeGrid,
    VelocityField,
    denoise,
    euler_step,
    interpolate,
    invert,
    rf_solver_step,
)

__all__ = [
    "FlowDemo2D",
    "FunctionField",
    "LatentState",
    "SolverProbe",
    "SourcePath",
    "StepController",
    "TimeGrid",
    "Velocity2D",
    "VelocityField",
    "denoise",
    "euler_step",
    "interpolate",
    "invert",
    "rf_solver_step",
    "rf_train_step",
    "sample_two_gaussians",
    "time_features",
]
