"""Quickest change detection with on-off observation control."""

from .observation_model import GaussianMeanShiftModel, GeometricPrior, Scenario
from .posterior import BeliefState, ThresholdPair
from .policy import FractionalSampling, Shiryaev, TabulatedDP, TwoThreshold
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BeliefState",
    "FractionalSampling",
    "GaussianMeanShiftModel",
    "GeometricPrior",
    "Scenario",
    "Shiryaev",
    "TabulatedDP",
    "ThresholdPair",
    "TwoThreshold",
]
