"""Recursive moment-matching and KL filters for mixture models, with
enumeration and quadrature oracles."""

from .densities import Gaussian, KnownDensityPair, KnownDensitySet, Tabulated, Uniform
from .errors import (
    ConvergenceError,
    DegenerateObservationError,
    DomainError,
    InvalidLabelError,
    MassError,
    MixFilterError,
    ModelShapeError,
    QuadratureError,
    ZeroInformationError,
)
from .gaussian_mean import MeanMixtureModel, clutter_model, symmetric_model
from .oracle import PosteriorSummary, QuadratureSpec
from .special import SolverSettings
from .states import BetaState, CountedGaussianState, DirichletState, GaussianState

__version__ = "0.1.0"
