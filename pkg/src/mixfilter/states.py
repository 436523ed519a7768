"""Hyperparameter states carried from one observation to the next."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GaussianState:
    """``N(a, b)`` approximation for an unknown mean: ``a`` is the mean and
    ``b`` the variance."""

    a: float
    b: float

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise DomainError(f"GaussianState mean must be finite, got {self.a!r}")
        if not (math.isfinite(self.b) and self.b > 0.0):
            raise DomainError(f"GaussianState variance must be finite and > 0, got {self.b!r}")

    @property
    def precision(self):
        return 1.0 / self.b


@dataclass(frozen=True)
class CountedGaussianState:
    """A :class:`GaussianState` together with the number of updates applied."""

    state: GaussianState
    n: int = 0

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise DomainError("update count must be a non-negative integer")


@dataclass(frozen=True)
class BetaState:
    """``Beta(a, b)`` approximation for a mixing weight.

    The derived quantities follow the usual notation for the recursions:
    ``mean`` is E_n, ``second_moment`` S_n, ``variance`` V_n and ``mass``
    L_n = a + b.
    """

    a: float
    b: float

    def __post_init__(self):
        for name, value in (("a", self.a), ("b", self.b)):
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"BetaState.{name} must be finite and > 0, got {value!r}")

    @property
    def mass(self):
        return self.a + self.b

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def second_moment(self):
        total = self.a + self.b
        return self.a * (self.a + 1.0) / (total * (total + 1.0))

    @property
    def variance(self):
        e = self.mean
        return e * (1.0 - e) / (self.mass + 1.0)

    def as_tuple(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class DirichletState:
    """``Dir(a_1, ..., a_J)`` approximation for J mixing weights."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(v) for v in self.alpha)
        if len(alpha) < 2:
            raise DomainError("DirichletState needs at least two cells")
        if not all(math.isfinite(v) and v > 0.0 for v in alpha):
            raise DomainError(f"Dirichlet hyperparameters must be finite and > 0, got {alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def mass(self):
        return math.fsum(self.alpha)

    @property
    def means(self):
        return np.asarray(self.alpha) / self.mass

    @property
    def variances(self):
        e = self.means
        return e * (1.0 - e) / (self.mass + 1.0)

    def covariance(self):
        e = self.means
        return (np.diag(e) - np.outer(e, e)) / (self.mass + 1.0)

    def __len__(self):
        return len(self.alpha)
