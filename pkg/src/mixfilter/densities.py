"""Known component densities for the mixing-weight problems.

Three parametric forms are supported: Gaussian, uniform, and a tabulated
positive function on a bounded interval (piecewise-linear interpolation).
Each evaluates pointwise, knows a finite interval carrying essentially all
of its mass, and can be sampled.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate

from .errors import DomainError

LOG_FLOOR = 1e-300
# Gaussian integration ranges extend this many standard deviations.
GAUSSIAN_SPAN = 12.0


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd) and self.sd > 0.0):
            raise DomainError(f"Gaussian needs finite mean and sd > 0, got ({self.mean}, {self.sd})")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2.0 * math.pi)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def interval(self):
        return (self.mean - GAUSSIAN_SPAN * self.sd, self.mean + GAUSSIAN_SPAN * self.sd)

    def breakpoints(self):
        return (self.mean,)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise DomainError(f"Uniform needs finite lo < hi, got ({self.lo}, {self.hi})")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -math.log(self.hi - self.lo), -np.inf)

    def interval(self):
        return (self.lo, self.hi)

    def breakpoints(self):
        return (self.lo, self.hi)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear density through ``(knots[i], values[i])``, zero
    outside ``[knots[0], knots[-1]]``.

    The table must already be normalized: the construction check is an
    adaptive quadrature of the interpolant, required to equal one within
    ``1e-8``.
    """

    knots: tuple
    values: tuple
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise DomainError("tabulated density needs matching 1-d knots and values")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise DomainError("tabulated density must be finite")
        if np.any(np.diff(knots) <= 0.0):
            raise DomainError("tabulated knots must be strictly increasing")
        if np.any(values < 0.0):
            raise DomainError("tabulated density must be nonnegative")
        object.__setattr__(self, "knots", tuple(knots.tolist()))
        object.__setattr__(self, "values", tuple(values.tolist()))
        total, _ = integrate.quad(
            self.pdf, knots[0], knots[-1], points=knots[1:-1].tolist() or None,
            limit=max(50, 4 * knots.size), epsabs=1e-13, epsrel=1e-13,
        )
        if abs(total - 1.0) > 1e-8:
            raise DomainError(f"tabulated density integrates to {total!r}, not 1")
        widths = np.diff(knots)
        seg = 0.5 * widths * (values[:-1] + values[1:])
        object.__setattr__(self, "_cdf", np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum())

    def pdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values, left=0.0, right=0.0)

    def logpdf(self, x):
        p = self.pdf(x)
        with np.errstate(divide="ignore"):
            return np.log(p)

    def interval(self):
        return (self.knots[0], self.knots[-1])

    def breakpoints(self):
        return self.knots

    def sample(self, rng, size):
        u = rng.random(size)
        knots = np.asarray(self.knots)
        values = np.asarray(self.values)
        idx = np.clip(np.searchsorted(self._cdf, u, side="right") - 1, 0, knots.size - 2)
        x0, h = knots[idx], knots[idx + 1] - knots[idx]
        p0, p1 = values[idx], values[idx + 1]
        # Mass left to place inside the segment, in unnormalized units.
        total = float(np.sum(0.5 * np.diff(knots) * (values[:-1] + values[1:])))
        m = (u - self._cdf[idx]) * total
        slope = (p1 - p0) / h
        # Root of p0*t + slope*t^2/2 = m, rationalized so slope == 0 is safe.
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(p0 * p0 + 2.0 * slope * m, 0.0))
            t = 2.0 * m / (p0 + disc)
        return x0 + np.clip(np.nan_to_num(t), 0.0, h)

    def to_dict(self):
        return {"kind": "tabulated", "knots": list(self.knots), "values": list(self.values)}


def density_from_dict(spec):
    """Build a density from its JSON form, e.g. ``{"kind": "gaussian", "mean": 0, "sd": 1}``."""
    kind = spec.get("kind")
    if kind == "gaussian":
        return Gaussian(float(spec["mean"]), float(spec["sd"]))
    if kind == "uniform":
        return Uniform(float(spec["lo"]), float(spec["hi"]))
    if kind == "tabulated":
        return Tabulated(tuple(spec["knots"]), tuple(spec["values"]))
    raise DomainError(f"unsupported density form {kind!r}")


class KnownDensitySet:
    """J >= 2 known component densities evaluated together.

    ``log_evaluate(x)`` returns an array of shape ``x.shape + (J,)``.
    """

    def __init__(self, densities):
        densities = tuple(densities)
        if len(densities) < 2:
            raise DomainError("a known-density set needs at least two densities")
        self.densities = densities

    def __len__(self):
        return len(self.densities)

    def __repr__(self):
        return f"{type(self).__name__}({list(self.densities)!r})"

    def log_evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([d.logpdf(x) for d in self.densities], axis=-1)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([d.pdf(x) for d in self.densities], axis=-1)

    def interval(self):
        ends = [d.interval() for d in self.densities]
        return (min(lo for lo, _ in ends), max(hi for _, hi in ends))

    def breakpoints(self):
        pts = sorted({float(p) for d in self.densities for p in d.breakpoints()})
        return pts

    def to_dict(self):
        return {"densities": [d.to_dict() for d in self.densities]}


class KnownDensityPair(KnownDensitySet):
    """The two-component case: ``f(x | beta) = beta f1(x) + (1 - beta) f2(x)``."""

    def __init__(self, f1, f2):
        super().__init__((f1, f2))

    @property
    def f1(self):
        return self.densities[0]

    @property
    def f2(self):
        return self.densities[1]

    def mixture_pdf(self, x, beta):
        return beta * self.f1.pdf(x) + (1.0 - beta) * self.f2.pdf(x)
