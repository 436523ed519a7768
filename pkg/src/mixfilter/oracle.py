"""Reference values that the recursive filters are checked against.

Nothing here is recursive or approximate in the filtering sense: posteriors
come from full enumeration of the component labels or from adaptive
quadrature over the parameter, and the information integrals from adaptive
quadrature over the observation space.

Integration over an unbounded density runs between 12 standard deviations
below the lowest and above the highest component mean; the mass of the
mixture inside that interval is verified before any integral is trusted.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import integrate
from scipy.special import betaln, logsumexp, xlogy

from .errors import DomainError, QuadratureError
from . import gaussian_mean

# Densities are floored here before taking logs; only used in the grid KL.
DENSITY_FLOOR = 1e-300
ENUMERATION_LIMIT = 15


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration settings.

    ``scheme`` is ``"adaptive"`` (QUADPACK, the default) or
    ``"gauss-legendre"`` (composite rule with ``subdivisions`` panels of
    ``nodes`` points).  ``lo``/``hi`` override the automatic interval.
    """

    lo: float = None
    hi: float = None
    epsabs: float = 0.0
    epsrel: float = 1e-12
    limit: int = 500
    scheme: str = "adaptive"
    subdivisions: int = 200
    nodes: int = 20

    def __post_init__(self):
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise DomainError("quadrature interval needs lo < hi")
        if not (self.epsrel > 0.0 or self.epsabs > 0.0):
            raise DomainError("quadrature tolerance must be > 0")
        if self.scheme not in ("adaptive", "gauss-legendre"):
            raise DomainError(f"unknown quadrature scheme {self.scheme!r}")

    def interval(self, default):
        lo = default[0] if self.lo is None else self.lo
        hi = default[1] if self.hi is None else self.hi
        return lo, hi


_DEFAULT_QUAD = QuadratureSpec()


def integrate_1d(func, lo, hi, breakpoints=(), quad=None):
    """Integrate ``func`` over ``[lo, hi]``, splitting at ``breakpoints``.

    Returns ``(value, error_estimate)``.
    """
    quad = quad or _DEFAULT_QUAD
    cuts = [lo] + sorted(p for p in set(breakpoints) if lo < p < hi) + [hi]
    total, error = 0.0, 0.0
    if quad.scheme == "gauss-legendre":
        nodes, weights = np.polynomial.legendre.leggauss(quad.nodes)
        edges = np.unique(np.concatenate(
            [np.linspace(u, v, quad.subdivisions + 1) for u, v in zip(cuts[:-1], cuts[1:])]
        ))
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        pts = mid[:, None] + half[:, None] * nodes
        vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
        fine = np.sum(half[:, None] * weights * vals)
        # Error estimate: compare with the rule on half the nodes.
        coarse_nodes, coarse_weights = np.polynomial.legendre.leggauss(max(2, quad.nodes // 2))
        cpts = mid[:, None] + half[:, None] * coarse_nodes
        cvals = np.asarray(func(cpts.ravel()), dtype=float).reshape(cpts.shape)
        coarse = np.sum(half[:, None] * coarse_weights * cvals)
        return float(fine), float(abs(fine - coarse))
    for u, v in zip(cuts[:-1], cuts[1:]):
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(
                func, u, v, epsabs=quad.epsabs, epsrel=quad.epsrel, limit=quad.limit,
            )
        if not math.isfinite(val):
            raise QuadratureError(f"non-finite integral on [{u}, {v}]")
        total += val
        error += err
    return total, error


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    variance: float
    log_normalizer: float
    method: str

    def as_dict(self):
        return {
            "mean": self.mean,
            "variance": self.variance,
            "log_normalizer": self.log_normalizer,
            "method": self.method,
        }


@dataclass(frozen=True)
class BetaMixture:
    """Exact posterior ``sum_z weights[z] Be(a[z], b[z])`` over label vectors."""

    weights: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def moments(self):
        total = self.a + self.b
        means = self.a / total
        variances = self.a * self.b / (total * total * (total + 1.0))
        mean = float(np.sum(self.weights * means))
        var = float(np.sum(self.weights * (variances + (means - mean) ** 2)))
        return mean, var


def exact_beta_posterior(pair, prior, data, limit=ENUMERATION_LIMIT):
    """Exact posterior of the weight by enumerating all ``2^n`` label vectors.

    Each label vector ``z`` contributes ``Be(a0 + n1(z), b0 + n2(z))`` with
    weight proportional to ``prod_i f_{z_i}(x_i) B(a0 + n1, b0 + n2) / B(a0, b0)``.

    Returns
    -------
    (PosteriorSummary, BetaMixture)
        ``log_normalizer`` is the log marginal likelihood of the data.

    Raises
    ------
    DomainError
        If ``len(data) > limit``.
    """
    data = np.asarray(data, dtype=float).ravel()
    n = data.size
    if n > limit:
        raise DomainError(f"enumeration over 2^{n} label vectors exceeds the limit of n={limit}")
    logs = pair.log_evaluate(data)
    codes = np.arange(2**n, dtype=np.int64)
    first = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    n1 = first.sum(axis=1)
    a = prior.a + n1
    b = prior.b + (n - n1)
    log_lik = np.where(first, logs[None, :, 0], logs[None, :, 1]).sum(axis=1)
    log_w = log_lik + betaln(a, b) - betaln(prior.a, prior.b)
    log_z = logsumexp(log_w)
    weights = np.exp(log_w - log_z)
    mixture = BetaMixture(weights, a.astype(float), b.astype(float))
    mean, var = mixture.moments()
    return PosteriorSummary(mean, var, float(log_z), "enumeration"), mixture


def _beta_log_likelihood(logs, beta):
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore"):
        lb, lc = np.log(beta)[..., None], np.log1p(-beta)[..., None]
    return np.logaddexp(lb + logs[:, 0], lc + logs[:, 1]).sum(axis=-1)


def _summarize_on_line(log_post, lo, hi, grid, quad, floor_log_norm):
    """Normalize ``exp(log_post)`` on ``[lo, hi]`` by quadrature, using
    ``grid`` to locate the mass.  Returns mean, variance, log normalizer."""
    vals = log_post(grid)
    top = float(np.max(vals))
    probs = np.exp(vals - top)
    probs /= probs.sum()
    centre = float(np.sum(grid * probs))
    spread = math.sqrt(max(float(np.sum((grid - centre) ** 2 * probs)), 0.0))
    mode = float(grid[np.argmax(vals)])
    step = float(grid[1] - grid[0])
    scale = max(spread, step)
    points = {mode, centre}
    for k in (1, 2, 4, 8, 16, 32):
        points.update((mode - k * scale, mode + k * scale))

    def density(t):
        return np.exp(log_post(t) - top)

    mass, _ = integrate_1d(density, lo, hi, points, quad)
    if not mass > 0.0:
        raise QuadratureError("posterior mass vanished under quadrature")
    first, _ = integrate_1d(lambda t: t * density(t), lo, hi, points, quad)
    mean = first / mass
    second, _ = integrate_1d(lambda t: (t - mean) ** 2 * density(t), lo, hi, points, quad)
    return mean, second / mass, float(top + math.log(mass) - floor_log_norm)


def grid_beta_posterior(pair, prior, data, quad=None):
    """Posterior mean and variance of the weight by quadrature over (0, 1).

    The unnormalized log posterior is evaluated exactly (sum of
    ``log(beta f1(x_i) + (1-beta) f2(x_i))`` plus the log prior); a grid
    pass locates the mass and adaptive quadrature does the integration.
    """
    data = np.asarray(data, dtype=float).ravel()
    logs = pair.log_evaluate(data) if data.size else np.zeros((0, 2))

    def log_post(beta):
        beta = np.asarray(beta, dtype=float)
        out = xlogy(prior.a - 1.0, beta) + xlogy(prior.b - 1.0, 1.0 - beta)
        if data.size:
            flat = beta.ravel()
            chunks = [
                _beta_log_likelihood(logs, flat[i:i + 256]) for i in range(0, flat.size, 256)
            ]
            out = out + np.concatenate(chunks).reshape(beta.shape)
        return out

    grid = np.linspace(0.0, 1.0, 4097)[1:-1]
    mean, var, log_norm = _summarize_on_line(log_post, 0.0, 1.0, grid, quad, betaln(prior.a, prior.b))
    return PosteriorSummary(mean, var, log_norm, "grid")


def grid_mu_posterior(model, prior, data, quad=None):
    """Posterior mean and variance of the mixture mean by quadrature.

    The interval starts at the prior mean plus or minus 10 prior standard
    deviations and is doubled on whichever side still carries
    non-negligible density (endpoint density above ``1e-16`` of the peak).
    """
    data = np.asarray(data, dtype=float).ravel()
    sd = math.sqrt(prior.b)

    def log_post(mu):
        mu = np.asarray(mu, dtype=float)
        out = -0.5 * (mu - prior.a) ** 2 / prior.b - 0.5 * math.log(2.0 * math.pi * prior.b)
        if data.size:
            out = out + np.sum(gaussian_mean.log_density(model, mu[..., None], data), axis=-1)
        return out

    lo, hi = prior.a - 10.0 * sd, prior.a + 10.0 * sd
    cutoff = math.log(1e-16)
    for _ in range(64):
        grid = np.linspace(lo, hi, 4001)
        vals = log_post(grid)
        top = np.max(vals)
        width = hi - lo
        grow_lo, grow_hi = vals[0] - top > cutoff, vals[-1] - top > cutoff
        if not (grow_lo or grow_hi):
            break
        lo -= width if grow_lo else 0.0
        hi += width if grow_hi else 0.0
    else:
        raise QuadratureError("could not bracket the posterior of mu")
    if quad is not None and (quad.lo is not None or quad.hi is not None):
        lo, hi = quad.interval((lo, hi))
        grid = np.linspace(lo, hi, 4001)
    mean, var, log_norm = _summarize_on_line(log_post, lo, hi, grid, quad, 0.0)
    return PosteriorSummary(mean, var, log_norm, "grid")


def _pair_interval(pair, quad):
    lo, hi = (quad or _DEFAULT_QUAD).interval(pair.interval())
    return lo, hi, pair.breakpoints()


def check_tail_mass(pair, quad=None, tolerance=1e-10):
    """Verify every density puts all but ``tolerance`` of its mass on the
    integration interval."""
    lo, hi, points = _pair_interval(pair, quad)
    for d in pair.densities:
        mass, _ = integrate_1d(d.pdf, lo, hi, points, quad)
        if abs(mass - 1.0) > tolerance:
            raise QuadratureError(f"{d!r} has mass {mass!r} on [{lo}, {hi}]")


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta!r}")


def fisher_information_beta(pair, beta, quad=None, return_error=False):
    """Per-observation Fisher information for the weight,
    ``I(beta) = int (f1 - f2)^2 / (beta f1 + (1 - beta) f2) dx``."""
    _check_beta(beta)
    check_tail_mass(pair, quad)
    lo, hi, points = _pair_interval(pair, quad)

    def integrand(x):
        f = pair.evaluate(x)
        mix = beta * f[..., 0] + (1.0 - beta) * f[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(mix > 0.0, (f[..., 0] - f[..., 1]) ** 2 / mix, 0.0)

    value, err = integrate_1d(integrand, lo, hi, points, quad)
    return (value, err) if return_error else value


def overlap_integral(pair, beta, quad=None, return_error=False):
    """``int f1 f2 / (beta f1 + (1 - beta) f2) dx``."""
    _check_beta(beta)
    check_tail_mass(pair, quad)
    lo, hi, points = _pair_interval(pair, quad)

    def integrand(x):
        f = pair.evaluate(x)
        mix = beta * f[..., 0] + (1.0 - beta) * f[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(mix > 0.0, f[..., 0] * f[..., 1] / mix, 0.0)

    value, err = integrate_1d(integrand, lo, hi, points, quad)
    return (value, err) if return_error else value


def pe_information_beta(pair, beta, quad=None, return_error=False):
    """Information implied by the expected PE mass increment,
    ``{1 - int f1 f2 / f} / (beta (1 - beta))``."""
    overlap, err = overlap_integral(pair, beta, quad, return_error=True)
    scale = beta * (1.0 - beta)
    value = (1.0 - overlap) / scale
    return (value, err / scale) if return_error else value


def lemma_sides(pair, beta, quad=None):
    """Both sides of the identity ``{1 - int f1 f2/f} / (beta(1-beta)) = int (f1-f2)^2/f``."""
    return pe_information_beta(pair, beta, quad), fisher_information_beta(pair, beta, quad)


def fisher_information_mu(model, mu, quad=None, return_error=False):
    """Expected observed information for the mixture mean at ``mu``,
    ``E_x[-d^2/dmu^2 log f(x | mu)]`` by quadrature over ``x``."""
    c, sigma = np.asarray(model.c), np.asarray(model.sigma)
    centres = c * mu
    default = (float(np.min(centres - 12.0 * sigma)), float(np.max(centres + 12.0 * sigma)))
    lo, hi = (quad or _DEFAULT_QUAD).interval(default)

    def integrand(x):
        return np.exp(gaussian_mean.log_density(model, mu, x)) * gaussian_mean.observed_information(model, mu, x)

    value, err = integrate_1d(integrand, lo, hi, centres.tolist(), quad)
    return (value, err) if return_error else value


def complete_information_mu(model):
    """Complete-data information ``sum_j v_j c_j^2 / sigma_j^2``."""
    return float(np.sum(np.asarray(model.v) * model.R**2))


@dataclass(frozen=True)
class Divergence:
    mean_gap: float
    variance_ratio: float
    kl: float = None

    def as_dict(self):
        return {"mean_gap": self.mean_gap, "variance_ratio": self.variance_ratio, "kl": self.kl}


def _grid_moments(grid, dens):
    mass = np.trapezoid(dens, grid)
    p = dens / mass
    mean = np.trapezoid(grid * p, grid)
    var = np.trapezoid((grid - mean) ** 2 * p, grid)
    return p, mean, var


def divergence(first, second, grid=None):
    """Compare two posteriors.

    Either two :class:`PosteriorSummary` objects (mean gap and variance
    ratio ``first / second``), or two arrays of density values on the same
    ``grid``, which adds ``KL(first || second)`` by the trapezoid rule.
    """
    if isinstance(first, PosteriorSummary) and isinstance(second, PosteriorSummary):
        return Divergence(first.mean - second.mean, first.variance / second.variance)
    if grid is None:
        raise DomainError("density comparison needs the shared grid")
    grid = np.asarray(grid, dtype=float)
    p_vals, q_vals = np.asarray(first, dtype=float), np.asarray(second, dtype=float)
    if p_vals.shape != grid.shape or q_vals.shape != grid.shape:
        raise DomainError(
            f"grid mismatch: grid {grid.shape}, densities {p_vals.shape} and {q_vals.shape}"
        )
    p, mp, vp = _grid_moments(grid, p_vals)
    q, mq, vq = _grid_moments(grid, q_vals)
    integrand = np.where(p > 0.0, p * (np.log(np.maximum(p, DENSITY_FLOOR)) - np.log(np.maximum(q, DENSITY_FLOOR))), 0.0)
    return Divergence(float(mp - mq), float(vp / vq), float(np.trapezoid(integrand, grid)))


def beta_density(state, grid):
    """``Beta(a, b)`` density on ``grid`` (helper for :func:`divergence`)."""
    grid = np.asarray(grid, dtype=float)
    return np.exp(xlogy(state.a - 1.0, grid) + xlogy(state.b - 1.0, 1.0 - grid) - betaln(state.a, state.b))

