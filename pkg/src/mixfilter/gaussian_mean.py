"""Recursive Gaussian approximation for the unknown mean of a Gaussian mixture.

The model is ``f(x | mu) = sum_j v_j N(x; c_j mu, sigma_j^2)`` with every
``c_j``, ``sigma_j`` and ``v_j`` known.  After each observation the product
of the current ``N(a, b)`` approximation and the likelihood is a Gaussian
mixture; :func:`adf_update` replaces it by the Gaussian with the same mean
and variance.

The leading-order expansions of that update are exposed as diagnostics.
They are written in terms of, for each component,

* ``R_j = c_j / sigma_j``
* ``S_j = (x - c_j a) / sigma_j``
* ``T_j = (v_j / sigma_j) exp(-S_j^2 / 2)``

and the same quantities evaluated at ``mu`` instead of ``a`` give the score
and the observed information of a single observation.

Every array-valued helper broadcasts over ``a``, ``b``, ``mu`` and ``x``
with the component axis last, so replicates can be advanced together.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, InvalidLabelError, ModelShapeError
from .states import CountedGaussianState, GaussianState

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MeanMixtureModel:
    """Known constants ``(c_j, sigma_j, v_j)`` of the mean mixture."""

    c: tuple
    sigma: tuple
    v: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in self.c)
        sigma = tuple(float(x) for x in self.sigma)
        v = tuple(float(x) for x in self.v)
        if not (len(c) == len(sigma) == len(v) >= 1):
            raise DomainError("c, sigma and v must have the same length J >= 1")
        if not all(math.isfinite(x) for x in c + sigma + v):
            raise DomainError("model constants must be finite")
        if any(s <= 0.0 for s in sigma):
            raise DomainError("component standard deviations must be > 0")
        if any(w <= 0.0 for w in v):
            raise DomainError("mixing weights must be > 0")
        if abs(math.fsum(v) - 1.0) > 1e-12:
            raise DomainError(f"mixing weights must sum to 1, got {math.fsum(v)!r}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_components(cls, components):
        """Build from ``[(c_j, sigma_j, v_j), ...]``."""
        c, sigma, v = zip(*components)
        return cls(c, sigma, v)

    @property
    def n_components(self):
        return len(self.c)

    @property
    def components(self):
        return list(zip(self.c, self.sigma, self.v))

    @property
    def R(self):
        return np.asarray(self.c) / np.asarray(self.sigma)

    def to_dict(self):
        return {"c": list(self.c), "sigma": list(self.sigma), "v": list(self.v)}


def symmetric_model():
    """Equal mixture of ``N(-mu, 1)`` and ``N(mu, 1)``."""
    return MeanMixtureModel((-1.0, 1.0), (1.0, 1.0), (0.5, 0.5))


def clutter_model(v):
    """Mixture ``(1 - v) N(mu, 1) + v N(0, 10)``: the signal-in-clutter problem."""
    if not 0.0 < v < 1.0:
        raise DomainError(f"clutter weight must lie in (0, 1), got {v!r}")
    return MeanMixtureModel((1.0, 0.0), (1.0, math.sqrt(10.0)), (1.0 - v, v))


def _constants(model):
    return np.asarray(model.c), np.asarray(model.sigma), np.log(np.asarray(model.v))


def _softmax(logits):
    logits = np.asarray(logits, dtype=float)
    finite = np.isfinite(logits)
    top = np.max(np.where(finite, logits, -np.inf), axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(under="ignore"):
        weights = np.where(finite, np.exp(logits - top), 0.0)
    return weights / np.sum(weights, axis=-1, keepdims=True)


def _expansion_terms(model, centre, x):
    """``(R_j, S_j, W_j)`` at the given centre (``a`` or ``mu``), where
    ``W_j = T_j / sum_k T_k``, computed in log space."""
    c, sigma, logv = _constants(model)
    centre = np.asarray(centre, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)[..., None]
    S = (x - c * centre) / sigma
    log_T = logv - np.log(sigma) - 0.5 * S * S
    W = _softmax(log_T)
    if not np.all(np.isfinite(W)):
        W = np.where(np.isfinite(W), W, _softmax(logv - np.log(sigma)))
    return c / sigma, S, W


def log_density(model, mu, x):
    """``log sum_j v_j N(x; c_j mu, sigma_j^2)`` with full normalization."""
    c, sigma, logv = _constants(model)
    mu = np.asarray(mu, dtype=float)[..., None]
    xx = np.asarray(x, dtype=float)[..., None]
    z = (xx - c * mu) / sigma
    terms = logv - np.log(sigma) - 0.5 * _LOG_2PI - 0.5 * z * z
    out = logsumexp(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _posterior_arrays(model, a, b, x):
    c, sigma, logv = _constants(model)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)[..., None]
    s2 = sigma * sigma
    pred_var = s2 + b * c * c
    log_w = logv - 0.5 * np.log(pred_var) - 0.5 * (x - a * c) ** 2 / pred_var
    w = _softmax(log_w)
    if not np.all(np.isfinite(w)):
        w = np.where(np.isfinite(w), w, _softmax(np.broadcast_to(logv, w.shape)))
    m = (a * s2 + b * c * x) / pred_var
    post_var = b * s2 / pred_var
    return w, m, post_var


@dataclass(frozen=True)
class ComponentPosterior:
    """One component of the exact one-step posterior ``sum_j w_j N(m_j, s2_j)``."""

    w: float
    m: float
    s2: float


def component_posteriors(model, state, x):
    """Exact posterior mixture of ``mu`` after combining ``N(a, b)`` with one
    observation.  Responsibilities are normalized in log space."""
    w, m, s2 = _posterior_arrays(model, state.a, state.b, x)
    return [ComponentPosterior(float(wj), float(mj), float(sj)) for wj, mj, sj in zip(w, m, s2)]


def adf_moments(model, a, b, x):
    """Array form of :func:`adf_update`: returns ``(A, B, w)`` where ``w``
    holds the exact component responsibilities (component axis last)."""
    w, m, s2 = _posterior_arrays(model, a, b, x)
    A = np.sum(w * m, axis=-1)
    B = np.sum(w * s2, axis=-1) + np.sum(w * (m - A[..., None]) ** 2, axis=-1)
    return A, B, w


def adf_update(model, state, x):
    """Moment-matched Gaussian after one observation.

    The new mean is ``sum_j w_j m_j`` and the new variance is
    ``sum_j w_j s_j^2 + sum_j w_j (m_j - A)^2``, both exact.
    """
    A, B, _ = adf_moments(model, state.a, state.b, x)
    return GaussianState(float(A), float(B))


def asymptotic_mean_increment(model, state, x):
    """Leading ``O(b)`` term of ``A - a``: ``b sum_j R_j S_j T_j / sum_j T_j``."""
    R, S, W = _expansion_terms(model, state.a, x)
    return float(state.b * np.sum(R * S * W))


def _information_terms(R, S, W):
    first = np.sum(W * R * R, axis=-1)
    second = np.sum(W * R * R * S * S, axis=-1)
    third = np.sum(W * R * S, axis=-1) ** 2
    return first - second + third


def asymptotic_precision_increment(model, state, x):
    """Leading term of ``1/B - 1/b`` as ``b -> 0``."""
    R, S, W = _expansion_terms(model, state.a, x)
    return float(_information_terms(R, S, W))


def observed_information(model, mu, x):
    """``-d^2/dmu^2 log f(x | mu)``; the same expression as
    :func:`asymptotic_precision_increment` with ``a`` replaced by ``mu``.
    Broadcasts over ``mu`` and ``x``."""
    R, S, W = _expansion_terms(model, mu, x)
    out = _information_terms(R, S, W)
    return float(out) if np.ndim(out) == 0 else out


def score(model, mu, x):
    """``d/dmu log f(x | mu) = sum_j T_j R_j S_j / sum_j T_j`` at ``mu``."""
    R, S, W = _expansion_terms(model, mu, x)
    out = np.sum(W * R * S, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def complete_data_precision(model, state, x):
    """Expected complete-data information ``sum_j R_j^2 T_j / sum_j T_j``.

    This is also the leading precision increment of the variational
    approximation, and it is never smaller than
    :func:`asymptotic_precision_increment`.
    """
    R, _, W = _expansion_terms(model, state.a, x)
    return float(np.sum(W * R * R))


def _is_symmetric(model):
    return (
        model.n_components == 2
        and sorted(model.c) == [-1.0, 1.0]
        and model.sigma == (1.0, 1.0)
        and model.v == (0.5, 0.5)
    )


def _negative_index(model):
    if not _is_symmetric(model):
        raise ModelShapeError("this recursion is defined only for the symmetric two-Gaussian model")
    return model.c.index(-1.0)


def quasi_bayes_update(model, cstate, x):
    """Quasi-Bayes step for the symmetric model.

    The observation is split between ``N(-a, 1)`` (probability ``w``) and
    ``N(a, 1)``, giving ``A = a + {(1 - w) x - w x - a} / (k + 1)`` and
    ``B = 1 / (k + 1)``, where ``k = cstate.n + 1`` is the index of the
    observation being absorbed (prior variance 1 at ``k = 0``).
    """
    neg = _negative_index(model)
    a = cstate.state.a
    _, _, W = _expansion_terms(model, a, x)
    w = float(W[neg])
    k = cstate.n + 1
    A = a + ((1.0 - w) * x - w * x - a) / (k + 1)
    return CountedGaussianState(GaussianState(A, 1.0 / (k + 1)), k)


def confirmed_update(cstate, x, z):
    """Symmetric-model step when the label is known: ``z = 1`` means
    ``N(-mu, 1)`` and ``z = 2`` means ``N(mu, 1)``."""
    if z not in (1, 2):
        raise InvalidLabelError(f"component label must be 1 or 2, got {z!r}")
    a = cstate.state.a
    k = cstate.n + 1
    signed = -x if z == 1 else x
    A = a + (signed - a) / (k + 1)
    return CountedGaussianState(GaussianState(A, 1.0 / (k + 1)), k)


def sample(model, mu, rng, size):
    """Ancestral draws from ``f(x | mu)``: returns ``(x, labels)`` with
    1-based component labels."""
    c, sigma, _ = _constants(model)
    labels = rng.choice(model.n_components, size=size, p=np.asarray(model.v))
    x = rng.normal(c[labels] * mu, sigma[labels])
    return x, labels + 1


# Closed forms for the two special cases, written out term by term so they
# can be checked against the general expressions above.

def _sym_exps(centre, x):
    return np.exp(-0.5 * (x + centre) ** 2), np.exp(-0.5 * (x - centre) ** 2)


def symmetric_mean_increment_closed_form(a, b, x):
    """``b {(1 - w) x - w x - a}`` with ``w`` the ``N(-a, 1)`` responsibility."""
    e_neg, e_pos = _sym_exps(a, x)
    w = e_neg / (e_neg + e_pos)
    return b * ((1.0 - w) * x - w * x - a)


def symmetric_precision_closed_form(centre, x):
    """``1 - 4 x^2 exp{-(x+a)^2/2 - (x-a)^2/2} / [exp{-(x+a)^2/2} + exp{-(x-a)^2/2}]^2``.

    With ``centre = a`` this is the precision increment, with ``centre = mu``
    the observed information."""
    e_neg, e_pos = _sym_exps(centre, x)
    return 1.0 - 4.0 * x * x * np.exp(-0.5 * (x + centre) ** 2 - 0.5 * (x - centre) ** 2) / (e_neg + e_pos) ** 2


def clutter_mean_increment_closed_form(v, a, b, x):
    """``b w (x - a)`` with ``w`` the signal-component responsibility."""
    sig = (1.0 - v) * np.exp(-0.5 * (x - a) ** 2)
    clut = v / math.sqrt(10.0) * np.exp(-x * x / 20.0)
    return b * sig / (sig + clut) * (x - a)


def clutter_precision_closed_form(v, centre, x):
    """Two-term clutter-model increment (or information, with ``centre = mu``):
    ``w - (v/sqrt10)(1-v)(x-a)^2 exp{-(x-a)^2/2 - x^2/20} / D^2`` where
    ``D = (1-v) exp{-(x-a)^2/2} + (v/sqrt10) exp(-x^2/20)``."""
    sig = (1.0 - v) * np.exp(-0.5 * (x - centre) ** 2)
    clut = v / math.sqrt(10.0) * np.exp(-x * x / 20.0)
    denom = sig + clut
    cross = (v / math.sqrt(10.0)) * (1.0 - v) * (x - centre) ** 2 * np.exp(
        -0.5 * (x - centre) ** 2 - x * x / 20.0
    )
    return sig / denom - cross / denom**2
