"""Recursive Beta approximations for the unknown weight of a two-component
mixture of known densities, ``f(x | beta) = beta f1(x) + (1 - beta) f2(x)``.

Each single-observation rule maps ``Beta(a, b)`` and an observation to a
new ``Beta(A, B)``.  The rules differ in what they preserve from the exact
one-step posterior ``w1 Be(a+1, b) + (1-w1) Be(a, b+1)``:

========== =========================================================
rule       update
========== =========================================================
quasi-Bayes  add the responsibilities: mean tracked, mass grows by 1
PE           match mean and variance exactly (probabilistic editor)
KL           match E[log beta] and E[log(1-beta)] (digamma system)
VB           recursive variational step with geometric-mean weights
confirmed    label known, exact conjugate step
========== =========================================================

The ``*_step`` functions are the array kernels; they take the log
densities ``log f1(x)``, ``log f2(x)`` and broadcast over replicates.
"""

from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .errors import DegenerateObservationError, InvalidLabelError, ZeroInformationError
from .special import digamma, solve_digamma_system
from .states import BetaState


@dataclass(frozen=True)
class UpdateDiagnostics:
    """Per-step quantities: the responsibility ``w1``, the mass change
    ``L_n - L_{n-1}`` and ``epsilon = w1 (1 - w1) / (E_n (1 - E_n))``."""

    w1: float
    mass_increment: float
    epsilon: float


@dataclass(frozen=True)
class EpSite:
    """Additive contribution ``(da, db)`` of one observation's site factor."""

    da: float = 0.0
    db: float = 0.0


def _log_pair(pair, x):
    logs = pair.log_evaluate(x)
    return logs[..., 0], logs[..., 1]


def responsibility_step(a, b, log_f1, log_f2):
    """``w1 = a f1 / (a f1 + b f2)`` in log space, elementwise."""
    l1 = np.log(a) + log_f1
    l2 = np.log(b) + log_f2
    if np.any(np.isneginf(l1) & np.isneginf(l2)):
        raise DegenerateObservationError("both component densities vanish at the observation")
    top = np.maximum(l1, l2)
    e1, e2 = np.exp(l1 - top), np.exp(l2 - top)
    return e1 / (e1 + e2)


def responsibility(pair, state, x):
    """Posterior probability under ``Beta(a, b)`` weighting that ``x`` came from ``f1``."""
    l1, l2 = _log_pair(pair, x)
    return float(responsibility_step(state.a, state.b, l1, l2))


def _epsilon(w1, mean):
    return w1 * (1.0 - w1) / (mean * (1.0 - mean))


def quasi_bayes_step(a, b, log_f1, log_f2):
    w1 = responsibility_step(a, b, log_f1, log_f2)
    return a + w1, b + (1.0 - w1), w1


def vb_step(a, b, log_f1, log_f2):
    """Recursive variational step: responsibilities use the geometric-mean
    weights ``exp(psi(a) - psi(a+b))`` and ``exp(psi(b) - psi(a+b))``."""
    psi_a, psi_b = digamma(a), digamma(b)
    shift = np.maximum(psi_a, psi_b)
    # The common psi(a+b) cancels; shift keeps the exponent bounded.
    w1 = responsibility_step(np.exp(psi_a - shift), np.exp(psi_b - shift), log_f1, log_f2)
    return a + w1, b + (1.0 - w1), w1


def pe_step(a, b, log_f1, log_f2):
    """Probabilistic-editor step: exact match of the first two moments of
    ``w1 Be(a+1, b) + (1 - w1) Be(a, b+1)``.

    Returns ``(A, B, w1, mean)``.  The new mass solves
    ``E(1-E)/(L_n+1) = E(1-E)/(L+2) + w1(1-w1)/((L+2)(L+1))`` in closed form.
    """
    w1 = responsibility_step(a, b, log_f1, log_f2)
    total = a + b
    mean = (a + w1) / (total + 1.0)
    spread = mean * (1.0 - mean)
    if np.any(spread <= 0.0):
        raise AssertionError("moment-matched mean left the open unit interval")
    mass = spread * (total + 1.0) * (total + 2.0) / (spread * (total + 1.0) + w1 * (1.0 - w1)) - 1.0
    return mean * mass, (1.0 - mean) * mass, w1, mean


def kl_targets(a, b, w1):
    """Right-hand sides of the KL update: the expected logs of the weight
    and its complement under the exact one-step posterior.

    ``f1 / (a f1 + b f2)`` is evaluated as ``w1 / a`` (and likewise for the
    second component) to avoid forming the densities directly.
    """
    psi_total = digamma(a + b)
    inv_total = 1.0 / (a + b)
    r1 = w1 / a - inv_total + digamma(a) - psi_total
    r2 = (1.0 - w1) / b - inv_total + digamma(b) - psi_total
    return r1, r2


def kl_step(a, b, log_f1, log_f2, settings=None):
    """Kullback-Leibler step, started from the PE solution.  Returns
    ``(A, B, w1)``."""
    pe_a, pe_b, w1, _ = pe_step(a, b, log_f1, log_f2)
    r1, r2 = kl_targets(a, b, w1)
    A, B = solve_digamma_system(r1, r2, initial=(pe_a, pe_b), settings=settings)
    return A, B, w1


def _with_diagnostics(state, new_a, new_b, w1):
    new = BetaState(float(new_a), float(new_b))
    diag = UpdateDiagnostics(
        w1=float(w1),
        mass_increment=new.mass - state.mass,
        epsilon=float(_epsilon(w1, new.mean)),
    )
    return new, diag


def quasi_bayes_update(pair, state, x):
    """Quasi-Bayes: ``a += w1``, ``b += 1 - w1``; the mass rises by exactly one."""
    l1, l2 = _log_pair(pair, x)
    A, B, w1 = quasi_bayes_step(state.a, state.b, l1, l2)
    return _with_diagnostics(state, A, B, w1)


def confirmed_update(state, z):
    """Exact conjugate step for a known label ``z`` in {1, 2}."""
    if z not in (1, 2):
        raise InvalidLabelError(f"component label must be 1 or 2, got {z!r}")
    return BetaState(state.a + (z == 1), state.b + (z == 2))


def vb_recursive_update(pair, state, x):
    l1, l2 = _log_pair(pair, x)
    A, B, w1 = vb_step(state.a, state.b, l1, l2)
    return _with_diagnostics(state, A, B, w1)


def pe_update(pair, state, x):
    """Probabilistic editor update; see :func:`pe_step`.

    An observation with ``f1(x) == f2(x)`` leaves the state unchanged.
    """
    l1, l2 = _log_pair(pair, x)
    A, B, w1, _ = pe_step(state.a, state.b, l1, l2)
    return _with_diagnostics(state, A, B, w1)


def kl_update(pair, state, x, settings=None):
    """KL-optimal Beta update.

    Solves ``psi(A) - psi(A+B) = f1/(a f1 + b f2) - 1/(a+b) + psi(a) - psi(a+b)``
    and its counterpart for ``B``, starting Newton from the PE update.

    Raises
    ------
    ConvergenceError
        Propagated from the digamma solver.
    """
    l1, l2 = _log_pair(pair, x)
    A, B, w1 = kl_step(state.a, state.b, l1, l2, settings)
    return _with_diagnostics(state, A, B, w1)


def approximate_mass_increment(w1, mean):
    """Large-mass approximation ``L_n - L_{n-1} ~ 1 - epsilon_n``."""
    return 1.0 - _epsilon(w1, mean)


_RULES = ("moment-match", "KL")
ZERO_INFORMATION = 1e-12


@dataclass
class EpResult:
    state: BetaState
    sites: list
    sweeps_used: int
    converged: bool
    skipped: list = field(default_factory=list)
    history: list = field(default_factory=list)


def ep_fit(pair, prior, data, update_rule="moment-match", max_sweeps=50, tolerance=1e-10,
           settings=None):
    """Expectation propagation over ``data`` with Beta site factors.

    Each site is an additive offset ``(da, db)``.  For observation ``i`` the
    site is removed to form the cavity, the chosen one-observation update is
    applied to the cavity, and the site is reset to the difference between
    the result and the cavity.  Sweeps repeat until the largest change of
    ``(a, b)`` within a sweep is below ``tolerance``.

    Sites whose removal would leave a non-positive cavity are skipped for
    that sweep; each skip is recorded as ``(sweep, index)`` in
    ``EpResult.skipped``.  ``EpResult.history`` holds the state after each
    sweep.
    """
    if update_rule not in _RULES:
        raise ValueError(f"update_rule must be one of {_RULES}, got {update_rule!r}")
    logs = pair.log_evaluate(np.asarray(data, dtype=float))
    n = logs.shape[0]
    da = np.zeros(n)
    db = np.zeros(n)
    a, b = prior.a, prior.b
    result = EpResult(state=prior, sites=[], sweeps_used=0, converged=False)
    for sweep in range(1, max_sweeps + 1):
        largest = 0.0
        for i in range(n):
            ca, cb = a - da[i], b - db[i]
            if not (ca > 0.0 and cb > 0.0):
                result.skipped.append((sweep, i))
                continue
            if update_rule == "moment-match":
                na, nb, _, _ = pe_step(ca, cb, logs[i, 0], logs[i, 1])
            else:
                na, nb, _ = kl_step(ca, cb, logs[i, 0], logs[i, 1], settings)
            na, nb = float(na), float(nb)
            largest = max(largest, abs(na - a), abs(nb - b))
            da[i], db[i] = na - ca, nb - cb
            a, b = na, nb
        result.history.append(BetaState(a, b))
        result.sweeps_used = sweep
        if largest < tolerance:
            result.converged = True
            break
    result.state = BetaState(a, b)
    result.sites = [EpSite(float(x), float(y)) for x, y in zip(da, db)]
    return result


@dataclass(frozen=True)
class AsymptoticVariances:
    """Large-``n`` posterior variances: confirmed data, quasi-Bayes,
    variational, maximum likelihood and probabilistic editor."""

    V_CO: float
    V_QB: float
    V_VA: float
    V_ML: float
    V_PE: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("V_CO", "V_QB", "V_VA", "V_ML", "V_PE")}


def asymptotic_variances(pair, beta, n, quad=None):
    """The five asymptotic variance formulas at weight ``beta`` and sample size ``n``.

    Raises
    ------
    ZeroInformationError
        If the Fisher information vanishes (identical densities), in which
        case ``V_ML`` and ``V_PE`` are undefined.
    """
    complete = beta * (1.0 - beta) / n
    info_ml = oracle.fisher_information_beta(pair, beta, quad)
    info_pe = oracle.pe_information_beta(pair, beta, quad)
    # Relative to the complete-data bound 1 / (beta (1 - beta)).
    floor = ZERO_INFORMATION / (beta * (1.0 - beta))
    if info_ml <= floor or info_pe <= floor:
        raise ZeroInformationError("the component densities carry no information about beta")
    return AsymptoticVariances(
        V_CO=complete,
        V_QB=complete,
        V_VA=complete,
        V_ML=1.0 / (n * info_ml),
        V_PE=1.0 / (n * info_pe),
    )
