"""Recursive Dirichlet approximation for J >= 2 mixing weights of known
densities.

After one observation the exact posterior is ``sum_j w_j Dir(a + e_j)``.
A single Dirichlet has J hyperparameters: the J - 1 free means use up all
but one of them, leaving only the total mass ``L_n`` for the
``J (J - 1) / 2`` distinct second moments.  The update therefore matches
the means exactly and fixes ``L_n`` from an average of the second-moment
equations:

``avg-variance``
    average of the J variance equations;
``avg-variance-covariance``
    average of the J variance equations and the ``J (J - 1) / 2``
    covariance equations for ``j < k``.

Both averaged equations are linear in ``1 / (L_n + 1)``.  Because
``sum_j E_j (1 - E_j) = 2 sum_{j<k} E_j E_k`` for any point of the simplex
(and likewise for the responsibilities), the two policies yield the same
mass up to rounding.
"""

import numpy as np

from .errors import DegenerateObservationError, DomainError, InvalidLabelError, MassError
from .states import DirichletState

POLICIES = ("avg-variance", "avg-variance-covariance")


def _responsibilities(alpha, log_f):
    logits = np.log(alpha) + log_f
    if np.all(np.isneginf(logits)):
        raise DegenerateObservationError("every component density vanishes at the observation")
    logits = logits - np.max(logits)
    w = np.exp(logits)
    return w / np.sum(w)


def dir_responsibilities(dset, state, x):
    """``w_j = a_j f_j(x) / sum_k a_k f_k(x)``, computed in log space."""
    _check_sizes(dset, state)
    return _responsibilities(np.asarray(state.alpha), dset.log_evaluate(x))


def _check_sizes(dset, state):
    if len(dset) != len(state):
        raise DomainError(f"{len(dset)} densities but {len(state)} Dirichlet cells")


def _matched_means(alpha, w):
    return (alpha + w) / (np.sum(alpha) + 1.0)


def _equation_terms(E, w):
    """Coefficients ``(p, q)`` of every second-moment equation written as
    ``p / (L_n + 1) = p / (L + 2) + q / ((L + 2)(L + 1))``.

    Variances first (``p = E_j(1-E_j)``, ``q = w_j(1-w_j)``), then the
    covariances for ``j < k`` (``p = -E_j E_k``, ``q = -w_j w_k``).
    """
    J = E.size
    j, k = np.triu_indices(J, 1)
    p = np.concatenate([E * (1.0 - E), -E[j] * E[k]])
    q = np.concatenate([w * (1.0 - w), -w[j] * w[k]])
    return p, q


def _solve_mass(p, q, total):
    """Solve the averaged equation for ``L_n``."""
    p_bar, q_bar = np.mean(p), np.mean(q)
    inv = 1.0 / (total + 2.0) + q_bar / (p_bar * (total + 2.0) * (total + 1.0))
    return 1.0 / inv - 1.0, p_bar, q_bar


def dir_pe_update(dset, state, x, policy="avg-variance"):
    """Mean-matching Dirichlet update with the mass chosen by ``policy``.

    Means: ``E_j = (a_j + w_j) / (L + 1)``; then ``A_j = L_n E_j``.

    Raises
    ------
    MassError
        If the averaged equation gives ``L_n <= 0``; the offending averages
        are attached as ``details``.
    """
    if policy not in POLICIES:
        raise DomainError(f"policy must be one of {POLICIES}, got {policy!r}")
    _check_sizes(dset, state)
    alpha = np.asarray(state.alpha)
    w = _responsibilities(alpha, dset.log_evaluate(x))
    total = float(np.sum(alpha))
    E = _matched_means(alpha, w)
    p, q = _equation_terms(E, w)
    if policy == "avg-variance":
        p, q = p[: E.size], q[: E.size]
    mass, p_bar, q_bar = _solve_mass(p, q, total)
    if not mass > 0.0:
        raise MassError(
            f"averaged second-moment equation gives non-positive mass {mass!r}",
            mass=mass, moment_average=p_bar, responsibility_average=q_bar,
        )
    return DirichletState(tuple((mass * E).tolist()))


def dir_quasi_bayes_update(dset, state, x):
    """``a_j += w_j``: means tracked, mass grows by one."""
    w = dir_responsibilities(dset, state, x)
    return DirichletState(tuple((np.asarray(state.alpha) + w).tolist()))


def dir_confirmed_update(state, z):
    """Exact step for a known 1-based label ``z``."""
    if not (isinstance(z, (int, np.integer)) and 1 <= z <= len(state)):
        raise InvalidLabelError(f"label must be in 1..{len(state)}, got {z!r}")
    alpha = list(state.alpha)
    alpha[z - 1] += 1.0
    return DirichletState(tuple(alpha))


def second_moment_residuals(dset, state, x, mass):
    """Signed residual of each second-moment matching equation at a trial
    mass ``L_n = mass``.

    Returns ``(variance_residuals, covariance_residuals)``: an array of J
    values and a ``J x J`` symmetric array whose off-diagonal ``[j, k]``
    holds the covariance residual (diagonal zero).  The residual is
    ``lhs - rhs`` of the equation as written above.
    """
    _check_sizes(dset, state)
    alpha = np.asarray(state.alpha)
    w = _responsibilities(alpha, dset.log_evaluate(x))
    total = float(np.sum(alpha))
    E = _matched_means(alpha, w)
    denom = (total + 2.0) * (total + 1.0)
    var = E * (1.0 - E) / (mass + 1.0) - E * (1.0 - E) / (total + 2.0) - w * (1.0 - w) / denom
    outer_E, outer_w = np.outer(E, E), np.outer(w, w)
    cov = -outer_E / (mass + 1.0) + outer_E / (total + 2.0) + outer_w / denom
    np.fill_diagonal(cov, 0.0)
    return var, cov


def mass_candidates(dset, state, x, exact=False):
    """The mass each variance equation would pick on its own.

    With ``exact=False`` this is the large-mass form
    ``L_n = L + 1 - w_j (1 - w_j) / (E_j (1 - E_j))``; with ``exact=True``
    each variance equation is solved exactly.  For J > 2 the candidates
    generically differ, which is why no single Dirichlet matches every
    second moment.
    """
    _check_sizes(dset, state)
    alpha = np.asarray(state.alpha)
    w = _responsibilities(alpha, dset.log_evaluate(x))
    total = float(np.sum(alpha))
    E = _matched_means(alpha, w)
    p, q = E * (1.0 - E), w * (1.0 - w)
    if not exact:
        return total + 1.0 - q / p
    return p * (total + 1.0) * (total + 2.0) / (p * (total + 1.0) + q) - 1.0
