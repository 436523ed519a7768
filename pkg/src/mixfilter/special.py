"""Log-gamma, digamma and trigamma, plus the Newton solver for the digamma
system that defines the Kullback-Leibler Beta update.

All three special functions shift the argument upward with the functional
recurrence until it is at least ``_ASYMPTOTIC_START`` and then sum the
Stirling / de Moivre asymptotic series.  They accept scalars or arrays and
return the same kind of object.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConvergenceError, DomainError

_ASYMPTOTIC_START = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# B_{2k} / (2k (2k-1)), k = 1..8, for the log-gamma series.
_LGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
# B_{2k} / (2k), k = 1..8, for the digamma series.
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)
# B_{2k}, k = 1..8, for the trigamma series.
_TRIGAMMA_COEFFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)


def _as_positive_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite x > 0, got {x!r}")
    return arr


def _wrap(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _polyval_inverse(coeffs, r, first_power):
    """Sum ``coeffs[k] * r**(first_power + 2k)`` by Horner's rule."""
    r2 = r * r
    acc = np.zeros_like(r)
    for c in reversed(coeffs):
        acc = acc * r2 + c
    return acc * r**first_power


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``.

    Raises
    ------
    DomainError
        If any ``x`` is non-positive or non-finite.
    """
    arr = _as_positive_array(x, "log_gamma")
    y = arr.copy()
    prod = np.ones_like(y)
    shifted = np.zeros_like(y, dtype=bool)
    while np.any(y < _ASYMPTOTIC_START):
        small = y < _ASYMPTOTIC_START
        prod = np.where(small, prod * y, prod)
        y = np.where(small, y + 1.0, y)
        shifted |= small
    r = 1.0 / y
    series = (y - 0.5) * np.log(y) - y + _HALF_LOG_2PI + _polyval_inverse(_LGAMMA_COEFFS, r, 1)
    out = np.where(shifted, series - np.log(prod), series)
    return _wrap(out, x)


def digamma(x):
    """Digamma function, the derivative of :func:`log_gamma`."""
    arr = _as_positive_array(x, "digamma")
    y = arr.copy()
    acc = np.zeros_like(y)
    while np.any(y < _ASYMPTOTIC_START):
        small = y < _ASYMPTOTIC_START
        acc = np.where(small, acc - 1.0 / y, acc)
        y = np.where(small, y + 1.0, y)
    r = 1.0 / y
    out = acc + np.log(y) - 0.5 * r - _polyval_inverse(_DIGAMMA_COEFFS, r, 2)
    return _wrap(out, x)


def trigamma(x):
    """First derivative of :func:`digamma`."""
    arr = _as_positive_array(x, "trigamma")
    y = arr.copy()
    acc = np.zeros_like(y)
    while np.any(y < _ASYMPTOTIC_START):
        small = y < _ASYMPTOTIC_START
        acc = np.where(small, acc + 1.0 / (y * y), acc)
        y = np.where(small, y + 1.0, y)
    r = 1.0 / y
    out = acc + r + 0.5 * r * r + _polyval_inverse(_TRIGAMMA_COEFFS, r, 3)
    return _wrap(out, x)


@dataclass(frozen=True)
class SolverSettings:
    """Stopping rule and step control for :func:`solve_digamma_system`.

    ``tolerance`` bounds the L1 norm of the residual of the two digamma
    equations; ``damping`` scales every Newton step before the positivity
    backtracking is applied.
    """

    max_iterations: int = 200
    tolerance: float = 1e-12
    damping: float = 1.0

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations must be a positive integer")
        if not (self.tolerance > 0.0 and math.isfinite(self.tolerance)):
            raise DomainError("tolerance must be a finite positive number")
        if not 0.0 < self.damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]")


def digamma_system(a, b):
    """Forward map ``(A, B) -> (psi(A) - psi(A+B), psi(B) - psi(A+B))``.

    These are the expected logs of the weight and its complement under a
    ``Beta(A, B)`` distribution.
    """
    psi_total = digamma(np.asarray(a, dtype=float) + np.asarray(b, dtype=float))
    return digamma(a) - psi_total, digamma(b) - psi_total


def _residual(a, b, r1, r2):
    g1, g2 = digamma_system(a, b)
    return g1 - r1, g2 - r2


def solve_digamma_system(r1, r2, initial=(1.0, 1.0), settings=None):
    """Find ``(A, B) > 0`` with ``psi(A) - psi(A+B) = r1`` and
    ``psi(B) - psi(A+B) = r2``.

    Damped Newton iteration: each step is scaled by ``settings.damping``
    and then halved until both coordinates stay positive and the residual
    norm does not grow.  Works elementwise on arrays of right-hand sides.

    Parameters
    ----------
    r1, r2 : float or array_like
        Target expected logs; both must be strictly negative.
    initial : tuple of float or array_like
        Starting point ``(A0, B0)``, strictly positive.
    settings : SolverSettings, optional

    Returns
    -------
    tuple
        ``(A, B)``, floats for scalar input.

    Raises
    ------
    DomainError
        If either right-hand side is non-negative or the start is not
        strictly positive.
    ConvergenceError
        If the residual is still above tolerance after ``max_iterations``.
    """
    settings = settings or SolverSettings()
    scalar = np.ndim(r1) == 0 and np.ndim(r2) == 0
    t1, t2 = np.broadcast_arrays(np.asarray(r1, dtype=float), np.asarray(r2, dtype=float))
    if not (np.all(np.isfinite(t1)) and np.all(np.isfinite(t2))):
        raise DomainError("digamma system targets must be finite")
    if np.any(t1 >= 0.0) or np.any(t2 >= 0.0):
        raise DomainError(
            f"infeasible digamma system: both targets must be negative, got ({r1!r}, {r2!r})"
        )
    a = np.array(np.broadcast_to(np.asarray(initial[0], dtype=float), t1.shape))
    b = np.array(np.broadcast_to(np.asarray(initial[1], dtype=float), t1.shape))
    if np.any(~(a > 0.0)) or np.any(~(b > 0.0)):
        raise DomainError("initial guess must be strictly positive")

    e1, e2 = _residual(a, b, t1, t2)
    norm = np.abs(e1) + np.abs(e2)
    iterations = 0
    polished = False
    while True:
        active = norm > settings.tolerance
        if not np.any(active):
            if polished:
                break
            # The scale of (A, B) enters only at O(1/A), so a residual at
            # tolerance can still leave a visible relative error in large
            # solutions; one more Newton step, kept only if it does not
            # raise the residual, removes it.
            polished = True
            active = norm > 0.0
            if not np.any(active):
                break
        elif iterations >= settings.max_iterations:
            raise ConvergenceError(
                "digamma system did not converge", float(np.max(norm)), iterations
            )
        iterations += 1
        p_a, p_b, p_s = trigamma(a), trigamma(b), trigamma(a + b)
        j11, j22, j12 = p_a - p_s, p_b - p_s, -p_s
        det = j11 * j22 - j12 * j12
        da = -(j22 * e1 - j12 * e2) / det
        db = -(j11 * e2 - j12 * e1) / det
        step = np.where(active, settings.damping, 0.0)
        # Halve until inside the positive quadrant and not uphill.
        for _ in range(60):
            na, nb = a + step * da, b + step * db
            inside = (na > 0.0) & (nb > 0.0)
            safe_a, safe_b = np.where(inside, na, a), np.where(inside, nb, b)
            n1, n2 = _residual(safe_a, safe_b, t1, t2)
            new_norm = np.abs(n1) + np.abs(n2)
            ok = inside & (new_norm <= norm * (1.0 + 1e-12) + 1e-300)
            retry = active & ~ok & (step > 0.0)
            if not np.any(retry):
                break
            step = np.where(retry, 0.5 * step, step)
        accept = active & ok
        a, b = np.where(accept, safe_a, a), np.where(accept, safe_b, b)
        e1, e2 = np.where(accept, n1, e1), np.where(accept, n2, e2)
        stalled = active & ~accept
        norm = np.abs(e1) + np.abs(e2)
        if polished:
            break
        if np.any(stalled & (norm > settings.tolerance)):
            raise ConvergenceError(
                "digamma system stalled: no admissible Newton step",
                float(np.max(np.where(stalled, norm, 0.0))),
                iterations,
            )
    if scalar:
        return float(a), float(b)
    return a, b
