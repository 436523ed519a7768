import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixfilter import weight as wf
from mixfilter.densities import Gaussian, KnownDensityPair, Uniform
from mixfilter.errors import ConvergenceError, DegenerateObservationError, InvalidLabelError, ZeroInformationError
from mixfilter.oracle import exact_beta_posterior, fisher_information_beta
from mixfilter.special import SolverSettings, digamma, digamma_system
from mixfilter.states import BetaState

# Moments of 0.7 Be(3,3) + 0.3 Be(2,4), inverted to Beta hyperparameters by
# exact rational arithmetic: E = 9/20, V = 113/2800, so L = 580/113.
PE_A_ORACLE = 261.0 / 113.0
PE_B_ORACLE = 319.0 / 113.0
# I(0.3) for N(0,1) against N(1,1): 30-digit mpmath quadrature.
FISHER_03 = 0.87533273948369861486

OVERLAP = KnownDensityPair(Gaussian(0.0, 1.0), Gaussian(1.0, 1.0))
SAME = KnownDensityPair(Gaussian(0.0, 1.0), Gaussian(0.0, 1.0))
# f2 vanishes at x = 0.5 and f1 at x = 2.5.
DISJOINT = KnownDensityPair(Uniform(0.0, 1.0), Uniform(2.0, 3.0))

states = st.tuples(st.floats(0.05, 500.0), st.floats(0.05, 500.0)).map(lambda ab: BetaState(*ab))


def mixture_moments(a, b, w1):
    """Mean and variance of w1 Be(a+1, b) + (1-w1) Be(a, b+1)."""
    L = a + b
    m1, m2 = (a + 1) / (L + 1), a / (L + 1)
    s1 = (a + 1) * (a + 2) / ((L + 1) * (L + 2))
    s2 = a * (a + 1) / ((L + 1) * (L + 2))
    mean = w1 * m1 + (1 - w1) * m2
    return mean, w1 * s1 + (1 - w1) * s2 - mean * mean


# -- responsibility ---------------------------------------------------------------

def test_responsibility_values():
    assert wf.responsibility(SAME, BetaState(3.0, 3.0), 0.7) == 0.5
    assert wf.responsibility(DISJOINT, BetaState(1.0, 5.0), 0.5) == 1.0
    assert wf.responsibility(SAME, BetaState(2.0, 1.0), -1.0) == pytest.approx(2 / 3, rel=1e-15)


def test_degenerate_observation():
    with pytest.raises(DegenerateObservationError):
        wf.responsibility(DISJOINT, BetaState(1.0, 1.0), 1.5)
    for update in (wf.quasi_bayes_update, wf.pe_update, wf.vb_recursive_update, wf.kl_update):
        with pytest.raises(DegenerateObservationError):
            update(DISJOINT, BetaState(1.0, 1.0), 1.5)


def test_responsibility_far_tail():
    w = wf.responsibility(OVERLAP, BetaState(1.0, 1.0), -80.0)
    assert 0.0 <= w <= 1.0 and w > 0.99


# -- quasi-Bayes, confirmed, VB ------------------------------------------------------

def test_quasi_bayes_examples():
    s, d = wf.quasi_bayes_update(SAME, BetaState(1.0, 1.0), 0.2)
    assert s.as_tuple() == (1.5, 1.5) and d.mass_increment == 1.0
    s, _ = wf.quasi_bayes_update(DISJOINT, BetaState(1.0, 1.0), 0.5)
    assert s.as_tuple() == (2.0, 1.0)


def test_confirmed_examples():
    assert wf.confirmed_update(BetaState(1.0, 1.0), 1).as_tuple() == (2.0, 1.0)
    assert wf.confirmed_update(BetaState(1.0, 1.0), 2).as_tuple() == (1.0, 2.0)
    s = BetaState(1.0, 1.0)
    for z in [1, 2, 2, 1, 1, 2, 1]:
        s = wf.confirmed_update(s, z)
    assert s.mass == 9.0
    with pytest.raises(InvalidLabelError):
        wf.confirmed_update(s, 0)


def test_vb_symmetric_case():
    s, d = wf.vb_recursive_update(SAME, BetaState(2.5, 2.5), 0.3)
    assert d.w1 == pytest.approx(0.5, abs=1e-15)
    assert s.as_tuple() == pytest.approx((3.0, 3.0), abs=1e-15)


def test_vb_weights_approach_responsibility():
    x, E = 0.4, 0.3
    for L in (1e2, 1e4, 1e6):
        state = BetaState(E * L, (1 - E) * L)
        _, d = wf.vb_recursive_update(OVERLAP, state, x)
        gap = abs(d.w1 - wf.responsibility(OVERLAP, state, x))
        assert gap < 2.0 / L
    # exp(psi(a) - psi(a+b)) tends to a / (a+b).
    assert math.exp(digamma(3e5) - digamma(1e6)) == pytest.approx(0.3, rel=1e-5)


@settings(max_examples=60, deadline=None)
@given(states, st.floats(-4.0, 5.0))
def test_unit_mass_rules(state, x):
    for update in (wf.quasi_bayes_update, wf.vb_recursive_update):
        new, diag = update(OVERLAP, state, x)
        assert new.mass == pytest.approx(state.mass + 1.0, rel=1e-15)
        assert 0.0 <= diag.w1 <= 1.0


# -- probabilistic editor --------------------------------------------------------------

def test_pe_oracle_case():
    A, B, w1, mean = wf.pe_step(2.0, 3.0, math.log(3.5), 0.0)
    assert w1 == pytest.approx(0.7, rel=1e-15)
    assert mean == pytest.approx(9 / 20, rel=1e-15)
    assert A == pytest.approx(PE_A_ORACLE, rel=1e-14)
    assert B == pytest.approx(PE_B_ORACLE, rel=1e-14)


def test_pe_uninformative_observation_is_fixed_point():
    state = BetaState(2.7, 4.1)
    new, diag = wf.pe_update(SAME, state, 0.9)
    assert new.as_tuple() == pytest.approx(state.as_tuple(), rel=1e-14)
    assert diag.mass_increment == pytest.approx(0.0, abs=1e-12)


def test_pe_certain_label_is_conjugate():
    new, _ = wf.pe_update(DISJOINT, BetaState(2.0, 5.0), 0.5)
    assert new.as_tuple() == pytest.approx((3.0, 5.0), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(states, st.floats(0.0, 1.0))
def test_pe_matches_mixture_moments(state, w1):
    w1 = min(max(w1, 1e-9), 1 - 1e-9)
    l1 = math.log(w1 / state.a)
    l2 = math.log((1 - w1) / state.b)
    A, B, got_w1, _ = wf.pe_step(state.a, state.b, l1, l2)
    mean, var = mixture_moments(state.a, state.b, got_w1)
    new = BetaState(float(A), float(B))
    assert new.mean == pytest.approx(mean, rel=1e-10)
    assert new.variance == pytest.approx(var, rel=1e-10)


def test_pe_mass_increment_bound():
    # Expanding the exact mass update gives
    # increment - (1 - eps) = -eps/(L+1) + eps^2 (L+2) / ((L+1)^2 (1 + eps/(L+1))),
    # so the 10/L bound holds whenever eps <= 2.7; interior means keep eps <= 1.6.
    rng = np.random.default_rng(11)
    for interior in (True, False):
        for _ in range(300):
            L = rng.uniform(100, 1e5)
            E = rng.uniform(0.2, 0.8) if interior else rng.uniform(0.01, 0.99)
            state = BetaState(E * L, (1 - E) * L)
            new, d = wf.pe_update(OVERLAP, state, rng.normal(0.5, 2))
            assert d.mass_increment <= 1.0 + 1e-9
            gap = abs(d.mass_increment - wf.approximate_mass_increment(d.w1, new.mean))
            eps = d.epsilon
            assert gap <= (eps + 1.01 * eps * eps) / L + 1e-9
            if interior:
                assert gap <= 10.0 / L
            assert eps == pytest.approx(d.w1 * (1 - d.w1) / (new.mean * (1 - new.mean)), rel=1e-12)


def test_pe_agrees_with_enumeration_after_one_step():
    state = BetaState(1.5, 2.5)
    new, _ = wf.pe_update(OVERLAP, state, 0.3)
    exact, _ = exact_beta_posterior(OVERLAP, state, [0.3])
    assert new.mean == pytest.approx(exact.mean, rel=1e-12)
    assert new.variance == pytest.approx(exact.variance, rel=1e-12)


# -- KL ----------------------------------------------------------------------------

def test_kl_uninformative_is_fixed_point():
    state = BetaState(3.3, 1.7)
    new, _ = wf.kl_update(SAME, state, 0.1)
    assert new.as_tuple() == pytest.approx(state.as_tuple(), rel=1e-9)


def test_kl_certain_label():
    # With f2(x) = 0 the exact posterior is Be(a+1, b), whose expected logs
    # are exactly the KL targets, so the solver must return (a+1, b).
    for a, b in ((2.0, 3.0), (50.0, 70.0), (400.0, 600.0)):
        new, _ = wf.kl_update(DISJOINT, BetaState(a, b), 0.5)
        assert new.as_tuple() == pytest.approx((a + 1.0, b), rel=1e-9)


def test_kl_targets_are_expected_logs():
    a, b, w1 = 2.0, 3.0, 0.7
    r1, r2 = wf.kl_targets(a, b, w1)
    g1a, g2a = digamma_system(a + 1, b)
    g1b, g2b = digamma_system(a, b + 1)
    assert r1 == pytest.approx(w1 * g1a + (1 - w1) * g1b, rel=1e-13)
    assert r2 == pytest.approx(w1 * g2a + (1 - w1) * g2b, rel=1e-13)


def test_kl_close_to_pe_at_large_mass():
    rng = np.random.default_rng(12)
    for x in rng.normal(0.3, 1.2, 50):
        state = BetaState(3000.0, 7000.0)
        kl, _ = wf.kl_update(OVERLAP, state, x)
        pe, _ = wf.pe_update(OVERLAP, state, x)
        assert abs(kl.a - pe.a) / pe.a < 1e-3 and abs(kl.b - pe.b) / pe.b < 1e-3


def test_kl_reports_solver_failure():
    with pytest.raises(ConvergenceError):
        wf.kl_update(OVERLAP, BetaState(0.2, 0.3), 4.0, SolverSettings(max_iterations=1, tolerance=1e-15))


def test_vectorized_kernels_match_scalar_api():
    rng = np.random.default_rng(13)
    a, b = rng.uniform(0.5, 20, 6), rng.uniform(0.5, 20, 6)
    x = rng.normal(0.5, 1.5, 6)
    logs = OVERLAP.log_evaluate(x)
    A, B, _, _ = wf.pe_step(a, b, logs[:, 0], logs[:, 1])
    Ak, Bk, _ = wf.kl_step(a, b, logs[:, 0], logs[:, 1])
    for i in range(6):
        pe, _ = wf.pe_update(OVERLAP, BetaState(a[i], b[i]), x[i])
        kl, _ = wf.kl_update(OVERLAP, BetaState(a[i], b[i]), x[i])
        assert (A[i], B[i]) == pytest.approx(pe.as_tuple(), rel=1e-15)
        assert (Ak[i], Bk[i]) == pytest.approx(kl.as_tuple(), rel=1e-12)


# -- expectation propagation --------------------------------------------------------

def test_ep_single_observation_is_adf():
    prior = BetaState(1.0, 1.0)
    res = wf.ep_fit(OVERLAP, prior, [0.4], max_sweeps=1)
    pe, _ = wf.pe_update(OVERLAP, prior, 0.4)
    assert res.history[0].as_tuple() == pytest.approx(pe.as_tuple(), rel=1e-15)


def test_ep_uninformative_data():
    prior = BetaState(2.0, 3.0)
    res = wf.ep_fit(SAME, prior, np.linspace(-1, 1, 7))
    assert res.converged
    assert res.state.as_tuple() == pytest.approx(prior.as_tuple(), rel=1e-14)
    assert all(abs(s.da) < 1e-13 and abs(s.db) < 1e-13 for s in res.sites)


@pytest.mark.parametrize("rule", ["moment-match", "KL"])
def test_ep_order_invariance(rule):
    rng = np.random.default_rng(14)
    data = rng.normal(0.5, 1.2, 10)
    tol = 1e-10
    first = wf.ep_fit(OVERLAP, BetaState(1.0, 1.0), data, rule, max_sweeps=200, tolerance=tol)
    second = wf.ep_fit(OVERLAP, BetaState(1.0, 1.0), rng.permutation(data), rule, max_sweeps=200, tolerance=tol)
    assert first.converged and second.converged
    assert abs(first.state.a - second.state.a) <= 10 * tol
    assert abs(first.state.b - second.state.b) <= 10 * tol


def test_ep_state_is_prior_plus_sites():
    rng = np.random.default_rng(15)
    prior = BetaState(1.0, 2.0)
    res = wf.ep_fit(OVERLAP, prior, rng.normal(0.3, 1.0, 15))
    assert res.state.a == pytest.approx(prior.a + sum(s.da for s in res.sites), rel=1e-10)
    assert res.state.b == pytest.approx(prior.b + sum(s.db for s in res.sites), rel=1e-10)


def test_ep_reports_non_convergence():
    rng = np.random.default_rng(16)
    res = wf.ep_fit(OVERLAP, BetaState(1.0, 1.0), rng.normal(0.3, 1.0, 20), max_sweeps=1)
    assert not res.converged and res.sweeps_used == 1
    assert res.state.a > 0 and res.state.b > 0


def test_ep_rejects_unknown_rule():
    with pytest.raises(ValueError):
        wf.ep_fit(OVERLAP, BetaState(1.0, 1.0), [0.0], update_rule="vb")


# -- asymptotic variances --------------------------------------------------------------

def test_asymptotic_variances():
    v = wf.asymptotic_variances(OVERLAP, 0.3, 1000)
    assert v.V_CO == v.V_QB == v.V_VA == pytest.approx(0.21 / 1000, rel=1e-15)
    assert v.V_ML == pytest.approx(v.V_PE, rel=1e-6)
    assert v.V_ML == pytest.approx(1 / (1000 * FISHER_03), rel=1e-9)
    assert set(v.as_dict()) == {"V_CO", "V_QB", "V_VA", "V_ML", "V_PE"}


def test_asymptotic_variances_zero_information():
    with pytest.raises(ZeroInformationError):
        wf.asymptotic_variances(SAME, 0.4, 100)


def test_fisher_reference_value():
    assert fisher_information_beta(OVERLAP, 0.3) == pytest.approx(FISHER_03, rel=1e-10)
