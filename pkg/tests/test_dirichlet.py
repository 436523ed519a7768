import itertools

import numpy as np
import pytest

from mixfilter import dirichlet as dr
from mixfilter import weight as wf
from mixfilter.densities import Gaussian, KnownDensityPair, KnownDensitySet, Uniform
from mixfilter.errors import DegenerateObservationError, DomainError, InvalidLabelError
from mixfilter.states import BetaState, DirichletState

TRIPLE = KnownDensitySet([Gaussian(-2.0, 1.0), Gaussian(0.0, 1.0), Uniform(0.0, 4.0)])
SAME3 = KnownDensitySet([Gaussian(0.0, 1.0)] * 3)
PAIR = KnownDensityPair(Gaussian(0.0, 1.0), Gaussian(1.0, 1.0))


def mixture_moments(alpha, w):
    """Means and covariance of sum_j w_j Dir(alpha + e_j), by brute force
    over the components."""
    J = len(alpha)
    mean = np.zeros(J)
    second = np.zeros((J, J))
    for j in range(J):
        comp = DirichletState(tuple(np.asarray(alpha) + np.eye(J)[j]))
        m = comp.means
        mean += w[j] * m
        second += w[j] * (comp.covariance() + np.outer(m, m))
    return mean, second - np.outer(mean, mean)


def test_responsibility_cases():
    state = DirichletState((1.0, 2.0, 3.0))
    assert np.allclose(dr.dir_responsibilities(SAME3, state, 0.4), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    one_hot = KnownDensitySet([Uniform(0.0, 1.0), Uniform(2.0, 3.0), Uniform(4.0, 5.0)])
    assert np.array_equal(dr.dir_responsibilities(one_hot, state, 0.5), [1.0, 0.0, 0.0])
    with pytest.raises(DegenerateObservationError):
        dr.dir_responsibilities(one_hot, state, 1.5)
    beta = wf.responsibility(PAIR, BetaState(2.0, 3.0), 0.7)
    assert dr.dir_responsibilities(PAIR, DirichletState((2.0, 3.0)), 0.7)[0] == pytest.approx(beta, rel=1e-15)


def test_size_mismatch():
    with pytest.raises(DomainError):
        dr.dir_responsibilities(TRIPLE, DirichletState((1.0, 1.0)), 0.0)


@pytest.mark.parametrize("policy", dr.POLICIES)
def test_two_cells_reduce_to_beta(policy):
    rng = np.random.default_rng(20)
    for _ in range(100):
        a, b = rng.uniform(0.1, 50, 2)
        x = rng.normal(0.5, 1.5)
        beta, _ = wf.pe_update(PAIR, BetaState(a, b), x)
        got = dr.dir_pe_update(PAIR, DirichletState((a, b)), x, policy)
        assert got.alpha == pytest.approx(beta.as_tuple(), rel=1e-10)


def test_quasi_bayes_reductions():
    state = DirichletState((1.0, 2.0, 3.0))
    new = dr.dir_quasi_bayes_update(SAME3, DirichletState((2.0, 2.0, 2.0)), 0.0)
    assert new.alpha == pytest.approx((2 + 1 / 3,) * 3, rel=1e-15)
    assert dr.dir_quasi_bayes_update(TRIPLE, state, 1.0).mass == pytest.approx(state.mass + 1, rel=1e-15)
    one_hot = KnownDensitySet([Uniform(0.0, 1.0), Uniform(2.0, 3.0), Uniform(4.0, 5.0)])
    assert dr.dir_quasi_bayes_update(one_hot, state, 2.5).alpha == dr.dir_confirmed_update(state, 2).alpha
    qb, _ = wf.quasi_bayes_update(PAIR, BetaState(2.0, 3.0), 0.2)
    assert dr.dir_quasi_bayes_update(PAIR, DirichletState((2.0, 3.0)), 0.2).alpha == pytest.approx(qb.as_tuple(), rel=1e-15)


def test_confirmed_labels():
    state = DirichletState((1.0, 1.0, 1.0))
    assert dr.dir_confirmed_update(state, 3).alpha == (1.0, 1.0, 2.0)
    for bad in (0, 4, 1.0):
        with pytest.raises(InvalidLabelError):
            dr.dir_confirmed_update(state, bad)


@pytest.mark.parametrize("policy", dr.POLICIES)
def test_uninformative_observation_is_fixed_point(policy):
    state = DirichletState((1.5, 2.5, 4.0))
    new = dr.dir_pe_update(SAME3, state, 0.3, policy)
    assert np.allclose(new.alpha, state.alpha, rtol=0, atol=1e-12)
    var, cov = dr.second_moment_residuals(SAME3, state, 0.3, state.mass)
    assert np.max(np.abs(var)) < 1e-15 and np.max(np.abs(cov)) < 1e-15


@pytest.mark.parametrize("policy", dr.POLICIES)
def test_means_always_matched(policy):
    rng = np.random.default_rng(21)
    for _ in range(50):
        alpha = rng.uniform(0.2, 30, 3)
        x = rng.normal(0.0, 2.0)
        w = dr.dir_responsibilities(TRIPLE, DirichletState(tuple(alpha)), x)
        new = dr.dir_pe_update(TRIPLE, DirichletState(tuple(alpha)), x, policy)
        assert np.allclose(new.means, (alpha + w) / (alpha.sum() + 1), rtol=0, atol=1e-12)


def test_averaged_equation_holds():
    rng = np.random.default_rng(22)
    for _ in range(50):
        state = DirichletState(tuple(rng.uniform(0.2, 30, 3)))
        x = rng.normal(0.0, 2.0)
        new = dr.dir_pe_update(TRIPLE, state, x, "avg-variance")
        var, _ = dr.second_moment_residuals(TRIPLE, state, x, new.mass)
        assert abs(np.mean(var)) <= 1e-10
        new = dr.dir_pe_update(TRIPLE, state, x, "avg-variance-covariance")
        var, cov = dr.second_moment_residuals(TRIPLE, state, x, new.mass)
        pairs = cov[np.triu_indices(3, 1)]
        assert abs(np.mean(np.concatenate([var, pairs]))) <= 1e-10


def test_residuals_match_brute_force_mixture():
    state = DirichletState((2.0, 3.0, 5.0))
    x, L_trial = 0.4, 8.0
    w = dr.dir_responsibilities(TRIPLE, state, x)
    mean, cov_exact = mixture_moments(state.alpha, w)
    var, cov = dr.second_moment_residuals(TRIPLE, state, x, L_trial)
    trial = DirichletState(tuple(L_trial * mean)).covariance()
    assert np.allclose(var, np.diag(trial) - np.diag(cov_exact), atol=1e-15)
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(cov[off], (trial - cov_exact)[off], atol=1e-15)


def test_two_cells_residuals_vanish_at_pe_mass():
    state = DirichletState((2.0, 3.0))
    new = dr.dir_pe_update(PAIR, state, 0.7)
    var, cov = dr.second_moment_residuals(PAIR, state, 0.7, new.mass)
    assert np.max(np.abs(var)) <= 1e-10 and np.max(np.abs(cov)) <= 1e-10


def test_three_cells_cannot_match_every_moment():
    state = DirichletState((2.0, 3.0, 5.0))
    x = 0.4
    for exact in (False, True):
        cands = dr.mass_candidates(TRIPLE, state, x, exact=exact)
        for i, j in itertools.combinations(range(3), 2):
            assert abs(cands[i] - cands[j]) > 1e-3
    masses = np.linspace(0.5, 40.0, 4000)
    worst = [max(np.max(np.abs(v)), np.max(np.abs(c)))
             for v, c in (dr.second_moment_residuals(TRIPLE, state, x, m) for m in masses)]
    assert min(worst) > 1e-5


def test_policies_coincide():
    rng = np.random.default_rng(23)
    for _ in range(50):
        state = DirichletState(tuple(rng.uniform(0.2, 30, 4)))
        dset = KnownDensitySet([Gaussian(m, 1.0) for m in (-2.0, 0.0, 1.0, 3.0)])
        x = rng.normal(0.5, 2)
        one = dr.dir_pe_update(dset, state, x, "avg-variance")
        two = dr.dir_pe_update(dset, state, x, "avg-variance-covariance")
        assert one.alpha == pytest.approx(two.alpha, rel=1e-10)


def test_unknown_policy():
    with pytest.raises(DomainError):
        dr.dir_pe_update(TRIPLE, DirichletState((1.0, 1.0, 1.0)), 0.0, "max-variance")
