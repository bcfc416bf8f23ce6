"""
Pseudo-likelihood machinery tests: block counts, multinomial pmf, mixture EM
"""

import itertools
import math

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from src import pseudolik
from src.exceptions import FitError, MultiviewError
from src.models import EmConfig
from src.netcore import AdjacencyView
from src.pseudolik import (
    BlockCounts,
    block_counts,
    fit_gaussian_mixture,
    fit_multinomial_mixture,
    gaussian_log_density_matrix,
    hard_labels,
    multinomial_log_density_matrix,
    multinomial_log_pmf,
)
from src.simgen import (
    GmmParams,
    block_matrix,
    coupling_matrix,
    default_mean_matrix,
    derive_rng,
    sample_gmm,
    sample_joint_memberships,
    sample_sbm,
)
from src.spectral import spectral_cluster_perturbed

MONOTONE_SLACK = 1e-9


def assert_monotone(trace):
    diffs = np.diff(np.asarray(trace))
    assert (diffs >= -MONOTONE_SLACK).all()


def test_block_counts_path_graph():
    A = AdjacencyView.from_pairs(3, [(0, 1), (1, 2)])
    bc = block_counts(A, [1, 1, 2], 2)
    assert bc.b.tolist() == [[1, 0], [1, 1], [1, 0]]
    assert bc.d.tolist() == [1, 2, 1]


def test_block_counts_empty_graph():
    bc = block_counts(AdjacencyView.from_pairs(4, []), [1, 2, 1, 2], 2)
    assert not bc.b.any() and not bc.d.any()


def test_block_counts_single_community_equals_degree():
    A = AdjacencyView.from_pairs(4, [(0, 1), (0, 2), (2, 3)])
    bc = block_counts(A, [1, 1, 1, 1], 1)
    np.testing.assert_array_equal(bc.b[:, 0], bc.d)


def test_block_counts_label_out_of_range():
    A = AdjacencyView.from_pairs(3, [(0, 1)])
    with pytest.raises(MultiviewError):
        block_counts(A, [1, 3, 1], 2)


def test_block_counts_permuted_moves_rows():
    bc = BlockCounts(np.array([[1, 0], [2, 1], [0, 3]]), np.array([1, 3, 3]))
    moved = bc.permuted([2, 0, 1])
    assert moved.b.tolist() == [[0, 3], [1, 0], [2, 1]]
    assert moved.d.tolist() == [3, 1, 3]


def test_multinomial_log_pmf_examples():
    assert multinomial_log_pmf([2, 1], 3, [0.5, 0.5]) == pytest.approx(math.log(0.375))
    assert multinomial_log_pmf([0, 0], 0, [0.5, 0.5]) == 0.0
    eps = 1e-6
    assert multinomial_log_pmf([3, 0], 3, [1 - eps, eps]) == pytest.approx(3 * math.log(1 - eps))


def test_multinomial_log_pmf_checks_degree():
    with pytest.raises(MultiviewError):
        multinomial_log_pmf([1, 1], 3, [0.5, 0.5])


def _factorial_pmf(b, eta):
    d = sum(b)
    value = math.factorial(d)
    for count, p in zip(b, eta):
        value *= p ** count / math.factorial(count)
    return value


def _compositions(d, K):
    for cuts in itertools.combinations(range(d + K - 1), K - 1):
        bounds = (-1,) + cuts + (d + K - 1,)
        yield [bounds[i + 1] - bounds[i] - 1 for i in range(K)]


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_multinomial_log_pmf_matches_factorial_oracle(K):
    rng = derive_rng(0, K)
    eta = rng.dirichlet(np.ones(K))
    for d in range(0, 21):
        total = 0.0
        for b in _compositions(d, K):
            exact = _factorial_pmf(b, eta)
            total += exact
            if exact > 0:
                assert multinomial_log_pmf(b, d, eta) == pytest.approx(math.log(exact), rel=1e-10, abs=1e-10)
        assert total == pytest.approx(1.0, rel=1e-10)


def test_log_density_matrix_matches_pmf():
    bc = BlockCounts(np.array([[2, 1], [0, 0], [0, 4]]), np.array([3, 0, 4]))
    eta = np.array([[0.7, 0.3], [0.2, 0.8]])
    dens = multinomial_log_density_matrix(bc, eta)
    for i in range(3):
        for k in range(2):
            assert dens[i, k] == pytest.approx(multinomial_log_pmf(bc.b[i], bc.d[i], eta[k]))
    assert (dens[1] == 0).all()


def _planted(n, r, s, seed, K=2):
    rng = derive_rng(seed)
    z, _ = sample_joint_memberships(coupling_matrix(0.0, K), n, rng)
    return z, sample_sbm(z, block_matrix(r, s, K), rng)


def test_multinomial_single_component_closed_form():
    _, A = _planted(100, 3.0, 0.1, 1)
    bc = block_counts(A, np.ones(100, dtype=int), 1)
    fit = fit_multinomial_mixture(bc, 1, np.ones(100, dtype=int))
    assert fit.iterations == 1
    np.testing.assert_allclose(fit.pi, [1.0])
    np.testing.assert_allclose(fit.eta, bc.b.sum(axis=0, keepdims=True) / bc.d.sum())


def test_multinomial_em_recovers_planted_partition():
    z, A = _planted(1000, 3.0, 0.05, 3)
    zhat = spectral_cluster_perturbed(A, 2, rng=derive_rng(3, 1)).labels
    fit = fit_multinomial_mixture(block_counts(A, zhat, 2), 2, zhat)
    assert adjusted_rand_score(z, fit.labels()) > 0.9
    assert_monotone(fit.trace)
    np.testing.assert_allclose(fit.eta.sum(axis=1), 1.0)
    assert (fit.eta > 0).all()


def test_multinomial_em_is_deterministic():
    _, A = _planted(300, 3.0, 0.05, 8)
    zhat = spectral_cluster_perturbed(A, 2, rng=derive_rng(8, 1)).labels
    bc = block_counts(A, zhat, 2)
    a = fit_multinomial_mixture(bc, 2, zhat)
    b = fit_multinomial_mixture(bc, 2, zhat)
    np.testing.assert_array_equal(a.eta, b.eta)
    assert a.trace == b.trace


def test_multinomial_isolated_nodes_follow_mixing_weights():
    A = AdjacencyView.from_pairs(6, [(0, 1), (1, 2), (0, 2), (3, 4)])
    zhat = np.array([1, 1, 1, 2, 2, 2])
    fit = fit_multinomial_mixture(block_counts(A, zhat, 2), 2, zhat)
    np.testing.assert_allclose(fit.responsibilities[5], fit.pi, atol=1e-8)
    assert_monotone(fit.trace)


def test_multinomial_k_larger_than_n():
    A = AdjacencyView.from_pairs(2, [(0, 1)])
    with pytest.raises(MultiviewError):
        fit_multinomial_mixture(block_counts(A, [1, 1], 3), 3, [1, 1])


def test_hard_labels_ties_go_to_lowest():
    resp = np.array([[0.5, 0.5], [0.2, 0.8]])
    assert hard_labels(resp).tolist() == [1, 2]


def test_gaussian_single_component_closed_form():
    Y = derive_rng(5).normal(size=(200, 4)) * 2.0 + 1.0
    fit = fit_gaussian_mixture(Y, 1)
    mu = Y.mean(axis=0)
    var = np.mean(np.sum((Y - mu) ** 2, axis=1)) / Y.shape[1]
    np.testing.assert_allclose(fit.mu[:, 0], mu)
    np.testing.assert_allclose(fit.sigma[0] ** 2, var)
    direct = np.sum(-0.5 * 4 * np.log(2 * np.pi * var) - np.sum((Y - mu) ** 2, axis=1) / (2 * var))
    assert fit.loglik == pytest.approx(direct, rel=1e-10)


def test_gaussian_log_density_matches_formula():
    Y = np.array([[0.0, 1.0], [2.0, -1.0]])
    mu = np.array([[0.0, 1.0], [0.0, 1.0]])
    sigma = np.array([1.0, 2.0])
    dens = gaussian_log_density_matrix(Y, mu, sigma)
    expected = -np.log(2 * np.pi * 4.0) - ((2 - 1) ** 2 + (-1 - 1) ** 2) / 8.0
    assert dens[1, 1] == pytest.approx(expected)


def test_gaussian_mixture_recovers_three_clusters():
    rng = derive_rng(17)
    z, _ = sample_joint_memberships(coupling_matrix(0.0, 3), 500, rng)
    Y = sample_gmm(z, GmmParams(default_mean_matrix(), 1.0), rng)
    fit = fit_gaussian_mixture(Y, "auto", EmConfig(k_max=6), derive_rng(17, 1))
    assert fit.k_estimated
    assert fit.K == 3
    assert len(fit.bic_path) == 6
    assert fit.bic == min(fit.bic_path)
    assert adjusted_rand_score(z, fit.labels()) > 0.9
    assert_monotone(fit.trace)


def test_gaussian_shared_variance_mode():
    rng = derive_rng(2)
    z, _ = sample_joint_memberships(coupling_matrix(0.0, 3), 300, rng)
    Y = sample_gmm(z, GmmParams(default_mean_matrix(), 1.0), rng)
    fit = fit_gaussian_mixture(Y, 3, EmConfig(variance="shared"), derive_rng(2, 1))
    assert np.allclose(fit.sigma, fit.sigma[0])
    assert_monotone(fit.trace)


def test_auto_k_skips_collapsing_components(monkeypatch):
    fit_fixed = pseudolik._fit_gaussian_fixed_k

    def collapse_at_two(Y, K, cfg, rng):
        if K == 2:
            raise FitError("component 2 collapsed twice", iteration=3)
        return fit_fixed(Y, K, cfg, rng)

    monkeypatch.setattr(pseudolik, "_fit_gaussian_fixed_k", collapse_at_two)
    Y = derive_rng(5).normal(size=(60, 2))
    fit = fit_gaussian_mixture(Y, "auto", EmConfig(k_max=3), derive_rng(5, 1))
    assert fit.bic_path[1] is None
    assert fit.K in (1, 3)
    assert fit.bic == min(b for b in fit.bic_path if b is not None)


def test_auto_k_on_a_handful_of_points():
    Y = derive_rng(0).normal(size=(4, 2))
    fit = fit_gaussian_mixture(Y, "auto", rng=derive_rng(0, 1))
    assert fit.k_estimated
    assert len(fit.bic_path) == 3
    assert fit.bic_path[0] is not None


def test_gaussian_rejects_non_finite_input():
    Y = np.ones((5, 2))
    Y[1, 1] = np.nan
    with pytest.raises(MultiviewError):
        fit_gaussian_mixture(Y, 1)


@pytest.mark.slow
def test_gaussian_auto_k_monte_carlo():
    single = 0
    three = 0
    for seed in range(50):
        Y = derive_rng(seed, 0).normal(size=(500, 5))
        single += fit_gaussian_mixture(Y, "auto", rng=derive_rng(seed, 1)).K == 1
        rng = derive_rng(seed, 2)
        z, _ = sample_joint_memberships(coupling_matrix(0.0, 3), 500, rng)
        Y3 = sample_gmm(z, GmmParams(default_mean_matrix(), 1.0), rng)
        three += fit_gaussian_mixture(Y3, "auto", rng=derive_rng(seed, 3)).K == 3
    assert single >= 45
    assert three >= 40


@pytest.mark.slow
def test_multinomial_em_recovery_monte_carlo():
    hits = 0
    for seed in range(50):
        z, A = _planted(1000, 3.0, 0.05, seed)
        zhat = spectral_cluster_perturbed(A, 2, rng=derive_rng(seed, 1)).labels
        fit = fit_multinomial_mixture(block_counts(A, zhat, 2), 2, zhat)
        hits += adjusted_rand_score(z, fit.labels()) > 0.9
    assert hits >= 45
