"""
Simulation generator tests
"""

import numpy as np
import pytest
from scipy import stats

from src.exceptions import InfeasibleParameterError, ParameterError
from src.models import PopularitySpec, SimulationDesign
from src.netcore import degrees
from src.simgen import (
    CouplingMatrix,
    GmmParams,
    SbmParams,
    block_matrix,
    coupling_matrix,
    default_mean_matrix,
    derive_rng,
    draw_popularities,
    sample_dcsbm,
    sample_gmm,
    sample_joint_memberships,
    sample_sbm,
    simulate_dataset,
    uniform_pi,
)


def test_derive_rng_is_reproducible_and_key_sensitive():
    a = derive_rng(7, 1).random(5)
    b = derive_rng(7, 1).random(5)
    c = derive_rng(7, 2).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_coupling_matrix_independence():
    np.testing.assert_array_equal(coupling_matrix(0.0, 3).C, np.ones((3, 3)))


def test_coupling_matrix_perfect_dependence():
    np.testing.assert_array_equal(coupling_matrix(1.0, 2).C, 2 * np.eye(2))


def test_coupling_matrix_half():
    cm = coupling_matrix(0.5, 2)
    np.testing.assert_allclose(cm.C, [[1.5, 0.5], [0.5, 1.5]])
    np.testing.assert_allclose(cm.C @ cm.pi2, [1.0, 1.0])
    np.testing.assert_allclose(cm.C.T @ cm.pi1, [1.0, 1.0])


def test_coupling_matrix_rejects_delta_outside_unit_interval():
    with pytest.raises(ParameterError):
        coupling_matrix(1.2, 3)


def test_coupling_matrix_checks_marginal_constraints():
    with pytest.raises(ParameterError):
        CouplingMatrix(np.array([[2.0, 0.0], [1.0, 1.0]]), uniform_pi(2), uniform_pi(2))


def test_block_matrix_erdos_renyi():
    params = block_matrix(0.5, 0.1, 4)
    np.testing.assert_allclose(params.theta, np.full((4, 4), 0.1))


def test_block_matrix_density_equation():
    params = block_matrix(2.0, 0.02, 6)
    omega = 0.02 / 1.5
    np.testing.assert_allclose(params.theta[0, 1], omega)
    np.testing.assert_allclose(params.theta[0, 0], 4 * omega)
    assert params.expected_density == pytest.approx(0.02)


def test_block_matrix_infeasible():
    with pytest.raises(InfeasibleParameterError, match="infeasible"):
        block_matrix(50.0, 0.6, 2)


def test_block_matrix_empirical_density():
    params = block_matrix(2.0, 0.02, 6)
    rng = derive_rng(3)
    z, _ = sample_joint_memberships(coupling_matrix(0.0, 6), 1500, rng)
    view = sample_sbm(z, params, rng)
    pairs = 1500 * 1499 / 2
    density = view.num_edges / pairs
    se = np.sqrt(0.02 * 0.98 / pairs)
    assert abs(density - 0.02) < 4 * se + 2e-3  # slack for the random block sizes


def test_joint_memberships_perfect_dependence():
    z1, z2 = sample_joint_memberships(coupling_matrix(1.0, 4), 500, derive_rng(1))
    np.testing.assert_array_equal(z1, z2)
    assert set(z1.tolist()) <= {1, 2, 3, 4}


def test_joint_memberships_single_component():
    z1, z2 = sample_joint_memberships(coupling_matrix(0.3, 1), 20, derive_rng(1))
    assert (z1 == 1).all() and (z2 == 1).all()


def test_joint_memberships_independence_frequencies():
    n = 100_000
    z1, z2 = sample_joint_memberships(coupling_matrix(0.0, 3), n, derive_rng(11))
    table = np.zeros((3, 3))
    np.add.at(table, (z1 - 1, z2 - 1), 1)
    np.testing.assert_allclose(table / n, np.full((3, 3), 1 / 9), atol=4 / np.sqrt(n))


def test_sample_sbm_extremes():
    z = np.array([1, 2, 1, 2, 1])
    empty = sample_sbm(z, SbmParams(np.zeros((2, 2)), uniform_pi(2)), derive_rng(0))
    full = sample_sbm(z, SbmParams(np.ones((2, 2)), uniform_pi(2)), derive_rng(0))
    assert empty.num_edges == 0
    assert full.num_edges == 10


def test_sample_sbm_constant_density():
    n = 2000
    view = sample_sbm(np.ones(n, dtype=int), SbmParams(np.array([[0.3]]), np.array([1.0])), derive_rng(5))
    pairs = n * (n - 1) / 2
    assert abs(view.num_edges / pairs - 0.3) < 4 * np.sqrt(0.3 * 0.7 / pairs)


def test_sample_dcsbm_unit_popularity_matches_sbm_density():
    params = SbmParams(np.array([[0.2, 0.05], [0.05, 0.2]]), uniform_pi(2))
    z = np.repeat([1, 2], 100)
    rng = derive_rng(9)
    sbm = np.mean([sample_sbm(z, params, rng).num_edges for _ in range(100)])
    dc = np.mean([sample_dcsbm(z, np.ones(200), params, rng).num_edges for _ in range(100)])
    assert abs(sbm - dc) / sbm < 0.02


def test_sample_dcsbm_rejects_probabilities_above_one():
    params = SbmParams(np.array([[0.5]]), np.array([1.0]))
    with pytest.raises(InfeasibleParameterError):
        sample_dcsbm([1, 1, 1], [2.0, 1.5, 0.5], params, derive_rng(0))


def test_two_point_popularities_have_unit_mean():
    delta = draw_popularities(PopularitySpec(), 200_000, derive_rng(2))
    assert set(np.unique(delta).tolist()) == {0.625, 2.5}
    assert delta.mean() == pytest.approx(1.0, abs=0.01)


def test_sample_gmm_small_sigma_recovers_means():
    Y = sample_gmm([1, 2, 3], GmmParams(default_mean_matrix(), 1e-6), derive_rng(0))
    np.testing.assert_allclose(Y[0], [0, 0, 0, 0, 0, 2, 2, 2, 2, 2], atol=1e-4)
    np.testing.assert_allclose(Y[2], [np.sqrt(12)] * 5 + [0] * 5, atol=1e-4)


def test_sample_gmm_mean_zero():
    n = 100_000
    Y = sample_gmm(np.ones(n, dtype=int), GmmParams(np.zeros((3, 1)), 1.0), derive_rng(4))
    np.testing.assert_allclose(Y.mean(axis=0), 0.0, atol=4 / np.sqrt(n))


def test_sample_gmm_deterministic():
    params = GmmParams(default_mean_matrix(), 1.0)
    a = sample_gmm([1, 2, 3, 1], params, derive_rng(8))
    b = sample_gmm([1, 2, 3, 1], params, derive_rng(8))
    np.testing.assert_array_equal(a, b)


def test_simulate_shared_popularity_design():
    design = SimulationDesign(
        generator="dcsbm-shared-popularity", n=50, k1=2, k2=2, delta=0.0,
        theta=[[0.5, 0.25], [0.25, 1.0]],
    )
    data = simulate_dataset(design, derive_rng(21))
    np.testing.assert_array_equal(data.delta1, data.delta2)
    assert ((data.delta1 >= 0.14) & (data.delta1 <= 0.84)).all()
    truth = data.truth(21)
    assert truth.delta1 == truth.delta2


def test_simulate_netcov_has_feature_view():
    design = SimulationDesign(generator="dc-netcov", n=120, k1=3, k2=3, delta=0.9, r=3.0, s=0.05, sigma=1.0)
    data = simulate_dataset(design, derive_rng(2))
    assert data.view2 is None
    assert data.features.shape == (120, 10)
    assert data.delta1 is not None
    assert degrees(data.view1).shape == (120,)


def test_simulate_sbm_full_dependence_equal_labels():
    design = SimulationDesign(generator="sbm", n=100, k1=2, k2=2, delta=1.0, r=3.0, s=0.05)
    data = simulate_dataset(design, derive_rng(0))
    np.testing.assert_array_equal(data.z1, data.z2)


def test_joint_memberships_fit_the_coupling_table():
    coupling = coupling_matrix(0.5, 3)
    expected = coupling.pi1[:, None] * coupling.pi2[None, :] * coupling.C
    table = np.zeros((3, 3))
    for seed in range(20):
        z1, z2 = sample_joint_memberships(coupling, 3000, derive_rng(seed, 4))
        np.add.at(table, (z1 - 1, z2 - 1), 1)
    result = stats.chisquare(table.ravel(), table.sum() * expected.ravel())
    assert result.pvalue > 0.001


def test_dcsbm_degrees_follow_popularities():
    n = 1000
    rng = derive_rng(21)
    z = rng.integers(1, 3, size=n)
    delta = draw_popularities(PopularitySpec(), n, rng)
    view = sample_dcsbm(z, delta, block_matrix(3.0, 0.02, 2), rng)
    assert np.corrcoef(degrees(view), delta)[0, 1] > 0.5


def test_simulate_rejects_asymmetric_theta():
    design = SimulationDesign(generator="sbm", n=20, k1=2, k2=2, theta=[[0.5, 0.2], [0.3, 0.5]])
    with pytest.raises(ParameterError, match="symmetric"):
        simulate_dataset(design, derive_rng(0))
