"""
Multiview SBM Test - Simulation Generators
==========================================

Coupled latent memberships, SBM / DCSBM network views and Gaussian-mixture
feature views. Every generator is a pure function of its inputs and an
explicit numpy Generator; replicates get independent streams from
derive_rng(master_seed, *keys).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from .exceptions import InfeasibleParameterError, ParameterError
from .models import PopularitySpec, SimulationDesign
from .netcore import AdjacencyView

logger = logging.getLogger(__name__)

MARGINAL_ATOL = 1e-8


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for (master_seed, keys...); order-free across workers"""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys)))


# =============================================================================
# PARAMETER TYPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """
    Dependence parameter between two label vectors:
    P(z1 = k, z2 = k') = pi1[k] * pi2[k'] * C[k, k'], with C pi2 = 1 and C^T pi1 = 1.
    """
    C: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        pi1 = np.asarray(self.pi1, dtype=float)
        pi2 = np.asarray(self.pi2, dtype=float)
        if C.shape != (pi1.size, pi2.size):
            raise ParameterError(f"C has shape {C.shape}, expected {(pi1.size, pi2.size)}")
        for name, pi in (("pi1", pi1), ("pi2", pi2)):
            if np.any(pi <= 0) or abs(pi.sum() - 1.0) > MARGINAL_ATOL:
                raise ParameterError(f"{name} must be strictly positive and sum to 1")
        if np.any(C < 0) or not np.all(np.isfinite(C)):
            raise ParameterError("coupling entries must be finite and nonnegative")
        if np.max(np.abs(C @ pi2 - 1)) > MARGINAL_ATOL or np.max(np.abs(C.T @ pi1 - 1)) > MARGINAL_ATOL:
            raise ParameterError("coupling violates the weighted marginal constraints")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "pi1", pi1)
        object.__setattr__(self, "pi2", pi2)

    @property
    def joint(self) -> np.ndarray:
        return self.pi1[:, None] * self.C * self.pi2[None, :]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.C.shape


@dataclass(frozen=True, eq=False)
class SbmParams:
    theta: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        K = pi.size
        if theta.shape != (K, K):
            raise ParameterError(f"theta has shape {theta.shape}, expected {(K, K)}")
        if not np.allclose(theta, theta.T, atol=0, rtol=0):
            raise ParameterError("theta must be symmetric")
        if np.any(theta < 0) or np.any(theta > 1):
            raise InfeasibleParameterError("theta entries must lie in [0, 1]")
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > MARGINAL_ATOL:
            raise ParameterError("pi must lie in the interior of the simplex")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "pi", pi)

    @property
    def K(self) -> int:
        return self.pi.size

    @property
    def expected_density(self) -> float:
        return float(self.pi @ self.theta @ self.pi)


@dataclass(frozen=True, eq=False)
class GmmParams:
    mu: np.ndarray  # p x K
    sigma: float

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        if not np.all(np.isfinite(mu)):
            raise ParameterError("mean matrix must be finite")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        object.__setattr__(self, "mu", mu)


def default_mean_matrix() -> np.ndarray:
    """10 x 3 component means: [0, 0, sqrt(12)] on the first five rows, [2, -2, 0] on the last five"""
    top = np.repeat([[0.0, 0.0, np.sqrt(12.0)]], 5, axis=0)
    bottom = np.repeat([[2.0, -2.0, 0.0]], 5, axis=0)
    return np.vstack([top, bottom])


def uniform_pi(K: int) -> np.ndarray:
    return np.full(K, 1.0 / K)


# =============================================================================
# PARAMETER FAMILIES
# =============================================================================

def coupling_matrix(delta: float, K: int) -> CouplingMatrix:
    """C = (1 - delta) 11^T + delta * K * I with uniform marginals"""
    if not 0.0 <= delta <= 1.0:
        raise ParameterError(f"delta must lie in [0, 1], got {delta}")
    if K < 1:
        raise ParameterError("K must be at least 1")
    C = (1.0 - delta) * np.ones((K, K)) + delta * np.diag(np.full(K, float(K)))
    return CouplingMatrix(C, uniform_pi(K), uniform_pi(K))


def block_matrix(r: float, s: float, K: int, pi: Optional[Sequence[float]] = None) -> SbmParams:
    """
    theta = omega * 11^T + (2r - 1) * omega * I, omega fixed by the expected
    edge density pi^T theta pi = s.
    """
    if r <= 0:
        raise ParameterError("r must be positive")
    if not 0 < s < 1:
        raise ParameterError("s must lie in (0, 1)")
    pi = uniform_pi(K) if pi is None else np.asarray(pi, dtype=float)
    if pi.size != K:
        raise ParameterError("pi must have K entries")

    # density = omega * (1 + (2r - 1) * sum(pi^2)); reduces to s / (1 + (2r - 1)/K) for uniform pi
    denom = 1.0 + (2.0 * r - 1.0) * float(np.sum(pi ** 2))
    omega = s / denom if denom > 0 else -1.0
    diag = 2.0 * r * omega
    if not (0 < omega <= 1 and 0 <= diag <= 1):
        raise InfeasibleParameterError(f"infeasible (r,s,K) = ({r}, {s}, {K})")
    theta = np.full((K, K), omega) + np.eye(K) * (2.0 * r - 1.0) * omega
    return SbmParams(theta, pi)


# =============================================================================
# SAMPLERS
# =============================================================================

def sample_joint_memberships(
    coupling: CouplingMatrix, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """n i.i.d. label pairs, 1-based"""
    K1, K2 = coupling.shape
    joint = coupling.joint.ravel()
    joint = np.clip(joint, 0, None)
    joint = joint / joint.sum()
    cells = rng.choice(K1 * K2, size=n, p=joint)
    z1, z2 = np.divmod(cells, K2)
    return z1.astype(np.int64) + 1, z2.astype(np.int64) + 1


def _bernoulli_upper(prob_row, n: int, rng: np.random.Generator) -> AdjacencyView:
    """Draw X_ij ~ Bernoulli(prob_row(i)[j - i - 1]) for i < j, row by row"""
    src: List[np.ndarray] = []
    dst: List[np.ndarray] = []
    for i in range(n - 1):
        p = prob_row(i)
        hits = np.flatnonzero(rng.random(p.size) < p)
        if hits.size:
            src.append(np.full(hits.size, i, dtype=np.int64))
            dst.append(hits + i + 1)
    if not src:
        return AdjacencyView(n, np.empty((0, 2), dtype=np.int64))
    return AdjacencyView(n, np.column_stack([np.concatenate(src), np.concatenate(dst)]))


def _check_labels(z: np.ndarray, K: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.size and (z.min() < 1 or z.max() > K):
        raise ParameterError(f"labels must lie in 1..{K}")
    return z


def sample_sbm(z: Sequence[int], params: SbmParams, rng: np.random.Generator) -> AdjacencyView:
    z0 = _check_labels(z, params.K) - 1
    theta = params.theta
    return _bernoulli_upper(lambda i: theta[z0[i], z0[i + 1:]], z0.size, rng)


def _max_pair_probability(z0: np.ndarray, delta: np.ndarray, theta: np.ndarray) -> float:
    """Largest delta_i delta_j theta_{z_i z_j} over pairs i != j"""
    K = theta.shape[0]
    top = np.zeros((K, 2))
    for k in range(K):
        members = np.sort(delta[z0 == k])[::-1]
        top[k, : min(2, members.size)] = members[:2]
    worst = 0.0
    for k in range(K):
        for m in range(k, K):
            prod = top[k, 0] * top[k, 1] if k == m else top[k, 0] * top[m, 0]
            worst = max(worst, prod * theta[k, m])
    return worst


def sample_dcsbm(
    z: Sequence[int], delta: Sequence[float], params: SbmParams, rng: np.random.Generator
) -> AdjacencyView:
    z0 = _check_labels(z, params.K) - 1
    delta = np.asarray(delta, dtype=float)
    if delta.shape != z0.shape:
        raise ParameterError("one popularity per node is required")
    if np.any(delta <= 0):
        raise ParameterError("popularities must be positive")
    worst = _max_pair_probability(z0, delta, params.theta)
    if worst > 1.0:
        raise InfeasibleParameterError(f"edge probability {worst:.4f} exceeds 1 for some node pair")
    theta = params.theta
    return _bernoulli_upper(lambda i: delta[i] * delta[i + 1:] * theta[z0[i], z0[i + 1:]], z0.size, rng)


def sample_gmm(z2: Sequence[int], params: GmmParams, rng: np.random.Generator) -> np.ndarray:
    z0 = _check_labels(z2, params.mu.shape[1]) - 1
    means = params.mu[:, z0].T
    return means + params.sigma * rng.standard_normal(means.shape)


def draw_popularities(spec: PopularitySpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "two_point":
        return rng.choice(np.asarray(spec.values), size=n, p=np.asarray(spec.probs))
    if spec.kind == "uniform":
        return rng.uniform(spec.low, spec.high, size=n)
    raise ParameterError("shared_with_view1 popularities are copied, not drawn")


# =============================================================================
# SCENARIOS
# =============================================================================

@dataclass_json
@dataclass
class SimulationTruth:
    """Ground truth written next to simulated files"""
    generator: str
    seed: int
    n: int
    z1: List[int]
    z2: List[int]
    delta1: Optional[List[float]] = None
    delta2: Optional[List[float]] = None
    params: dict = field(default_factory=dict)


@dataclass
class SimulatedDataset:
    design: SimulationDesign
    view1: AdjacencyView
    z1: np.ndarray
    z2: np.ndarray
    view2: Optional[AdjacencyView] = None
    features: Optional[np.ndarray] = None
    delta1: Optional[np.ndarray] = None
    delta2: Optional[np.ndarray] = None

    def truth(self, seed: int) -> SimulationTruth:
        return SimulationTruth(
            generator=self.design.generator,
            seed=seed,
            n=self.design.n,
            z1=self.z1.tolist(),
            z2=self.z2.tolist(),
            delta1=None if self.delta1 is None else self.delta1.tolist(),
            delta2=None if self.delta2 is None else self.delta2.tolist(),
            params=self.design.model_dump(),
        )


def design_block_matrix(design: SimulationDesign, K: int) -> SbmParams:
    if design.theta is not None:
        return SbmParams(np.asarray(design.theta, dtype=float), uniform_pi(K))
    return block_matrix(design.r, design.s, K)


def design_coupling(design: SimulationDesign) -> CouplingMatrix:
    if design.k1 == design.k2:
        return coupling_matrix(design.delta, design.k1)
    return CouplingMatrix(np.ones((design.k1, design.k2)), uniform_pi(design.k1), uniform_pi(design.k2))


def simulate_dataset(
    design: SimulationDesign,
    rng: np.random.Generator,
    uniform_range: Tuple[float, float] = (0.14, 0.84),
) -> SimulatedDataset:
    """Draw one data set for any generator kind"""
    n = design.n
    z1, z2 = sample_joint_memberships(design_coupling(design), n, rng)
    theta1 = design_block_matrix(design, design.k1)

    delta1 = delta2 = None
    if design.degree_corrected:
        if design.generator == "dcsbm-shared-popularity":
            default = PopularitySpec(kind="uniform", low=uniform_range[0], high=uniform_range[1])
        else:
            default = PopularitySpec()
        spec = design.popularity or default
        delta1 = draw_popularities(spec, n, rng)
        view1 = sample_dcsbm(z1, delta1, theta1, rng)
    else:
        view1 = sample_sbm(z1, theta1, rng)

    if design.has_feature_view:
        mu = default_mean_matrix() if design.mean_matrix is None else np.asarray(design.mean_matrix, dtype=float)
        if mu.shape[1] != design.k2:
            raise ParameterError(f"mean matrix has {mu.shape[1]} components, k2 = {design.k2}")
        features = sample_gmm(z2, GmmParams(mu, design.sigma), rng)
        return SimulatedDataset(design, view1, z1, z2, features=features, delta1=delta1)

    theta2 = design_block_matrix(design, design.k2)
    if design.degree_corrected:
        if design.generator == "dcsbm-shared-popularity":
            delta2 = delta1.copy()
        else:
            delta2 = draw_popularities(design.popularity or PopularitySpec(), n, rng)
        view2 = sample_dcsbm(z2, delta2, theta2, rng)
    else:
        view2 = sample_sbm(z2, theta2, rng)
    return SimulatedDataset(design, view1, z1, z2, view2=view2, delta1=delta1, delta2=delta2)
