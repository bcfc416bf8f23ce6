"""
Multiview SBM Test - Permutation Inference
==========================================

P2LRT permutation tests for two networks and for a network plus a feature
matrix, the G-test baseline on hard labels, and p-values.

Single-view fits do not change when one view's nodes are permuted, so they
are computed once; each replicate only re-estimates C.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from dataclasses_json import dataclass_json
from joblib import Parallel, delayed
from scipy.special import xlogy
from scipy.stats.contingency import crosstab

from .coupling import ComponentDensityMatrix, p2lrt_statistic
from .exceptions import MultiviewError, ReplicateError
from .models import TestConfig
from .netcore import AdjacencyView
from .pseudolik import (
    BlockCounts,
    GaussianMixtureFit,
    MultinomialMixtureFit,
    block_counts,
    fit_gaussian_mixture,
    fit_multinomial_mixture,
    gaussian_log_density_matrix,
    multinomial_log_density_matrix,
)
from .simgen import derive_rng
from .spectral import SpectralDiagnostics, estimate_num_communities, spectral_cluster_perturbed

logger = logging.getLogger(__name__)

KSpec = Union[int, str]


@dataclass_json
@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    test: str
    statistic: float
    perm_statistics: List[float]
    p_value: float
    M: int
    seed: int
    k_used: Tuple[int, int]
    k_source: str
    fitted: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    runtime_ms: float = 0.0

    def summary(self) -> Dict[str, Any]:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "M": self.M,
            "seed": self.seed,
            "k1": self.k_used[0],
            "k2": self.k_used[1],
            "k_source": self.k_source,
            "runtime_ms": self.runtime_ms,
        }

    @property
    def coupling(self) -> Optional[np.ndarray]:
        return np.asarray(self.fitted["C"]) if "C" in self.fitted else None


def compute_pvalue(observed: float, perms: Sequence[float], plus_one: bool = False) -> float:
    """count{observed <= perm_m} / M, or (1 + count) / (1 + M)"""
    perms = np.asarray(perms, dtype=float)
    if perms.size == 0:
        raise MultiviewError("at least one permutation statistic is required")
    if not np.isfinite(observed):
        raise MultiviewError("observed statistic must be finite")
    count = int(np.sum(observed <= perms))
    if plus_one:
        return (1 + count) / (1 + perms.size)
    return count / perms.size


# =============================================================================
# SINGLE-VIEW FITS
# =============================================================================

@dataclass
class NetworkViewFit:
    labels: np.ndarray          # spectral labels, 1-based
    counts: BlockCounts
    mixture: MultinomialMixtureFit
    log_density: np.ndarray     # n x K
    spectral: SpectralDiagnostics
    k_estimated: bool = False

    @property
    def K(self) -> int:
        return self.mixture.K

    @property
    def pi(self) -> np.ndarray:
        return self.mixture.pi

    def permuted_log_density(self, perm: np.ndarray) -> np.ndarray:
        """Log densities after permuting rows of the block counts and degrees"""
        return multinomial_log_density_matrix(self.counts.permuted(perm), self.mixture.eta)

    def params(self) -> Dict[str, Any]:
        return {"eta": self.mixture.eta.tolist()}


@dataclass
class FeatureViewFit:
    mixture: GaussianMixtureFit
    log_density: np.ndarray

    @property
    def K(self) -> int:
        return self.mixture.K

    @property
    def pi(self) -> np.ndarray:
        return self.mixture.pi

    @property
    def k_estimated(self) -> bool:
        return self.mixture.k_estimated

    @property
    def labels(self) -> np.ndarray:
        return self.mixture.labels()

    def permuted_log_density(self, perm: np.ndarray) -> np.ndarray:
        return self.log_density[perm]

    def params(self) -> Dict[str, Any]:
        return {"mu": self.mixture.mu.tolist(), "sigma": self.mixture.sigma.tolist()}


def fit_network_view(
    A: AdjacencyView, K: KSpec, cfg: Optional[TestConfig] = None, rng: Optional[np.random.Generator] = None
) -> NetworkViewFit:
    """Spectral labels -> block counts -> multinomial mixture EM"""
    cfg = cfg or TestConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    estimated = K == "auto"
    k = estimate_num_communities(A) if estimated else int(K)
    k = min(k, A.n)
    clustering = spectral_cluster_perturbed(A, k, cfg.spectral, rng)
    counts = block_counts(A, clustering.labels, k)
    mixture = fit_multinomial_mixture(counts, k, clustering.labels, cfg.em)
    return NetworkViewFit(
        labels=clustering.labels,
        counts=counts,
        mixture=mixture,
        log_density=multinomial_log_density_matrix(counts, mixture.eta),
        spectral=clustering.diagnostics,
        k_estimated=estimated,
    )


def fit_feature_view(
    Y: np.ndarray, K: KSpec, cfg: Optional[TestConfig] = None, rng: Optional[np.random.Generator] = None
) -> FeatureViewFit:
    cfg = cfg or TestConfig()
    mixture = fit_gaussian_mixture(Y, K, cfg.em, rng)
    return FeatureViewFit(mixture, gaussian_log_density_matrix(Y, mixture.mu, mixture.sigma))


# =============================================================================
# PERMUTATION LOOP
# =============================================================================

def _guarded(fn: Callable[[int], Any], index: int):
    try:
        return fn(index)
    except Exception as e:
        raise ReplicateError(index, e) from e


def run_replicates(fn: Callable[[int], Any], M: int, n_jobs: int = 1) -> List[Any]:
    """fn(1), ..., fn(M) in index order, serial or threaded"""
    if n_jobs == 1:
        return [_guarded(fn, m) for m in range(1, M + 1)]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_guarded)(fn, m) for m in range(1, M + 1))


def _k_source(*estimated: bool) -> str:
    if all(estimated):
        return "estimated"
    if any(estimated):
        return "mixed"
    return "given"


def p2lrt_from_views(
    view1: NetworkViewFit,
    view2: Union[NetworkViewFit, FeatureViewFit],
    M: int,
    cfg: Optional[TestConfig] = None,
    master_seed: int = 0,
    test_name: str = "p2lrt",
) -> TestResult:
    """Observed statistic plus M permutation replicates from fitted views"""
    cfg = cfg or TestConfig()
    if M < 1:
        raise MultiviewError("M must be at least 1")
    started = time.perf_counter()
    pi1, pi2 = view1.pi, view2.pi
    n = view1.log_density.shape[0]

    observed, fit = p2lrt_statistic(ComponentDensityMatrix(view1.log_density, view2.log_density), pi1, pi2, cfg.optimizer)
    logger.info("%s: observed statistic %.6g (K = %d, %d)", test_name, observed, view1.K, view2.K)

    def replicate(m: int):
        perm = derive_rng(master_seed, m).permutation(n)
        gd = ComponentDensityMatrix(view1.log_density, view2.permuted_log_density(perm))
        stat, rep_fit = p2lrt_statistic(gd, pi1, pi2, cfg.optimizer)
        return stat, rep_fit.stalled

    results = run_replicates(replicate, M, cfg.n_jobs)
    perms = [stat for stat, _ in results]
    p_value = compute_pvalue(observed, perms, cfg.plus_one_pvalue)
    logger.info("%s: p-value %.4g over %d permutations", test_name, p_value, M)

    return TestResult(
        test=test_name,
        statistic=float(observed),
        perm_statistics=[float(s) for s in perms],
        p_value=float(p_value),
        M=M,
        seed=master_seed,
        k_used=(view1.K, view2.K),
        k_source=_k_source(view1.k_estimated, view2.k_estimated),
        fitted={
            "pi1": pi1.tolist(),
            "pi2": pi2.tolist(),
            "C": fit.C.tolist(),
            "eta1": view1.mixture.eta.tolist(),
            "view2": view2.params(),
        },
        diagnostics={
            "optimizer_iterations": fit.iterations,
            "optimizer_converged": fit.converged,
            "optimizer_stalled": fit.stalled,
            "marginal_violation": fit.violation,
            "objective_trace": [float(v) for v in fit.trace],
            "stalled_replicates": int(sum(stalled for _, stalled in results)),
            "em_converged": [view1.mixture.converged, view2.mixture.converged],
            "empty_clusters": view1.spectral.empty_clusters,
        },
        runtime_ms=(time.perf_counter() - started) * 1000.0,
    )


def permutation_test_networks(
    A1: AdjacencyView,
    A2: AdjacencyView,
    K1: KSpec,
    K2: KSpec,
    M: int,
    cfg: Optional[TestConfig] = None,
    master_seed: int = 0,
) -> TestResult:
    """P2LRT of independent communities in two networks on the same nodes"""
    if A1.n != A2.n:
        raise MultiviewError(f"views have {A1.n} and {A2.n} nodes")
    cfg = cfg or TestConfig()
    started = time.perf_counter()
    view1 = fit_network_view(A1, K1, cfg, derive_rng(master_seed, 0, 1))
    view2 = fit_network_view(A2, K2, cfg, derive_rng(master_seed, 0, 2))
    result = p2lrt_from_views(view1, view2, M, cfg, master_seed, "p2lrt-networks")
    result.diagnostics["empty_clusters"] = [view1.spectral.empty_clusters, view2.spectral.empty_clusters]
    result.runtime_ms = (time.perf_counter() - started) * 1000.0
    return result


def permutation_test_net_cov(
    A: AdjacencyView,
    Y: np.ndarray,
    K1: KSpec,
    K2: KSpec,
    M: int,
    cfg: Optional[TestConfig] = None,
    master_seed: int = 0,
) -> TestResult:
    """P2LRT of independence between network communities and feature clusters"""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != A.n:
        raise MultiviewError(f"network has {A.n} nodes, feature matrix has {Y.shape[0]} rows")
    cfg = cfg or TestConfig()
    started = time.perf_counter()
    view1 = fit_network_view(A, K1, cfg, derive_rng(master_seed, 0, 1))
    view2 = fit_feature_view(Y, K2, cfg, derive_rng(master_seed, 0, 2))
    result = p2lrt_from_views(view1, view2, M, cfg, master_seed, "p2lrt-netcov")
    result.diagnostics["bic_path"] = view2.mixture.bic_path
    result.runtime_ms = (time.perf_counter() - started) * 1000.0
    return result


# =============================================================================
# G-TEST BASELINE
# =============================================================================

def g_statistic(labels1: Sequence[int], labels2: Sequence[int]) -> float:
    """G = 2 sum_{O > 0} O log(O / E) on the joint label table"""
    table = crosstab(np.asarray(labels1), np.asarray(labels2)).count.astype(float)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    return float(2.0 * np.sum(xlogy(table, table / expected)))


def g_test(
    labels1: Sequence[int],
    labels2: Sequence[int],
    M: int,
    master_seed: int = 0,
    plus_one: bool = False,
    n_jobs: int = 1,
) -> TestResult:
    """G-test of independence between two label vectors, calibrated by permuting labels2"""
    labels1 = np.asarray(labels1)
    labels2 = np.asarray(labels2)
    if labels1.shape != labels2.shape or labels1.ndim != 1:
        raise MultiviewError("label vectors must have the same length")
    if M < 1:
        raise MultiviewError("M must be at least 1")
    started = time.perf_counter()
    observed = g_statistic(labels1, labels2)

    def replicate(m: int) -> float:
        return g_statistic(labels1, derive_rng(master_seed, m).permutation(labels2))

    perms = run_replicates(replicate, M, n_jobs)
    return TestResult(
        test="g-test",
        statistic=observed,
        perm_statistics=[float(s) for s in perms],
        p_value=float(compute_pvalue(observed, perms, plus_one)),
        M=M,
        seed=master_seed,
        k_used=(int(np.unique(labels1).size), int(np.unique(labels2).size)),
        k_source="given",
        runtime_ms=(time.perf_counter() - started) * 1000.0,
    )
