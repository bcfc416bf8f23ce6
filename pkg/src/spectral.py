"""
Multiview SBM Test - Spectral Initialization
============================================

Initial community labels from regularized spectral clustering, and the
Bethe Hessian estimate of the number of communities.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from dataclasses_json import dataclass_json
from joblib import Parallel, delayed
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh
from sklearn.cluster import KMeans

from .exceptions import ConvergenceError, MultiviewError, ParameterError
from .models import SpectralConfig
from .netcore import AdjacencyView, degrees

logger = logging.getLogger(__name__)


@dataclass_json
@dataclass
class SpectralDiagnostics:
    eigenvalues: List[float] = field(default_factory=list)
    kmeans_objective: float = 0.0
    empty_clusters: int = 0
    restart_used: int = 0


@dataclass
class SpectralClustering:
    labels: np.ndarray  # 1-based
    diagnostics: SpectralDiagnostics


def _leading_eigenvectors(A: AdjacencyView, K: int, cfg: SpectralConfig, rng: np.random.Generator):
    """K eigenpairs of A + tau * 11^T with the largest |eigenvalue|"""
    n = A.n
    tau = cfg.regularizer_scale * (2.0 * A.num_edges / n) / n
    adj = A.matrix.astype(float)

    if n <= cfg.dense_threshold or K >= n - 1:
        dense = adj.toarray() + tau
        vals, vecs = np.linalg.eigh(dense)
        order = np.argsort(-np.abs(vals), kind="stable")[:K]
        return vals[order], vecs[:, order]

    op = LinearOperator((n, n), matvec=lambda x: adj @ x + tau * x.sum(), dtype=float)
    v0 = rng.standard_normal(n)
    try:
        vals, vecs = eigsh(op, k=K, which="LM", tol=cfg.eig_tolerance, v0=v0, maxiter=max(1000, 20 * n))
    except ArpackNoConvergence as e:
        raise ConvergenceError(
            "eigensolver did not converge",
            {"converged_eigenvalues": len(e.eigenvalues), "requested": K, "n": n},
        ) from e
    except ArpackError as e:
        raise ConvergenceError(f"eigensolver failed: {e}", {"requested": K, "n": n}) from e
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order], vecs[:, order]


def _kmeans_restart(features: np.ndarray, K: int, seed: int, max_iter: int):
    with warnings.catch_warnings():
        # duplicate rows can leave fewer distinct centres than K; reported as empty clusters instead
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=K, n_init=1, max_iter=max_iter, random_state=seed, algorithm="lloyd")
        labels = km.fit_predict(features)
    return float(km.inertia_), labels


def spectral_cluster_perturbed(
    A: AdjacencyView,
    K: int,
    cfg: Optional[SpectralConfig] = None,
    rng: Optional[np.random.Generator] = None,
    n_jobs: int = 1,
) -> SpectralClustering:
    """
    Regularize A by a constant perturbation, embed nodes with the K leading
    eigenvectors, row-normalize, and run seeded k-means restarts. The best
    objective wins; ties go to the lowest restart index.
    """
    cfg = cfg or SpectralConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    n = A.n
    if not 1 <= K <= n:
        raise ParameterError(f"K must lie in 1..{n}, got {K}")
    if K == 1:
        return SpectralClustering(np.ones(n, dtype=np.int64), SpectralDiagnostics())

    vals, vecs = _leading_eigenvectors(A, K, cfg, rng)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    features = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)

    seeds = rng.integers(0, 2 ** 31 - 1, size=cfg.kmeans_restarts)
    runs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_kmeans_restart)(features, K, int(seed), cfg.kmeans_max_iter) for seed in seeds
    )
    objectives = np.array([obj for obj, _ in runs])
    best = int(np.argmin(objectives))  # first minimum
    labels = runs[best][1].astype(np.int64) + 1

    empty = K - np.unique(labels).size
    if empty:
        logger.warning("spectral clustering left %d of %d clusters empty", empty, K)
    diag = SpectralDiagnostics(
        eigenvalues=[float(v) for v in vals],
        kmeans_objective=float(objectives[best]),
        empty_clusters=int(empty),
        restart_used=best,
    )
    return SpectralClustering(labels, diag)


# =============================================================================
# NUMBER OF COMMUNITIES
# =============================================================================

def bethe_hessian(A: AdjacencyView) -> sparse.csr_matrix:
    """H(rho) = (rho^2 - 1) I - rho A + D with rho = sqrt(sum d^2 / sum d - 1)"""
    d = degrees(A).astype(float)
    if d.sum() == 0:
        raise MultiviewError("the Bethe Hessian needs at least one edge")
    rho = np.sqrt(max(np.sum(d ** 2) / np.sum(d) - 1.0, 0.0))
    n = A.n
    H = (rho ** 2 - 1.0) * sparse.identity(n, format="csr") - rho * A.matrix.astype(float) + sparse.diags(d)
    return H.tocsr()


def _count_negative_sparse(H: sparse.csr_matrix, start: int = 16) -> int:
    n = H.shape[0]
    k = min(start, n - 1)
    while True:
        vals = eigsh(H, k=k, which="SA", return_eigenvectors=False, tol=1e-8, maxiter=max(1000, 20 * n))
        negative = int(np.sum(vals < 0))
        if negative < k or k >= n - 1:
            return negative
        k = min(2 * k, n - 1)


def estimate_num_communities(A: AdjacencyView, dense_threshold: int = 3000) -> int:
    """Number of negative eigenvalues of the Bethe Hessian, at least 1"""
    H = bethe_hessian(A)
    if A.n <= dense_threshold:
        vals = np.linalg.eigvalsh(H.toarray())
        negative = int(np.sum(vals < 0))
    else:
        try:
            negative = _count_negative_sparse(H)
        except ArpackNoConvergence as e:
            raise ConvergenceError("Bethe Hessian eigensolver did not converge", {"n": A.n}) from e
    logger.debug("Bethe Hessian: %d negative eigenvalues", negative)
    return max(negative, 1)
