"""
Multiview SBM Test - Pseudo-likelihood Fits
===========================================

Block-count sufficient statistics and the single-view mixture fits:

- network view: finite mixture of multinomials over block counts b_i given
  degrees d_i, l_PL(eta, pi) = sum_i log sum_k pi_k g(b_i; d_i, eta_k)
- feature view: spherical Gaussian mixture, optional BIC choice of K

Both fitters record their log-likelihood trace, which EM keeps
non-decreasing.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.cluster import KMeans

from .exceptions import FitError, MultiviewError
from .models import EmConfig
from .netcore import AdjacencyView, degrees

logger = logging.getLogger(__name__)


# =============================================================================
# BLOCK COUNTS
# =============================================================================

@dataclass(frozen=True, eq=False)
class BlockCounts:
    b: np.ndarray  # n x K, b[i, m] = edges from node i into estimated community m
    d: np.ndarray  # degrees

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def K(self) -> int:
        return self.b.shape[1]

    def permuted(self, perm: Sequence[int]) -> "BlockCounts":
        perm = np.asarray(perm, dtype=np.int64)
        return BlockCounts(self.b[perm], self.d[perm])


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((labels.size, K))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


def _validate_labels(zhat: Sequence[int], n: int, K: int) -> np.ndarray:
    z = np.asarray(zhat, dtype=np.int64)
    if z.shape != (n,):
        raise MultiviewError(f"expected {n} labels, got shape {z.shape}")
    if n and (z.min() < 1 or z.max() > K):
        raise MultiviewError(f"labels must lie in 1..{K}")
    return z


def block_counts(A: AdjacencyView, zhat: Sequence[int], K: int) -> BlockCounts:
    z = _validate_labels(zhat, A.n, K)
    membership = np.zeros((A.n, K), dtype=np.int64)
    membership[np.arange(A.n), z - 1] = 1
    b = np.asarray(A.matrix @ membership, dtype=np.int64)
    return BlockCounts(b, degrees(A))


# =============================================================================
# MULTINOMIAL MIXTURE
# =============================================================================

def multinomial_log_pmf(b_i: Sequence[int], d_i: int, eta_k: Sequence[float]) -> float:
    """log g(b_i; d_i, eta_k)"""
    b = np.asarray(b_i, dtype=float)
    eta = np.asarray(eta_k, dtype=float)
    if b.sum() != d_i:
        raise MultiviewError(f"block counts sum to {b.sum():g}, degree is {d_i}")
    if d_i == 0:
        return 0.0
    return float(gammaln(d_i + 1) - gammaln(b + 1).sum() + np.sum(b[b > 0] * np.log(eta[b > 0])))


def multinomial_log_density_matrix(bc: BlockCounts, eta: np.ndarray) -> np.ndarray:
    """n x K matrix of log g(b_i; d_i, eta_k)"""
    b = bc.b.astype(float)
    const = gammaln(bc.d + 1.0) - gammaln(b + 1.0).sum(axis=1)
    return const[:, None] + b @ np.log(eta).T


@dataclass
class MultinomialMixtureFit:
    eta: np.ndarray            # K x K, rows on the simplex
    pi: np.ndarray
    loglik: float
    responsibilities: np.ndarray
    iterations: int
    converged: bool
    trace: List[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.pi.size

    def labels(self) -> np.ndarray:
        return hard_labels(self.responsibilities)


def hard_labels(responsibilities: np.ndarray) -> np.ndarray:
    """1-based argmax, ties to the lowest component"""
    return np.argmax(responsibilities, axis=1).astype(np.int64) + 1


def initial_responsibilities(init: np.ndarray, n: int, K: int, smoothing: float) -> np.ndarray:
    init = np.asarray(init)
    if init.ndim == 1:
        z = _validate_labels(init, n, K)
        resp = _one_hot(z, K)
    else:
        if init.shape != (n, K):
            raise MultiviewError(f"initial responsibilities must have shape {(n, K)}")
        resp = init.astype(float)
    resp = (1.0 - smoothing) * resp + smoothing / K
    return resp / resp.sum(axis=1, keepdims=True)


def _multinomial_m_step(bc: BlockCounts, resp: np.ndarray, floor: float):
    pi = resp.mean(axis=0)
    weighted = resp.T @ bc.b.astype(float)  # K x K
    totals = weighted.sum(axis=1, keepdims=True)
    K = weighted.shape[1]
    eta = np.where(totals > 0, weighted / np.where(totals > 0, totals, 1.0), 1.0 / K)
    eta = np.maximum(eta, floor)
    eta /= eta.sum(axis=1, keepdims=True)
    return pi, eta


def _e_step(log_dens: np.ndarray, pi: np.ndarray):
    # rows with constant log_dens (isolated nodes) get posterior pi, not uniform
    with np.errstate(divide="ignore"):
        log_joint = np.log(pi)[None, :] + log_dens
    row_ll = logsumexp(log_joint, axis=1)
    resp = np.exp(log_joint - row_ll[:, None])
    return float(np.sum(row_ll)), resp


def fit_multinomial_mixture(
    bc: BlockCounts,
    K: int,
    init: Union[Sequence[int], np.ndarray],
    cfg: Optional[EmConfig] = None,
) -> MultinomialMixtureFit:
    """EM for the degree-conditioned pseudo-likelihood of one network view"""
    cfg = cfg or EmConfig()
    n = bc.n
    if K > n:
        raise MultiviewError(f"K = {K} exceeds the number of nodes {n}")
    if bc.K != K:
        raise MultiviewError(f"block counts have {bc.K} columns, K = {K}")

    resp = initial_responsibilities(init, n, K, cfg.init_smoothing)
    tol = cfg.tol * n
    trace: List[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        pi, eta = _multinomial_m_step(bc, resp, cfg.eta_floor)
        ll, resp = _e_step(multinomial_log_density_matrix(bc, eta), pi)
        if not np.isfinite(ll):
            raise FitError("non-finite pseudo-log-likelihood", iteration=iteration)
        trace.append(ll)
        logger.debug("multinomial EM iteration %d: loglik %.6f", iteration, ll)
        if K == 1 or (len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol):
            converged = True
            break

    if not converged:
        logger.warning("multinomial EM stopped at max_iter=%d without converging", cfg.max_iter)
    return MultinomialMixtureFit(
        eta=eta, pi=pi, loglik=trace[-1], responsibilities=resp,
        iterations=iteration, converged=converged, trace=trace,
    )


# =============================================================================
# GAUSSIAN MIXTURE
# =============================================================================

@dataclass
class GaussianMixtureFit:
    mu: np.ndarray        # p x K
    sigma: np.ndarray     # K spherical standard deviations (all equal in shared mode)
    pi: np.ndarray
    loglik: float
    responsibilities: np.ndarray
    iterations: int
    converged: bool
    bic: float
    trace: List[float] = field(default_factory=list)
    k_estimated: bool = False
    bic_path: List[Optional[float]] = field(default_factory=list)  # None where that K collapsed

    @property
    def K(self) -> int:
        return self.pi.size

    def labels(self) -> np.ndarray:
        return hard_labels(self.responsibilities)


def gaussian_log_density_matrix(Y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """n x K matrix of log N(y_i; mu_k, sigma_k^2 I)"""
    Y = np.asarray(Y, dtype=float)
    p = Y.shape[1]
    sq = (
        np.sum(Y ** 2, axis=1)[:, None]
        - 2.0 * Y @ mu
        + np.sum(mu ** 2, axis=0)[None, :]
    )
    sq = np.maximum(sq, 0.0)
    var = np.asarray(sigma, dtype=float) ** 2
    return -0.5 * p * np.log(2.0 * np.pi * var)[None, :] - sq / (2.0 * var[None, :])


def _n_params(K: int, p: int, variance: str) -> int:
    n_var = K if variance == "per_component" else 1
    return K * p + n_var + (K - 1)


def _gaussian_m_step(Y: np.ndarray, resp: np.ndarray, variance: str):
    n, p = Y.shape
    Nk = resp.sum(axis=0)
    pi = Nk / n
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = (Y.T @ resp) / Nk[None, :]
    sq = (
        np.sum(Y ** 2, axis=1)[:, None]
        - 2.0 * Y @ np.nan_to_num(mu)
        + np.sum(np.nan_to_num(mu) ** 2, axis=0)[None, :]
    )
    sq = np.maximum(sq, 0.0)
    scatter = np.sum(resp * sq, axis=0)
    if variance == "shared":
        sigma = np.full(resp.shape[1], np.sqrt(scatter.sum() / (n * p)))
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            sigma = np.sqrt(scatter / (p * Nk))
    return pi, mu, sigma


def _kmeans_labels(Y: np.ndarray, K: int, restarts: int, rng: np.random.Generator) -> np.ndarray:
    if K == 1:
        return np.ones(Y.shape[0], dtype=np.int64)
    km = KMeans(n_clusters=K, n_init=restarts, random_state=int(rng.integers(0, 2 ** 31 - 1)))
    return km.fit_predict(Y).astype(np.int64) + 1


def _fit_gaussian_fixed_k(Y: np.ndarray, K: int, cfg: EmConfig, rng: np.random.Generator) -> GaussianMixtureFit:
    n, p = Y.shape
    if n <= K:
        raise MultiviewError(f"need more observations ({n}) than components ({K})")
    resp = initial_responsibilities(_kmeans_labels(Y, K, cfg.kmeans_restarts, rng), n, K, cfg.init_smoothing)
    tol = cfg.tol * n
    trace: List[float] = []
    reinitialized = set()
    converged = False
    iteration = 0
    while iteration < cfg.max_iter:
        iteration += 1
        pi, mu, sigma = _gaussian_m_step(Y, resp, cfg.variance)
        collapsed = np.flatnonzero(~(sigma >= cfg.sigma_floor) | ~np.isfinite(mu).all(axis=0))
        if collapsed.size:
            again = [int(k) for k in collapsed if int(k) in reinitialized]
            if again:
                raise FitError(f"component {again[0] + 1} collapsed twice", iteration=iteration)
            # reseed each collapsed component at a random observation with the overall spread
            spread = max(float(np.sqrt(np.mean(np.var(Y, axis=0)))), cfg.sigma_floor)
            for k in collapsed:
                reinitialized.add(int(k))
                mu[:, k] = Y[rng.integers(n)]
                sigma[k] = spread
                pi[k] = 1.0 / K
            pi = pi / pi.sum()
            trace = []  # restart the ascent from the repaired state
            logger.warning("Gaussian component(s) %s collapsed; reinitialized", (collapsed + 1).tolist())
        ll, resp = _e_step(gaussian_log_density_matrix(Y, mu, sigma), pi)
        if not np.isfinite(ll):
            raise FitError("non-finite log-likelihood", iteration=iteration)
        trace.append(ll)
        if K == 1 or (len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol):
            converged = True
            break

    bic = -2.0 * trace[-1] + _n_params(K, p, cfg.variance) * np.log(n)
    return GaussianMixtureFit(
        mu=mu, sigma=sigma, pi=pi, loglik=trace[-1], responsibilities=resp,
        iterations=iteration, converged=converged, bic=float(bic), trace=trace,
    )


def fit_gaussian_mixture(
    Y: np.ndarray,
    K: Union[int, str],
    cfg: Optional[EmConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> GaussianMixtureFit:
    """Spherical Gaussian EM; K="auto" picks the BIC minimizer over 1..k_max"""
    cfg = cfg or EmConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or not np.all(np.isfinite(Y)):
        raise MultiviewError("Y must be a finite n x p matrix")

    if K != "auto":
        return _fit_gaussian_fixed_k(Y, int(K), cfg, rng)

    k_max = min(cfg.k_max, Y.shape[0] - 1)
    fits: List[Optional[GaussianMixtureFit]] = []
    for k in range(1, k_max + 1):
        try:
            fits.append(_fit_gaussian_fixed_k(Y, k, cfg, rng))
        except FitError as e:
            # a K whose components keep collapsing drops out of the search
            logger.warning("skipping K = %d in the BIC search: %s", k, e)
            fits.append(None)
    path = [f.bic if f is not None else np.inf for f in fits]
    best = fits[int(np.argmin(path))]
    best.k_estimated = True
    best.bic_path = [f.bic if f is not None else None for f in fits]
    logger.info("BIC chose K = %d for the feature view", best.K)
    return best
