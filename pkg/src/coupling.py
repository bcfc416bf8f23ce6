"""
Multiview SBM Test - Coupling Estimation
========================================

The coupling matrix C ties the two views' latent labels together:
P(z1 = k, z2 = k') = pi1_k pi2_k' C_kk'. With the single-view fits held
fixed, the joint pseudo-log-likelihood is concave in C, and is maximized by
exponentiated gradient ascent with a Sinkhorn projection back onto
{C >= 0 : C pi2 = 1, C^T pi1 = 1}.

Component densities are carried in the log domain with per-row offsets
m_i = max_k log g_ik; only exp(log g - m) enters any product, so nothing
underflows for high-degree nodes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConvergenceError, MultiviewError
from .models import OptimizerConfig
from .simgen import CouplingMatrix

logger = logging.getLogger(__name__)

STATISTIC_SLACK = 1e-9
FLAT_TOL = 1e-13
MARGINAL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class ComponentDensityMatrix:
    log_g1: np.ndarray  # n x K1
    log_g2: np.ndarray  # n x K2

    def __post_init__(self):
        g1 = np.asarray(self.log_g1, dtype=float)
        g2 = np.asarray(self.log_g2, dtype=float)
        if g1.ndim != 2 or g2.ndim != 2 or g1.shape[0] != g2.shape[0]:
            raise MultiviewError(f"density matrices disagree: {g1.shape} vs {g2.shape}")
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise MultiviewError("log component densities must be finite")
        object.__setattr__(self, "log_g1", g1)
        object.__setattr__(self, "log_g2", g2)
        off1 = g1.max(axis=1)
        off2 = g2.max(axis=1)
        object.__setattr__(self, "offset1", off1)
        object.__setattr__(self, "offset2", off2)
        object.__setattr__(self, "scaled1", np.exp(g1 - off1[:, None]))
        object.__setattr__(self, "scaled2", np.exp(g2 - off2[:, None]))

    @property
    def n(self) -> int:
        return self.log_g1.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.log_g1.shape[1], self.log_g2.shape[1]

    def permute_view2(self, perm: Sequence[int]) -> "ComponentDensityMatrix":
        return ComponentDensityMatrix(self.log_g1, self.log_g2[np.asarray(perm, dtype=np.int64)])


@dataclass
class CouplingFit:
    C: np.ndarray
    objective: float
    trace: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stalled: bool = False
    step_size: float = 0.0
    violation: float = 0.0  # marginal violation of C


def _check_inputs(gd: ComponentDensityMatrix, pi1, pi2) -> Tuple[np.ndarray, np.ndarray]:
    pi1 = np.asarray(pi1, dtype=float)
    pi2 = np.asarray(pi2, dtype=float)
    if (pi1.size, pi2.size) != gd.shape:
        raise MultiviewError(f"marginals {(pi1.size, pi2.size)} do not match densities {gd.shape}")
    return pi1, pi2


def _row_mixtures(gd: ComponentDensityMatrix, pi1, pi2, C) -> np.ndarray:
    """q_i = a_i^T diag(pi1) C diag(pi2) b_i on the offset scale"""
    W = pi1[:, None] * C * pi2[None, :]
    return np.einsum("ik,ik->i", gd.scaled1 @ W, gd.scaled2)


def joint_pseudo_loglik(gd: ComponentDensityMatrix, pi1, pi2, C) -> float:
    """sum_i log(g1_i^T diag(pi1) C diag(pi2) g2_i)"""
    pi1, pi2 = _check_inputs(gd, pi1, pi2)
    C = np.asarray(C, dtype=float)
    with np.errstate(divide="ignore"):
        logq = np.log(_row_mixtures(gd, pi1, pi2, C)) + gd.offset1 + gd.offset2
    value = math.fsum(logq)
    if not np.isfinite(value):
        raise MultiviewError("joint pseudo-log-likelihood is not finite")
    return value


def coupling_gradient(gd: ComponentDensityMatrix, pi1, pi2, C) -> np.ndarray:
    """G_kk' = sum_i g1_ik g2_ik' / (g1_i^T diag(pi1) C diag(pi2) g2_i); offsets cancel"""
    pi1, pi2 = _check_inputs(gd, pi1, pi2)
    q = _row_mixtures(gd, pi1, pi2, np.asarray(C, dtype=float))
    return (gd.scaled1 / q[:, None]).T @ gd.scaled2


def coupling_from_joint(P) -> CouplingMatrix:
    P = np.asarray(P, dtype=float)
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-8:
        raise MultiviewError("joint probabilities must be nonnegative and sum to 1")
    pi1 = P.sum(axis=1)
    pi2 = P.sum(axis=0)
    if np.any(pi1 <= 0) or np.any(pi2 <= 0):
        raise MultiviewError("every marginal probability must be positive")
    return CouplingMatrix(P / np.outer(pi1, pi2), pi1, pi2)


def _marginal_violation(C, pi1, pi2) -> float:
    return float(max(np.max(np.abs(C @ pi2 - 1.0)), np.max(np.abs(C.T @ pi1 - 1.0))))


def _balance(log_O: np.ndarray, pi1: np.ndarray, pi2: np.ndarray, cfg: OptimizerConfig) -> Tuple[np.ndarray, int, float]:
    """Log-domain Sinkhorn from v = u = 1; returns (log C, sweeps, final violation)"""
    log_pi1 = np.log(pi1)
    log_pi2 = np.log(pi2)
    log_v = np.zeros(pi1.size)
    log_u = np.zeros(pi2.size)
    sweeps = 0
    while True:
        log_C = log_v[:, None] + log_O + log_u[None, :]
        violation = _marginal_violation(np.exp(log_C), pi1, pi2)
        if violation < cfg.sinkhorn_tol or sweeps == cfg.sinkhorn_max_iter:
            return log_C, sweeps, violation
        log_u = -logsumexp(log_O + (log_v + log_pi1)[:, None], axis=0)
        log_v = -logsumexp(log_O + (log_u + log_pi2)[None, :], axis=1)
        sweeps += 1


def sinkhorn_project(O, pi1, pi2, cfg: Optional[OptimizerConfig] = None) -> np.ndarray:
    """Scale a positive matrix to C = diag(v) O diag(u) with C pi2 = 1 and C^T pi1 = 1"""
    cfg = cfg or OptimizerConfig()
    O = np.asarray(O, dtype=float)
    pi1 = np.asarray(pi1, dtype=float)
    pi2 = np.asarray(pi2, dtype=float)
    if O.shape != (pi1.size, pi2.size):
        raise MultiviewError(f"O has shape {O.shape}, expected {(pi1.size, pi2.size)}")
    if not (np.all(O > 0) and np.all(np.isfinite(O))):
        raise MultiviewError("Sinkhorn input must be finite and strictly positive")

    log_C, sweeps, violation = _balance(np.log(O), pi1, pi2, cfg)
    if violation < cfg.sinkhorn_tol:
        return np.exp(log_C)
    raise ConvergenceError(
        f"Sinkhorn balancing did not converge (violation {violation:.3e})",
        {"iterations": sweeps, "violation": violation},
    )


def _objective_or_floor(gd: ComponentDensityMatrix, pi1, pi2, C) -> float:
    try:
        return joint_pseudo_loglik(gd, pi1, pi2, C)
    except MultiviewError:
        return -np.inf


def optimize_coupling(
    gd: ComponentDensityMatrix,
    pi1,
    pi2,
    cfg: Optional[OptimizerConfig] = None,
) -> CouplingFit:
    """
    Exponentiated gradient ascent on C from the all-ones start.

    log C is carried between iterations, so entries heading to the boundary
    never round to zero. A step is rejected (and the step size halved) when
    it lowers the objective or when its Sinkhorn balance ends with a marginal
    violation above MARGINAL_TOL; balances that stop between sinkhorn_tol and
    MARGINAL_TOL are accepted. Running out of halvings returns the last
    accepted iterate with stalled=True.
    """
    cfg = cfg or OptimizerConfig()
    pi1, pi2 = _check_inputs(gd, pi1, pi2)
    log_C = np.zeros(gd.shape)
    C = np.ones(gd.shape)
    objective = joint_pseudo_loglik(gd, pi1, pi2, C)
    trace = [objective]
    step = cfg.resolve_step(gd.n)
    violation = 0.0

    if gd.shape == (1, 1):
        return CouplingFit(C, objective, trace, 0, True, False, step, violation)

    converged = stalled = False
    iteration = 0
    for iteration in range(1, cfg.outer_max_iter + 1):
        G = coupling_gradient(gd, pi1, pi2, C)
        G = G - G.max()  # constant shifts are absorbed by the balance
        halvings = 0
        while True:
            cand_log, sweeps, cand_violation = _balance(log_C + step * G, pi1, pi2, cfg)
            candidate = np.exp(cand_log)
            if cand_violation <= MARGINAL_TOL:
                value = _objective_or_floor(gd, pi1, pi2, candidate)
                if value >= objective:
                    break
                if objective - value <= FLAT_TOL * max(abs(objective), 1.0):
                    # rounding-level loss: the objective is flat here
                    converged = True
                    break
            else:
                logger.debug("balance stopped at violation %.2e after %d sweeps", cand_violation, sweeps)
            halvings += 1
            if halvings >= cfg.max_halvings:
                stalled = True
                break
            step /= 2.0
        if stalled:
            logger.warning("coupling optimizer stalled after %d halvings at iteration %d", halvings, iteration)
            break
        if converged:
            break

        gain = (value - objective) / max(abs(objective), 1.0)
        log_C, C, objective, violation = cand_log, candidate, value, cand_violation
        trace.append(objective)
        if gain < cfg.outer_tol:
            converged = True
            break

    logger.debug("coupling optimizer: %d iterations, objective %.6f", iteration, objective)
    return CouplingFit(C, objective, trace, iteration, converged, stalled, step, violation)


def p2lrt_statistic(gd: ComponentDensityMatrix, pi1, pi2, cfg: Optional[OptimizerConfig] = None) -> Tuple[float, CouplingFit]:
    """log Lambda~ = l_PL(C_hat) - l_PL(11^T), clamped at 0"""
    fit = optimize_coupling(gd, pi1, pi2, cfg)
    if gd.shape == (1, 1):
        return 0.0, fit
    statistic = fit.objective - fit.trace[0]
    if statistic < -STATISTIC_SLACK:
        raise MultiviewError(f"statistic {statistic:.3e} is negative beyond numerical slack")
    return max(statistic, 0.0), fit
