"""
Multiview SBM Test - Pydantic Models
====================================

Validated configuration models shared by the library, the study harness
and the CLI. All models are frozen so one instance can be handed to many
worker threads.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# Ingestion

class EdgeListFormat(_Frozen):
    """How to read one edge per line from a text file"""
    delimiter: Optional[str] = Field("\t", description="Field separator; None splits on any whitespace")
    comment: str = Field("#", min_length=1, description="Lines starting with this prefix are skipped")
    columns: Tuple[int, int] = Field((0, 1), description="Zero-based columns holding the two endpoints")
    skip_header: bool = Field(False, description="Ignore the first non-comment line")
    n_columns: Optional[int] = Field(None, ge=2, description="Exact number of fields per line, if fixed")

    @model_validator(mode="after")
    def _check_columns(self) -> "EdgeListFormat":
        if min(self.columns) < 0 or self.columns[0] == self.columns[1]:
            raise ValueError("columns must be two distinct non-negative indices")
        if self.n_columns is not None and max(self.columns) >= self.n_columns:
            raise ValueError("endpoint column index exceeds n_columns")
        return self


# Solver configuration

class SpectralConfig(_Frozen):
    regularizer_scale: float = Field(0.25, gt=0, description="alpha in A + alpha * (mean degree / n) * 11^T")
    kmeans_restarts: int = Field(20, ge=1)
    kmeans_max_iter: int = Field(100, ge=1)
    eig_tolerance: float = Field(1e-8, gt=0)
    dense_threshold: int = Field(1500, ge=1, description="Use a dense eigensolver up to this many nodes")


class EmConfig(_Frozen):
    tol: float = Field(1e-8, gt=0, description="Per-node loglik tolerance; the stop rule uses tol * n")
    max_iter: int = Field(500, ge=1)
    eta_floor: float = Field(1e-10, gt=0, lt=1)
    init_smoothing: float = Field(0.05, ge=0, le=1)
    variance: Literal["per_component", "shared"] = "per_component"
    sigma_floor: float = Field(1e-6, gt=0)
    k_max: int = Field(10, ge=1)
    kmeans_restarts: int = Field(10, ge=1, description="Restarts of the k-means initializer of the Gaussian fit")


class OptimizerConfig(_Frozen):
    step_scale: float = Field(0.5, gt=0, description="Step size is step_scale / n unless step_size is set")
    step_size: Optional[float] = Field(None, gt=0)
    outer_tol: float = Field(1e-14, gt=0)
    outer_max_iter: int = Field(5000, ge=1)
    sinkhorn_tol: float = Field(1e-10, gt=0)
    sinkhorn_max_iter: int = Field(10000, ge=1)
    max_halvings: int = Field(30, ge=1)

    def resolve_step(self, n: int) -> float:
        return self.step_size if self.step_size is not None else self.step_scale / max(n, 1)


class TestConfig(_Frozen):
    __test__ = False  # not a pytest class

    spectral: SpectralConfig = SpectralConfig()
    em: EmConfig = EmConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    plus_one_pvalue: bool = Field(False, description="Use (1 + count) / (1 + M) instead of count / M")
    n_jobs: int = Field(1, description="joblib workers for the permutation loop (-1 = all cores)")


# Simulation

class PopularitySpec(_Frozen):
    """Distribution of per-node popularity factors of a degree-corrected view"""
    kind: Literal["two_point", "uniform", "shared_with_view1"] = "two_point"
    values: Tuple[float, ...] = (2.5, 0.625)
    probs: Tuple[float, ...] = (0.2, 0.8)
    low: float = Field(0.14, gt=0)
    high: float = Field(0.84, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "PopularitySpec":
        if self.kind == "two_point":
            if len(self.values) != len(self.probs) or not self.values:
                raise ValueError("two_point values and probs must have equal, nonzero length")
            if any(v <= 0 for v in self.values):
                raise ValueError("popularity values must be positive")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
                raise ValueError("two_point probs must be nonnegative and sum to 1")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform popularity needs low < high")
        return self


GeneratorKind = Literal["sbm", "dcsbm", "dcsbm-shared-popularity", "netcov", "dc-netcov"]


class SimulationDesign(_Frozen):
    """One point of a simulation grid"""
    generator: GeneratorKind = "sbm"
    n: int = Field(1000, ge=2)
    k1: int = Field(6, ge=1)
    k2: int = Field(6, ge=1)
    delta: float = Field(0.0, ge=0, le=1)
    r: float = Field(3.0, gt=0)
    s: float = Field(0.02, gt=0, lt=1)
    sigma: float = Field(1.0, gt=0)
    theta: Optional[List[List[float]]] = Field(None, description="Explicit block matrix overriding (r, s)")
    popularity: Optional[PopularitySpec] = None
    mean_matrix: Optional[List[List[float]]] = Field(None, description="p x K2 means of the feature view")

    @property
    def has_feature_view(self) -> bool:
        return self.generator in ("netcov", "dc-netcov")

    @property
    def degree_corrected(self) -> bool:
        return self.generator in ("dcsbm", "dcsbm-shared-popularity", "dc-netcov")

    @model_validator(mode="after")
    def _check(self) -> "SimulationDesign":
        if self.theta is not None and self.k1 != self.k2:
            raise ValueError("an explicit theta is shared by both views and needs k1 == k2")
        if self.delta > 0 and self.k1 != self.k2:
            raise ValueError("the delta coupling family needs k1 == k2")
        return self


TestName = Literal["p2lrt-true-k", "p2lrt-auto-k", "gtest-true-k", "gtest-auto-k"]


class StudyGrid(_Frozen):
    """Grid and replicate plan of a power / Type I error study"""
    generator: GeneratorKind = "sbm"
    n: int = Field(1000, ge=2)
    k: int = Field(6, ge=1)
    deltas: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    rs: List[float] = Field(default_factory=lambda: [3.0], min_length=1)
    ss: List[float] = Field(default_factory=lambda: [0.02], min_length=1)
    sigmas: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    reps: int = Field(200, ge=1)
    alpha: float = Field(0.05, gt=0, lt=1)
    perms: int = Field(200, ge=1)
    tests: List[TestName] = Field(
        default_factory=lambda: ["p2lrt-true-k", "p2lrt-auto-k", "gtest-true-k", "gtest-auto-k"],
        min_length=1,
    )
    k_sweep: Optional[List[int]] = Field(None, description="Numbers of communities used at fixed data")
    seed: int = 0
    theta: Optional[List[List[float]]] = None
    popularity: Optional[PopularitySpec] = None

    @model_validator(mode="after")
    def _check(self) -> "StudyGrid":
        if self.k_sweep is not None and any(k < 1 or k > self.n for k in self.k_sweep):
            raise ValueError("k_sweep values must lie in 1..n")
        return self

    def designs(self) -> List[SimulationDesign]:
        """Expand the grid in a fixed order (delta, r, s, sigma)"""
        out = []
        sigmas = self.sigmas if self.generator in ("netcov", "dc-netcov") else self.sigmas[:1]
        for delta in self.deltas:
            for r in self.rs:
                for s in self.ss:
                    for sigma in sigmas:
                        out.append(SimulationDesign(
                            generator=self.generator, n=self.n, k1=self.k, k2=self.k,
                            delta=delta, r=r, s=s, sigma=sigma,
                            theta=self.theta, popularity=self.popularity,
                        ))
        return out
