"""
Multiview SBM Test - Power Study Harness
========================================

Simulate data over a parameter grid, run the selected tests on every
replicate and record reject/accept decisions.

Tidy CSV: one row per (grid point, replicate, test). Aggregate CSV: one row
per (grid point, test) with the rejection rate and its binomial standard
error. The aggregate is a pure function of the tidy rows.

Replicates run concurrently; a single writer consumes them in submission
order, so files are identical for any thread count.
"""

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from dataclasses_json import dataclass_json
from joblib import Parallel, delayed

from .export import CsvRowWriter, write_rows_csv
from .inference import (
    FeatureViewFit,
    NetworkViewFit,
    fit_feature_view,
    fit_network_view,
    g_test,
    p2lrt_from_views,
)
from .models import SimulationDesign, StudyGrid, TestConfig
from .simgen import SimulatedDataset, derive_rng, simulate_dataset

logger = logging.getLogger(__name__)

K_SWEEP_TEST = "p2lrt-k-sweep"


@dataclass_json
@dataclass
class StudyRow:
    generator: str
    n: int
    k: int
    delta: float
    r: float
    s: float
    sigma: float
    replicate: int
    test: str
    k_sweep: Optional[int] = None
    p_value: Optional[float] = None
    rejected: Optional[bool] = None
    k1_used: Optional[int] = None
    k2_used: Optional[int] = None
    seed: int = 0
    error: str = ""


@dataclass_json
@dataclass
class AggregateRow:
    generator: str
    n: int
    k: int
    delta: float
    r: float
    s: float
    sigma: float
    test: str
    k_sweep: Optional[int]
    replicates: int
    rejections: int
    errors: int
    rate: Optional[float]
    se: Optional[float]


TIDY_COLUMNS = [f.name for f in fields(StudyRow)]
AGGREGATE_COLUMNS = [f.name for f in fields(AggregateRow)]
GROUP_KEYS = ("generator", "n", "k", "delta", "r", "s", "sigma", "test", "k_sweep")


def replicate_seed(grid_seed: int, point: int, rep: int) -> int:
    """Seed handed to the tests of one replicate, derived from (grid seed, point, rep)"""
    return int(np.random.SeedSequence(grid_seed, spawn_key=(point, rep)).generate_state(1)[0])


# =============================================================================
# ONE REPLICATE
# =============================================================================

@dataclass
class _Replicate:
    design: SimulationDesign
    point: int
    rep: int
    seed: int
    rows: List[StudyRow] = field(default_factory=list)

    def row(self, test: str, **values) -> StudyRow:
        d = self.design
        row = StudyRow(
            generator=d.generator, n=d.n, k=d.k1, delta=d.delta, r=d.r, s=d.s, sigma=d.sigma,
            replicate=self.rep, test=test, seed=self.seed, **values,
        )
        self.rows.append(row)
        return row


def _error_tag(e: BaseException) -> str:
    return f"{type(e).__name__}: {e}"


def _fit_views(data: SimulatedDataset, k1, k2, cfg: TestConfig, seed: int):
    view1 = fit_network_view(data.view1, k1, cfg, derive_rng(seed, 0, 1))
    if data.features is not None:
        view2: Union[NetworkViewFit, FeatureViewFit] = fit_feature_view(data.features, k2, cfg, derive_rng(seed, 0, 2))
    else:
        view2 = fit_network_view(data.view2, k2, cfg, derive_rng(seed, 0, 2))
    return view1, view2


def _decide(p_value: float, alpha: float) -> bool:
    return p_value <= alpha


def run_replicate(
    design: SimulationDesign,
    grid: StudyGrid,
    point: int,
    rep: int,
    cfg: TestConfig,
    uniform_range: Tuple[float, float] = (0.14, 0.84),
) -> List[StudyRow]:
    """Simulate one data set and run every requested test on it; never raises"""
    seed = replicate_seed(grid.seed, point, rep)
    job = _Replicate(design, point, rep, seed)
    tests = [K_SWEEP_TEST] if grid.k_sweep else list(grid.tests)

    try:
        data = simulate_dataset(design, derive_rng(grid.seed, point, rep, 0), uniform_range)
    except Exception as e:
        for test in tests:
            job.row(test, error=_error_tag(e))
        return job.rows

    if grid.k_sweep:
        for k in grid.k_sweep:
            try:
                view1, view2 = _fit_views(data, k, k, cfg, seed)
                result = p2lrt_from_views(view1, view2, grid.perms, cfg, seed, K_SWEEP_TEST)
                job.row(K_SWEEP_TEST, k_sweep=k, p_value=result.p_value,
                        rejected=_decide(result.p_value, grid.alpha), k1_used=view1.K, k2_used=view2.K)
            except Exception as e:
                job.row(K_SWEEP_TEST, k_sweep=k, error=_error_tag(e))
        return job.rows

    fits: Dict[str, Any] = {}
    for test in tests:
        mode = "auto" if test.endswith("auto-k") else "true"
        try:
            if mode not in fits:
                k1, k2 = ("auto", "auto") if mode == "auto" else (design.k1, design.k2)
                fits[mode] = _fit_views(data, k1, k2, cfg, seed)
            view1, view2 = fits[mode]
            if test.startswith("p2lrt"):
                result = p2lrt_from_views(view1, view2, grid.perms, cfg, seed, test)
            else:
                result = g_test(view1.labels, view2.labels, grid.perms, seed, cfg.plus_one_pvalue)
            job.row(test, p_value=result.p_value, rejected=_decide(result.p_value, grid.alpha),
                    k1_used=view1.K, k2_used=view2.K)
        except Exception as e:
            logger.warning("replicate %d of grid point %d: %s failed: %s", rep, point, test, e)
            job.row(test, error=_error_tag(e))
    return job.rows


# =============================================================================
# GRID DRIVER
# =============================================================================

def iter_study(
    grid: StudyGrid,
    cfg: Optional[TestConfig] = None,
    n_jobs: int = 1,
    uniform_range: Tuple[float, float] = (0.14, 0.84),
) -> Iterator[StudyRow]:
    """Yield tidy rows in (grid point, replicate, test) order"""
    cfg = (cfg or TestConfig()).model_copy(update={"n_jobs": 1})
    designs = grid.designs()
    tasks = (
        delayed(run_replicate)(design, grid, point, rep, cfg, uniform_range)
        for point, design in enumerate(designs)
        for rep in range(grid.reps)
    )
    results = Parallel(n_jobs=n_jobs, prefer="threads", return_as="generator")(tasks)
    for i, rows in enumerate(results, 1):
        if i % grid.reps == 0:
            point = i // grid.reps
            logger.info("grid point %d/%d done", point, len(designs))
        yield from rows


def aggregate_rows(rows: Iterable[StudyRow]) -> List[AggregateRow]:
    """Rejection rate and binomial SE per (grid point, test); errored rows are counted, not used"""
    groups: "OrderedDict[tuple, List[StudyRow]]" = OrderedDict()
    for row in rows:
        key = tuple(getattr(row, k) for k in GROUP_KEYS)
        groups.setdefault(key, []).append(row)

    out = []
    for key, members in groups.items():
        ok = [m for m in members if not m.error]
        rejections = sum(1 for m in ok if m.rejected)
        rate = rejections / len(ok) if ok else None
        se = math.sqrt(rate * (1.0 - rate) / len(ok)) if ok else None
        out.append(AggregateRow(
            **dict(zip(GROUP_KEYS, key)),
            replicates=len(ok),
            rejections=rejections,
            errors=len(members) - len(ok),
            rate=rate,
            se=se,
        ))
    return out


def run_study(
    grid: StudyGrid,
    out_dir: Union[str, Path],
    cfg: Optional[TestConfig] = None,
    n_jobs: int = 1,
    uniform_range: Tuple[float, float] = (0.14, 0.84),
) -> Tuple[Path, Path, List[AggregateRow]]:
    """Write tidy.csv and aggregate.csv under out_dir"""
    out = Path(out_dir)
    tidy_path = out / "tidy.csv"
    rows: List[StudyRow] = []
    with CsvRowWriter(tidy_path, TIDY_COLUMNS) as writer:
        for row in iter_study(grid, cfg, n_jobs, uniform_range):
            writer.write(asdict(row))
            rows.append(row)
    aggregate = aggregate_rows(rows)
    agg_path = write_rows_csv(out / "aggregate.csv", (asdict(a) for a in aggregate), AGGREGATE_COLUMNS)
    logger.info("study finished: %d tidy rows, %d aggregate rows", len(rows), len(aggregate))
    return tidy_path, agg_path, aggregate


# =============================================================================
# READING TIDY FILES BACK
# =============================================================================

def _parse(value: str, kind: str):
    if value == "":
        return None
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        return value == "1"
    return value


_KINDS = {
    "n": "int", "k": "int", "replicate": "int", "k_sweep": "int", "k1_used": "int",
    "k2_used": "int", "seed": "int", "delta": "float", "r": "float", "s": "float",
    "sigma": "float", "p_value": "float", "rejected": "bool",
}


def read_tidy_csv(path: Union[str, Path]) -> List[StudyRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for record in csv.DictReader(f):
            values = {k: _parse(v, _KINDS.get(k, "str")) for k, v in record.items()}
            values["error"] = values.get("error") or ""
            rows.append(StudyRow(**values))
    return rows
