"""
Multiview SBM Test - Service Layer
==================================

Service classes the CLI calls: load and align inputs, run a test or a
simulation, write the outputs and record the run in the ledger.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import requests

from .export import write_json, write_simulation, write_test_outputs
from .inference import KSpec, TestResult, permutation_test_net_cov, permutation_test_networks
from .models import EdgeListFormat, SimulationDesign, StudyGrid, TestConfig
from .netcore import (
    AdjacencyView,
    IngestionSummary,
    NodeUniverse,
    align_network_matrix,
    align_views_with_summary,
    read_edge_list,
    read_feature_matrix,
    single_view,
)
from .runlog import RunLedger
from .settings import Settings, get_settings
from .simgen import SimulatedDataset, derive_rng, simulate_dataset
from .spectral import estimate_num_communities
from .study import AggregateRow, run_study

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _require_file(path: PathLike) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    return p


class _LedgerMixin:
    settings: Settings

    def _record(self, command: str, config: Dict[str, Any], seed: Optional[int], outputs: List[Path]) -> None:
        RunLedger(self.settings.ledger_path).append(command, config, seed, outputs)


class TestService(_LedgerMixin):
    """Association tests on user files"""
    __test__ = False  # not a pytest class

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def load_networks(
        self, path1: PathLike, path2: PathLike, fmt: Optional[EdgeListFormat] = None
    ) -> Tuple[AdjacencyView, AdjacencyView, NodeUniverse, IngestionSummary]:
        pairs1 = read_edge_list(_require_file(path1), fmt)
        pairs2 = read_edge_list(_require_file(path2), fmt)
        return align_views_with_summary(pairs1, pairs2)

    def test_networks(
        self,
        path1: PathLike,
        path2: PathLike,
        k1: KSpec,
        k2: KSpec,
        perms: int,
        seed: int,
        out_dir: PathLike,
        cfg: Optional[TestConfig] = None,
        fmt: Optional[EdgeListFormat] = None,
    ) -> Tuple[TestResult, List[Path]]:
        cfg = cfg or TestConfig()
        A1, A2, _, summary = self.load_networks(path1, path2, fmt)
        result = permutation_test_networks(A1, A2, k1, k2, perms, cfg, seed)
        out = Path(out_dir)
        paths = write_test_outputs(result, out)
        paths.append(write_json(out / "ingestion.json", summary.to_dict()))
        self._record(
            "test-networks",
            {"view1": str(path1), "view2": str(path2), "k1": k1, "k2": k2, "perms": perms,
             "config": cfg.model_dump(), "format": (fmt or EdgeListFormat()).model_dump()},
            seed,
            paths,
        )
        return result, paths

    def test_netcov(
        self,
        network_path: PathLike,
        matrix_path: PathLike,
        k1: KSpec,
        k2: KSpec,
        perms: int,
        seed: int,
        out_dir: PathLike,
        cfg: Optional[TestConfig] = None,
        fmt: Optional[EdgeListFormat] = None,
        header: bool = False,
        row_labels: bool = False,
        delimiter: str = ",",
    ) -> Tuple[TestResult, List[Path]]:
        cfg = cfg or TestConfig()
        pairs = read_edge_list(_require_file(network_path), fmt)
        Y, labels = read_feature_matrix(
            _require_file(matrix_path), delimiter=delimiter, header=header, row_labels=row_labels
        )
        A, Y, _, summary = align_network_matrix(pairs, Y, labels)
        result = permutation_test_net_cov(A, Y, k1, k2, perms, cfg, seed)
        out = Path(out_dir)
        paths = write_test_outputs(result, out)
        paths.append(write_json(out / "ingestion.json", summary.to_dict()))
        self._record(
            "test-netcov",
            {"network": str(network_path), "matrix": str(matrix_path), "k1": k1, "k2": k2,
             "perms": perms, "header": header, "row_labels": row_labels, "config": cfg.model_dump()},
            seed,
            paths,
        )
        return result, paths

    def estimate_k(self, path: PathLike, fmt: Optional[EdgeListFormat] = None) -> int:
        pairs = read_edge_list(_require_file(path), fmt)
        A, universe = single_view(pairs)
        k = estimate_num_communities(A)
        logger.info("estimated K = %d on %d nodes", k, universe.n)
        self._record("estimate-k", {"path": str(path), "k": k}, None, [])
        return k


class SimulationService(_LedgerMixin):
    """Synthetic data sets and power studies"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    @property
    def uniform_range(self) -> Tuple[float, float]:
        return self.settings.uniform_popularity_low, self.settings.uniform_popularity_high

    def simulate(self, design: SimulationDesign, seed: int, out_dir: PathLike) -> Tuple[SimulatedDataset, List[Path]]:
        data = simulate_dataset(design, derive_rng(seed), self.uniform_range)
        paths = write_simulation(data, out_dir, seed)
        self._record("simulate", design.model_dump(), seed, paths)
        return data, paths

    def power_study(
        self,
        grid: StudyGrid,
        out_dir: PathLike,
        cfg: Optional[TestConfig] = None,
        threads: Optional[int] = None,
    ) -> Tuple[List[Path], List[AggregateRow]]:
        threads = threads or self.settings.threads
        tidy, agg, aggregate = run_study(grid, out_dir, cfg, threads, self.uniform_range)
        self._record(
            "power-study",
            {"grid": grid.model_dump(), "config": (cfg or TestConfig()).model_dump(), "threads": threads},
            grid.seed,
            [tidy, agg],
        )
        return [tidy, agg], aggregate


class DataService(_LedgerMixin):
    """Downloads of interaction files and ledger checks"""

    CHUNK_SIZE = 1 << 16

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def fetch(self, url: str, out_path: PathLike, timeout: float = 60.0) -> Path:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        try:
            with requests.get(url, stream=True, timeout=timeout) as response:
                response.raise_for_status()
                with open(out, "wb") as f:
                    for chunk in response.iter_content(chunk_size=self.CHUNK_SIZE):
                        f.write(chunk)
        except requests.RequestException as e:
            raise OSError(f"download failed: {e}") from e
        logger.info("downloaded %s to %s (%d bytes)", url, out, out.stat().st_size)
        self._record("fetch", {"url": url}, None, [out])
        return out

    def verify_ledger(self) -> Dict[str, Any]:
        return RunLedger(self.settings.ledger_path).verify()
