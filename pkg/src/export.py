"""
Multiview SBM Test - File Writers
=================================

CSV and JSON outputs of the CLI: result records, fitted matrices, traces,
permutation statistics, simulated data sets and tidy study rows.
"""

import csv
import json
import logging
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .inference import TestResult
from .netcore import NodeUniverse, write_edge_list
from .simgen import SimulatedDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_matrix_csv(path: PathLike, M: np.ndarray, header: Optional[Sequence[str]] = None) -> Path:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    kwargs = {"header": ",".join(header), "comments": ""} if header else {}
    np.savetxt(path, M, delimiter=",", fmt="%.12g", **kwargs)
    return Path(path)


def write_vector_csv(path: PathLike, values: Sequence[float], name: str) -> Path:
    return write_matrix_csv(path, np.asarray(values, dtype=float).reshape(-1, 1), header=[name])


def write_json(path: PathLike, payload: Any) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return Path(path)


def write_test_outputs(result: TestResult, out_dir: PathLike) -> List[Path]:
    """result.json (summary), fit.json (full record), C/pi CSVs, permutation statistics"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_json(out / "result.json", result.summary())]

    full = out / "fit.json"
    full.write_text(result.to_json(indent=2) + "\n", encoding="utf-8")
    paths.append(full)

    if "C" in result.fitted:
        paths.append(write_matrix_csv(out / "C.csv", result.coupling))
        paths.append(write_vector_csv(out / "pi1.csv", result.fitted["pi1"], "pi1"))
        paths.append(write_vector_csv(out / "pi2.csv", result.fitted["pi2"], "pi2"))
    if result.diagnostics.get("objective_trace"):
        paths.append(write_vector_csv(out / "trace.csv", result.diagnostics["objective_trace"], "objective"))
    paths.append(write_vector_csv(out / "perm_statistics.csv", result.perm_statistics, "statistic"))
    logger.info("wrote %d result files to %s", len(paths), out)
    return paths


def simulated_labels(n: int) -> List[str]:
    """Zero-padded node names whose sorted order is the index order"""
    width = len(str(n - 1))
    return [f"v{i:0{width}d}" for i in range(n)]


def write_simulation(data: SimulatedDataset, out_dir: PathLike, seed: int) -> List[Path]:
    """Edge lists, features.csv (first column = node label) and truth.json"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = simulated_labels(data.design.n)
    universe = NodeUniverse.from_labels(labels)
    paths = []

    write_edge_list(data.view1, universe, out / "view1.tsv")
    paths.append(out / "view1.tsv")
    if data.view2 is not None:
        write_edge_list(data.view2, universe, out / "view2.tsv")
        paths.append(out / "view2.tsv")
    if data.features is not None:
        path = out / "features.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            for label, row in zip(labels, data.features):
                writer.writerow([label] + [repr(float(v)) for v in row])
        paths.append(path)

    truth = out / "truth.json"
    truth.write_text(data.truth(seed).to_json(indent=2) + "\n", encoding="utf-8")
    paths.append(truth)
    return paths


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


class CsvRowWriter:
    """Stream dict rows to a CSV with a fixed column order"""

    def __init__(self, path: PathLike, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self._handle: Optional[IO[str]] = None
        self._writer = None
        self.rows_written = 0

    def __enter__(self) -> "CsvRowWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._handle)
        self._writer.writerow(self.columns)
        return self

    def write(self, row: Dict[str, Any]) -> None:
        self._writer.writerow([_cell(row.get(c)) for c in self.columns])
        self.rows_written += 1

    def __exit__(self, *exc) -> None:
        if self._handle is not None:
            self._handle.close()


def write_rows_csv(path: PathLike, rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> Path:
    with CsvRowWriter(path, columns) as writer:
        for row in rows:
            writer.write(row)
    return Path(path)
