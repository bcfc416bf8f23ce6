"""
Multiview SBM Test - Network Core
=================================

Graph representation, edge-list ingestion and cross-view node alignment.

Views are undirected, unweighted and loop-free. Edges are stored once, as
(i, j) with i < j, in lexicographic order, so two views built from the same
pairs are bit-identical whatever order the pairs arrived in.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from dataclasses_json import dataclass_json
from scipy import sparse

from .exceptions import AlignmentError, EdgeListParseError, MatrixParseError, ParameterError
from .models import EdgeListFormat

logger = logging.getLogger(__name__)


class LabelPair(NamedTuple):
    source: str
    target: str
    line: int


@dataclass(frozen=True)
class NodeUniverse:
    """Ordered external node labels shared by the aligned views"""
    labels: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.labels:
            raise AlignmentError("node universe must contain at least one node")
        index = {label: i for i, label in enumerate(self.labels)}
        if len(index) != len(self.labels):
            raise AlignmentError("node labels must be unique")
        object.__setattr__(self, "index", index)

    @property
    def n(self) -> int:
        return len(self.labels)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "NodeUniverse":
        return cls(tuple(sorted(set(labels))))


@dataclass(frozen=True, eq=False)
class AdjacencyView:
    """Sparse symmetric binary adjacency over nodes 0..n-1"""
    n: int
    edges: np.ndarray  # (m, 2) int64, i < j, unique, lexicographically sorted

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise ParameterError("edge endpoint outside 0..n-1")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ParameterError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Tuple[int, int]]) -> "AdjacencyView":
        return cls(n, np.array(list(pairs), dtype=np.int64).reshape(-1, 2))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """Symmetric CSR adjacency with int64 entries"""
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i), dtype=np.int64)
        mat = sparse.coo_matrix(
            (data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(self.n, self.n)
        )
        return mat.tocsr()

    def permuted(self, perm: Sequence[int]) -> "AdjacencyView":
        """Relabel node i as perm[i]"""
        perm = np.asarray(perm, dtype=np.int64)
        return AdjacencyView(self.n, perm[self.edges])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AdjacencyView):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    __hash__ = None


def degrees(A: AdjacencyView) -> np.ndarray:
    """d = X 1_n"""
    return np.bincount(A.edges.ravel(), minlength=A.n).astype(np.int64)


@dataclass_json
@dataclass
class IngestionSummary:
    n: int
    edges_view1: int
    edges_view2: int
    dropped_self: int = 0
    dropped_outside: int = 0
    collapsed_duplicates: int = 0


# =============================================================================
# EDGE-LIST INGESTION
# =============================================================================

def load_edge_list(source: Union[BinaryIO, bytes], fmt: Optional[EdgeListFormat] = None) -> List[LabelPair]:
    """Parse every endpoint pair in file order; no cleaning happens here"""
    fmt = fmt or EdgeListFormat()
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise EdgeListParseError(f"input is not valid UTF-8 ({e.reason})") from e

    pairs: List[LabelPair] = []
    header_pending = fmt.skip_header
    need = fmt.n_columns if fmt.n_columns is not None else max(fmt.columns) + 1
    for line_num, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(fmt.comment):
            continue
        if header_pending:
            header_pending = False
            continue
        fields = stripped.split(fmt.delimiter) if fmt.delimiter is not None else stripped.split()
        bad = len(fields) != need if fmt.n_columns is not None else len(fields) < need
        if bad:
            raise EdgeListParseError(f"expected {need} columns, found {len(fields)}", line=line_num)
        a, b = fields[fmt.columns[0]].strip(), fields[fmt.columns[1]].strip()
        if not a or not b:
            raise EdgeListParseError("empty endpoint label", line=line_num)
        pairs.append(LabelPair(a, b, line_num))

    if not pairs:
        raise EdgeListParseError("edge list is empty")
    return pairs


def read_edge_list(path: Union[str, Path], fmt: Optional[EdgeListFormat] = None) -> List[LabelPair]:
    with open(path, "rb") as f:
        return load_edge_list(f, fmt)


def write_edge_list(view: AdjacencyView, universe: NodeUniverse, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for i, j in view.edges:
            f.write(f"{universe.labels[i]}\t{universe.labels[j]}\n")


# =============================================================================
# ALIGNMENT
# =============================================================================

def _clean_pairs(pairs: Sequence[Tuple[str, str]]) -> Tuple[set, int, int]:
    """Drop self-pairs and collapse duplicates; returns (edges, n_self, n_duplicates)"""
    edges = set()
    n_self = 0
    n_dup = 0
    for pair in pairs:
        a, b = pair[0], pair[1]
        if a == b:
            n_self += 1
            continue
        key = (a, b) if a < b else (b, a)
        if key in edges:
            n_dup += 1
        else:
            edges.add(key)
    return edges, n_self, n_dup


def _touched(edges: Iterable[Tuple[str, str]]) -> set:
    out = set()
    for a, b in edges:
        out.add(a)
        out.add(b)
    return out


def _index_edges(edges: Iterable[Tuple[str, str]], universe: NodeUniverse) -> Tuple[AdjacencyView, int]:
    idx = universe.index
    kept = []
    outside = 0
    for a, b in edges:
        if a in idx and b in idx:
            kept.append((idx[a], idx[b]))
        else:
            outside += 1
    return AdjacencyView.from_pairs(universe.n, kept), outside


def align_views_with_summary(
    pairs1: Sequence[Tuple[str, str]], pairs2: Sequence[Tuple[str, str]]
) -> Tuple[AdjacencyView, AdjacencyView, NodeUniverse, IngestionSummary]:
    """Put two networks on the intersection of their node sets"""
    if not pairs1 or not pairs2:
        raise AlignmentError("each view needs at least one pair")
    edges1, self1, dup1 = _clean_pairs(pairs1)
    edges2, self2, dup2 = _clean_pairs(pairs2)

    shared = _touched(edges1) & _touched(edges2)
    if not shared:
        raise AlignmentError("no shared nodes")
    universe = NodeUniverse.from_labels(shared)

    view1, out1 = _index_edges(edges1, universe)
    view2, out2 = _index_edges(edges2, universe)
    summary = IngestionSummary(
        n=universe.n,
        edges_view1=view1.num_edges,
        edges_view2=view2.num_edges,
        dropped_self=self1 + self2,
        dropped_outside=out1 + out2,
        collapsed_duplicates=dup1 + dup2,
    )
    logger.info("Aligned views: n=%d, edges=(%d, %d)", summary.n, summary.edges_view1, summary.edges_view2)
    return view1, view2, universe, summary


def single_view(pairs: Sequence[Tuple[str, str]]) -> Tuple[AdjacencyView, NodeUniverse]:
    """One network on the nodes its edges touch"""
    edges, _, _ = _clean_pairs(pairs)
    if not edges:
        raise AlignmentError("the network has no edges besides self-pairs")
    universe = NodeUniverse.from_labels(_touched(edges))
    view, _ = _index_edges(edges, universe)
    return view, universe


def align_views(
    pairs1: Sequence[Tuple[str, str]], pairs2: Sequence[Tuple[str, str]]
) -> Tuple[AdjacencyView, AdjacencyView, NodeUniverse]:
    view1, view2, universe, _ = align_views_with_summary(pairs1, pairs2)
    return view1, view2, universe


def align_network_matrix(
    pairs: Sequence[Tuple[str, str]], Y: np.ndarray, row_labels: Optional[Sequence[str]] = None
) -> Tuple[AdjacencyView, np.ndarray, NodeUniverse, IngestionSummary]:
    """
    Align a network with an n x p feature matrix.

    With row labels, the matrix rows define the node set and are reordered
    into sorted label order; without them, row i belongs to the i-th label of
    the sorted edge-list node set.
    """
    if not pairs:
        raise AlignmentError("the network needs at least one pair")
    Y = np.asarray(Y, dtype=float)
    edges, n_self, n_dup = _clean_pairs(pairs)

    if row_labels is not None:
        if len(row_labels) != Y.shape[0]:
            raise AlignmentError(f"{len(row_labels)} row labels for {Y.shape[0]} matrix rows")
        universe = NodeUniverse.from_labels(row_labels)
        if universe.n != len(row_labels):
            raise AlignmentError("matrix row labels must be unique")
        order = np.argsort(np.asarray(row_labels, dtype=object), kind="stable")
        Y = Y[order]
    else:
        universe = NodeUniverse.from_labels(_touched(edges))
        if universe.n != Y.shape[0]:
            raise AlignmentError(
                f"row count mismatch: network has {universe.n} nodes, matrix has {Y.shape[0]} rows"
            )

    view, outside = _index_edges(edges, universe)
    summary = IngestionSummary(
        n=universe.n,
        edges_view1=view.num_edges,
        edges_view2=0,
        dropped_self=n_self,
        dropped_outside=outside,
        collapsed_duplicates=n_dup,
    )
    return view, Y, universe, summary


# =============================================================================
# FEATURE MATRICES
# =============================================================================

def load_feature_matrix(
    source: Union[BinaryIO, bytes],
    delimiter: str = ",",
    header: bool = False,
    row_labels: bool = False,
) -> Tuple[np.ndarray, Optional[List[str]]]:
    """Parse a numeric CSV; returns (matrix, row labels or None)"""
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MatrixParseError(f"input is not valid UTF-8 ({e.reason})") from e

    rows: List[List[float]] = []
    labels: List[str] = []
    width = None
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    data_row = 0
    for rec_num, record in enumerate(reader, 1):
        if not record or all(not cell.strip() for cell in record):
            continue
        if header and rec_num == 1:
            continue
        data_row += 1
        if row_labels:
            labels.append(record[0].strip())
            record = record[1:]
        if width is None:
            width = len(record)
        elif len(record) != width:
            raise MatrixParseError(f"expected {width} values, found {len(record)}", row=data_row, column=len(record))
        values = []
        for col, cell in enumerate(record, 1):
            try:
                value = float(cell)
            except ValueError:
                raise MatrixParseError(f"not a number: {cell!r}", row=data_row, column=col) from None
            if not np.isfinite(value):
                raise MatrixParseError(f"non-finite value {cell.strip()}", row=data_row, column=col)
            values.append(value)
        rows.append(values)

    if not rows or not width:
        raise MatrixParseError("matrix is empty")
    return np.array(rows, dtype=float), (labels if row_labels else None)


def read_feature_matrix(path: Union[str, Path], **kwargs) -> Tuple[np.ndarray, Optional[List[str]]]:
    with open(path, "rb") as f:
        return load_feature_matrix(f, **kwargs)
