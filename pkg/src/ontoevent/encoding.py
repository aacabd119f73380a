"""Multi-hot label encodings and per-node weight vectors.

All vectors are aligned to the ontology's frozen ``node_order`` (or its leaf
sub-order) and are written to disk together with the ontology content-hash so
that a model, its weights, and its node order can never silently disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ontology import NotALeafError, Ontology, UnknownNodeError

SCHEME_DISTANCE = "distance"
SCHEME_CENTRALITY = "centrality"
SCHEME_UNIT = "unit"


class EncodingError(Exception):
    """Vector/ontology mismatch or malformed vector file."""


@dataclass(frozen=True)
class WeightVector:
    """Non-negative per-node weights aligned to ``node_order``."""

    values: np.ndarray
    scheme: str
    leaf_weight: float
    ontology_hash: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError("weight values must be one-dimensional")
        if np.any(self.values < 0):
            raise ValueError("weights must be non-negative")
        if self.leaf_weight <= 0:
            raise ValueError("leaf_weight must be positive")


def leaf_index(ont: Ontology) -> dict[str, int]:
    """Position of each leaf id in the leaf sub-order of ``node_order``."""
    return {nid: i for i, nid in enumerate(ont.leaf_order)}


def node_index(ont: Ontology) -> dict[str, int]:
    return {nid: i for i, nid in enumerate(ont.node_order)}


def leaf_positions(ont: Ontology) -> np.ndarray:
    """Indexes of the leaves inside the full node order."""
    idx = node_index(ont)
    return np.array([idx[nid] for nid in ont.leaf_order], dtype=np.intp)


def encode_leaf(ont: Ontology, leaf_ids: Iterable[str]) -> np.ndarray:
    """Multi-hot vector over the leaf order; empty input encodes to all zeros."""
    index = leaf_index(ont)
    vec = np.zeros(len(index), dtype=np.float64)
    for nid in leaf_ids:
        node = ont.node(nid)
        if node.kind != "leaf":
            raise NotALeafError(nid, node.kind)
        vec[index[nid]] = 1.0
    return vec


def encode_subgraph(ont: Ontology, leaf_ids: Iterable[str]) -> np.ndarray:
    """Multi-hot vector over ``node_order`` covering the union of leaf subgraphs."""
    index = node_index(ont)
    vec = np.zeros(len(index), dtype=np.float64)
    for nid in leaf_ids:
        for member in ont.subgraph_of(nid).node_ids:
            vec[index[member]] = 1.0
    return vec


def shortest_leaf_path_lengths(ont: Ontology, node_id: str) -> dict[str, int]:
    """Node-count of the shortest downward path to each reachable leaf.

    A node is on its own path, so a leaf's distance to itself is 1 and a
    direct parent's distance to its leaf child is 2. Multiple downward routes
    keep the shortest.
    """
    ont.node(node_id)
    dist = {node_id: 1}
    frontier = [node_id]
    while frontier:
        next_frontier: list[str] = []
        for nid in frontier:
            for child in ont.children(nid):
                if child not in dist:
                    dist[child] = dist[nid] + 1
                    next_frontier.append(child)
        frontier = next_frontier
    return {nid: d for nid, d in dist.items() if ont.nodes[nid].kind == "leaf"}


def distance_weights(ont: Ontology) -> WeightVector:
    """Halving weights by mean shortest-path length to the reachable leaves.

    A node at mean path length ``m`` (counting both endpoints) weighs
    ``2 ** -(m - 1)``: every leaf weighs exactly 1, a parent whose children are
    all leaves weighs 0.5, and weights shrink toward the root. Recompute after
    redundancy removal — splicing nodes out shortens the paths.
    """
    values = np.empty(len(ont.node_order), dtype=np.float64)
    for i, nid in enumerate(ont.node_order):
        leaves = ont.leaves_under(nid)
        if not leaves:
            values[i] = 1.0  # childless root of a degenerate ontology
            continue
        lengths = shortest_leaf_path_lengths(ont, nid)
        mean_len = sum(lengths[leaf] for leaf in leaves) / len(leaves)
        values[i] = 2.0 ** -(mean_len - 1.0)
    return WeightVector(values, SCHEME_DISTANCE, 1.0, ont.content_hash())


def centrality_weights(ont: Ontology, leaf_weight: float = 6.0) -> WeightVector:
    """Leaf-coverage weights: a node connected to ``c`` of the ``L`` leaves
    weighs ``1 - (c - 1) / L``; leaves themselves are overridden to
    ``leaf_weight``. The root, connected to every leaf, weighs ``1 / L``.
    """
    if leaf_weight <= 0:
        raise ValueError("leaf_weight must be positive")
    n_leaves = len(ont.leaf_order)
    values = np.empty(len(ont.node_order), dtype=np.float64)
    for i, nid in enumerate(ont.node_order):
        if ont.nodes[nid].kind == "leaf":
            values[i] = leaf_weight
        elif n_leaves == 0:
            values[i] = 1.0
        else:
            c = len(ont.leaves_under(nid))
            # evaluated as (L - (c-1)) / L: same formula, exact at c = 1 and c = L
            values[i] = (n_leaves - (c - 1)) / n_leaves
    return WeightVector(values, SCHEME_CENTRALITY, leaf_weight, ont.content_hash())


def unit_weights(ont: Ontology) -> WeightVector:
    return WeightVector(
        np.ones(len(ont.node_order)), SCHEME_UNIT, 1.0, ont.content_hash()
    )


# -- vector files ---------------------------------------------------------------


def _parse_header(line: str, path) -> dict[str, str]:
    if not line.startswith("#"):
        raise EncodingError(f"{path}: missing header line")
    fields: dict[str, str] = {}
    for token in line.lstrip("# ").split():
        if "=" not in token:
            raise EncodingError(f"{path}: malformed header token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    for required in ("ontology", "n"):
        if required not in fields:
            raise EncodingError(f"{path}: header lacks {required}=")
    return fields


def write_vectors(
    path: str | Path,
    rows: np.ndarray,
    ontology_hash: str,
    kind: str,
    extra: dict[str, str] | None = None,
) -> None:
    """Write dense vector rows under a header naming the ontology hash and width."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    header = f"# ontology={ontology_hash} n={rows.shape[1]} kind={kind}"
    for key, value in (extra or {}).items():
        header += f" {key}={value}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def read_vectors(path: str | Path) -> tuple[np.ndarray, dict[str, str]]:
    """Read a vector file; returns (rows, header fields)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = _parse_header(fh.readline().rstrip("\n"), path)
        width = int(header["n"])
        rows: list[list[float]] = []
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            values = [float(tok) for tok in raw.split()]
            if len(values) != width:
                raise EncodingError(
                    f"{path}:{lineno}: expected {width} values, got {len(values)}"
                )
            rows.append(values)
    return np.array(rows, dtype=np.float64), header


def write_weights(path: str | Path, weights: WeightVector) -> None:
    write_vectors(
        path,
        weights.values,
        weights.ontology_hash,
        kind="weights",
        extra={"scheme": weights.scheme, "leaf_weight": format(weights.leaf_weight, "g")},
    )


def read_weights(path: str | Path) -> WeightVector:
    rows, header = read_vectors(path)
    if header.get("kind") != "weights" or rows.shape[0] != 1:
        raise EncodingError(f"{path}: not a weight-vector file")
    return WeightVector(
        rows[0],
        header.get("scheme", SCHEME_UNIT),
        float(header.get("leaf_weight", "1")),
        header["ontology"],
    )


def check_alignment(ont: Ontology, weights: WeightVector) -> None:
    """Raise unless the weight vector was computed on exactly this ontology."""
    if weights.ontology_hash != ont.content_hash():
        raise EncodingError(
            "weight vector belongs to a different ontology "
            f"({weights.ontology_hash[:12]} != {ont.content_hash()[:12]})"
        )
    if len(weights.values) != len(ont.node_order):
        raise EncodingError(
            f"weight vector length {len(weights.values)} != {len(ont.node_order)} nodes"
        )


# -- sample label files -----------------------------------------------------------


def read_sample_labels(path: str | Path) -> list[tuple[str, frozenset[str]]]:
    """Read ``sample_id<TAB>leaf,leaf`` rows used by encode and eval."""
    out: list[tuple[str, frozenset[str]]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise EncodingError(f"{path}:{lineno}: expected sample_id<TAB>leaf,leaf,...")
        out.append((parts[0], frozenset(t for t in parts[1].split(",") if t)))
    return out
