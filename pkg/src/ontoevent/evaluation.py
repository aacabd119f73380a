"""Top-k accuracy and subgraph-similarity metrics, plus report assembly.

Subgraph similarities are always computed on the full (non-reduced) ontology
so that models trained with and without redundancy removal are comparable:
only the predicted leaf enters the metric, and leaves survive reduction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ontology import Ontology


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class EvalSample:
    """One scored sample: leaf scores plus the true leaf id(s)."""

    prediction: np.ndarray
    truth_leaves: frozenset[str]
    sample_id: str = ""


@dataclass
class MetricReport:
    top1: float
    top3: float
    top5: float
    jsc: float
    cs: float
    per_leaf_top1: dict[str, tuple[float, int]]  # leaf -> (accuracy, support)
    branch_top1: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        out = [
            f"samples      {sum(n for _, n in self.per_leaf_top1.values())}",
            f"top-1        {self.top1:.4f}",
            f"top-3        {self.top3:.4f}",
            f"top-5        {self.top5:.4f}",
            f"jaccard      {self.jsc:.4f}",
            f"cosine       {self.cs:.4f}",
            "",
            "per-leaf top-1 (accuracy, support):",
        ]
        for leaf, (acc, n) in sorted(self.per_leaf_top1.items()):
            out.append(f"  {leaf:24s} {acc:.4f}  ({n})")
        if self.branch_top1:
            out.append("")
            out.append("branch rollups (mean of descendant-leaf accuracies):")
            for branch, acc in sorted(self.branch_top1.items()):
                out.append(f"  {branch:24s} {acc:.4f}")
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = StringIO()
        writer = csv.writer(buf)
        writer.writerow(["kind", "id", "value", "support"])
        for name in ("top1", "top3", "top5", "jsc", "cs"):
            writer.writerow(["aggregate", name, format(getattr(self, name), ".6f"), ""])
        for leaf, (acc, n) in sorted(self.per_leaf_top1.items()):
            writer.writerow(["leaf", leaf, format(acc, ".6f"), n])
        for branch, acc in sorted(self.branch_top1.items()):
            writer.writerow(["branch", branch, format(acc, ".6f"), ""])
        return buf.getvalue()


def ranked_leaves(ont: Ontology, prediction: np.ndarray) -> list[str]:
    """Leaves by descending score; ties resolved by leaf order."""
    prediction = np.asarray(prediction, dtype=np.float64)
    if prediction.shape != (len(ont.leaf_order),):
        raise EvaluationError(
            f"prediction length {prediction.shape} != {len(ont.leaf_order)} leaves"
        )
    order = np.argsort(-prediction, kind="stable")
    return [ont.leaf_order[i] for i in order]


def topk_accuracy(ont: Ontology, samples: Sequence[EvalSample], k: int) -> float:
    """Fraction of samples whose true leaves intersect the k best-scored ones."""
    if k < 1:
        raise EvaluationError("k must be >= 1")
    if k > len(ont.leaf_order):
        raise EvaluationError(f"k={k} exceeds the {len(ont.leaf_order)} leaves")
    if not samples:
        raise EvaluationError("no samples")
    hits = 0
    for sample in samples:
        top = ranked_leaves(ont, sample.prediction)[:k]
        if sample.truth_leaves & set(top):
            hits += 1
    return hits / len(samples)


def _truth_subgraph(ont_full: Ontology, truth_leaves: Iterable[str]) -> frozenset[str]:
    nodes: set[str] = set()
    for leaf in truth_leaves:
        nodes |= ont_full.subgraph_of(leaf).node_ids
    return frozenset(nodes)


def jsc(ont_full: Ontology, predicted_leaf: str, truth_leaves: Iterable[str]) -> float:
    """Jaccard similarity of the predicted and true subgraph node sets."""
    predicted = ont_full.subgraph_of(predicted_leaf).node_ids
    truth = _truth_subgraph(ont_full, truth_leaves)
    if not truth and not predicted:
        return 1.0
    return len(predicted & truth) / len(predicted | truth)


def cs(ont_full: Ontology, predicted_leaf: str, truth_leaves: Iterable[str]) -> float:
    """Cosine similarity of the multi-hot subgraph vectors."""
    predicted = ont_full.subgraph_of(predicted_leaf).node_ids
    truth = _truth_subgraph(ont_full, truth_leaves)
    if not predicted or not truth:
        return 0.0
    # sqrt of the product keeps identical sets at exactly 1.0
    return len(predicted & truth) / float(np.sqrt(len(predicted) * len(truth)))


def evaluate(
    samples: Sequence[EvalSample], ont_full: Ontology, ont_model: Ontology | None = None
) -> MetricReport:
    """Aggregate metrics, per-leaf top-1, and branch rollups.

    ``ont_model`` is the ontology the prediction vector is aligned to (it may
    be the reduced one); similarity metrics always map the predicted leaf into
    ``ont_full``. Branch rollups are plain means of their descendant leaves'
    accuracies, over leaves with any support.
    """
    if not samples:
        raise EvaluationError("no samples")
    ont_model = ont_model or ont_full
    if set(ont_model.leaf_order) - set(ont_full.leaf_order):
        raise EvaluationError("model ontology has leaves unknown to the full ontology")

    hits = {1: 0, 3: 0, 5: 0}
    ks = [k for k in hits if k <= len(ont_model.leaf_order)]
    jsc_sum = 0.0
    cs_sum = 0.0
    per_leaf: dict[str, list[int]] = {}
    for sample in samples:
        ranked = ranked_leaves(ont_model, sample.prediction)
        for k in ks:
            if sample.truth_leaves & set(ranked[:k]):
                hits[k] += 1
        top1 = ranked[0]
        jsc_sum += jsc(ont_full, top1, sample.truth_leaves)
        cs_sum += cs(ont_full, top1, sample.truth_leaves)
        correct = int(top1 in sample.truth_leaves)
        for leaf in sample.truth_leaves:
            per_leaf.setdefault(leaf, [0, 0])
            per_leaf[leaf][0] += correct
            per_leaf[leaf][1] += 1

    n = len(samples)
    per_leaf_top1 = {
        leaf: (good / total, total) for leaf, (good, total) in per_leaf.items()
    }
    branch_top1: dict[str, float] = {}
    for nid, node in ont_full.nodes.items():
        if node.kind != "branch":
            continue
        covered = [per_leaf_top1[l][0] for l in ont_full.leaves_under(nid) if l in per_leaf_top1]
        if covered:
            branch_top1[nid] = float(np.mean(covered))

    return MetricReport(
        top1=hits[1] / n if 1 in ks else 0.0,
        top3=hits[3] / n if 3 in ks else hits[1] / n,
        top5=hits[5] / n if 5 in ks else hits[1] / n,
        jsc=jsc_sum / n,
        cs=cs_sum / n,
        per_leaf_top1=per_leaf_top1,
        branch_top1=branch_top1,
    )


# -- prediction files --------------------------------------------------------------


def write_predictions(
    path: str | Path, ids: Sequence[str], rows: np.ndarray, ontology_hash: str
) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if len(ids) != rows.shape[0]:
        raise EvaluationError("id/row count mismatch")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# ontology={ontology_hash} n={rows.shape[1]}\n")
        for sid, row in zip(ids, rows):
            fh.write(sid + " " + " ".join(format(v, ".17g") for v in row) + "\n")


def read_predictions(path: str | Path) -> tuple[list[str], np.ndarray, str | None]:
    ids: list[str] = []
    rows: list[list[float]] = []
    ont_hash: str | None = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line.lstrip("# ").split():
                if token.startswith("ontology="):
                    ont_hash = token.split("=", 1)[1]
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EvaluationError(f"{path}:{lineno}: expected sample id plus scores")
        ids.append(parts[0])
        rows.append([float(t) for t in parts[1:]])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise EvaluationError(f"{path}: inconsistent row widths {sorted(widths)}")
    return ids, np.array(rows, dtype=np.float64), ont_hash
