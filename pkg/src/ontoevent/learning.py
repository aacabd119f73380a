"""Differentiable classifier head, losses, optimizer, and inference.

The head is a single sigmoid-affine layer over precomputed feature vectors;
it stands in for the final fully-connected layer of a larger network. Three
losses are supported, alone or combined:

* ``c``    binary cross-entropy on the leaf targets
* ``cel``  weighted binary cross-entropy on the subgraph targets
* ``cos``  weighted cosine distance to the subgraph targets

plus the combined ``c+cel`` and ``c+cos``, where the leaf prediction is read
from the leaf positions of the subgraph output. Training is plain SGD with a
Nesterov momentum term, coupled weight decay, a linear-warmup/cosine-decay
learning-rate schedule, and best-validation checkpointing. All math runs
through the selected kernel backend and is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .encoding import (
    EncodingError,
    WeightVector,
    check_alignment,
    encode_subgraph,
    leaf_positions,
)
from .ontology import Ontology

EPS = 1e-12

VARIANTS = ("c", "cel", "cos", "c+cel", "c+cos")


class LearningError(Exception):
    pass


class TrainingDiverged(LearningError):
    def __init__(self, iteration: int, trace: list[tuple]):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace


# -- learning-rate schedule -----------------------------------------------------


@dataclass(frozen=True)
class LRSchedule:
    """Linear ramp from ``warmup_start`` to ``warmup_end`` over the first
    ``warmup_iters`` iterations, then cosine decay to zero at ``total_iters``."""

    warmup_start: float = 0.01
    warmup_end: float = 0.1
    warmup_iters: int = 10_000
    total_iters: int = 100_000

    def __post_init__(self):
        if not 0 <= self.warmup_iters < self.total_iters:
            raise ValueError("need 0 <= warmup_iters < total_iters")


def lr_at(schedule: LRSchedule, iteration: int) -> float:
    if iteration < 0 or iteration > schedule.total_iters:
        raise ValueError(
            f"iteration {iteration} outside [0, {schedule.total_iters}]"
        )
    if iteration <= schedule.warmup_iters:
        if schedule.warmup_iters == 0:
            return schedule.warmup_end
        frac = iteration / schedule.warmup_iters
        return schedule.warmup_start + (schedule.warmup_end - schedule.warmup_start) * frac
    span = schedule.total_iters - schedule.warmup_iters
    frac = (iteration - schedule.warmup_iters) / span
    return schedule.warmup_end * 0.5 * (1.0 + np.cos(np.pi * frac))


# -- optimizer configuration ------------------------------------------------------


@dataclass(frozen=True)
class OptimConfig:
    momentum: float = 0.9
    weight_decay: float = 1e-5
    batch_size: int = 128

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# -- classifier head ---------------------------------------------------------------


class ClassifierHead:
    """Sigmoid-affine layer: probabilities = sigmoid(features @ W + b)."""

    def __init__(self, feature_dim: int, output_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(feature_dim)
        self.weight = rng.uniform(-bound, bound, size=(feature_dim, output_dim))
        self.bias = np.zeros(output_dim)
        self.feature_dim = feature_dim
        self.output_dim = output_dim

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Clamped sigmoid outputs, strictly inside (0, 1)."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.feature_dim:
            raise LearningError(
                f"feature dim {features.shape[-1]} != head input {self.feature_dim}"
            )
        logits = features @ self.weight + self.bias
        return kernels.sigmoid(logits, EPS)

    def copy(self) -> "ClassifierHead":
        dup = ClassifierHead.__new__(ClassifierHead)
        dup.weight = self.weight.copy()
        dup.bias = self.bias.copy()
        dup.feature_dim = self.feature_dim
        dup.output_dim = self.output_dim
        return dup


# -- losses ------------------------------------------------------------------------


def _as_batch(*arrays: np.ndarray) -> tuple[list[np.ndarray], bool]:
    single = arrays[0].ndim == 1
    out = [np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in arrays]
    lengths = {a.shape[1] for a in out}
    if len(lengths) != 1:
        raise LearningError(f"mismatched vector lengths: {sorted(lengths)}")
    return out, single


def _weight_values(w, width: int) -> np.ndarray:
    if w is None:
        return np.ones(width)
    values = w.values if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if values.shape != (width,):
        raise EncodingError(
            f"weight vector length {values.shape} does not match targets ({width})"
        )
    return values


def loss_classification(y_hat: np.ndarray, y_leaf: np.ndarray) -> float:
    """Full binary cross-entropy over leaf predictions.

    Per sample the loss sums over every output, charging both the positive
    and the negative term; a batch returns the per-sample mean.
    """
    (y_hat, y_leaf), single = _as_batch(np.asarray(y_hat), np.asarray(y_leaf))
    total, _ = kernels.bce_loss_dz(y_hat, y_leaf, np.ones(y_hat.shape[1]))
    return total if single else total / y_hat.shape[0]


def loss_ontology_ce(y_hat_s: np.ndarray, y_s: np.ndarray, weights) -> float:
    """Per-term weighted binary cross-entropy over subgraph predictions."""
    (y_hat_s, y_s), single = _as_batch(np.asarray(y_hat_s), np.asarray(y_s))
    w = _weight_values(weights, y_hat_s.shape[1])
    total, _ = kernels.bce_loss_dz(y_hat_s, y_s, w)
    return total if single else total / y_hat_s.shape[0]


def loss_ontology_cos(y_hat_s: np.ndarray, y_s: np.ndarray, weights) -> float:
    """Cosine distance between the weighted predicted and true subgraph vectors."""
    (y_hat_s, y_s), single = _as_batch(np.asarray(y_hat_s), np.asarray(y_s))
    w = _weight_values(weights, y_hat_s.shape[1])
    try:
        total, _ = kernels.cos_loss_dz(y_hat_s, y_s, w)
    except ValueError as exc:
        raise LearningError(str(exc)) from None
    return total if single else total / y_hat_s.shape[0]


def loss_combined(
    y_hat_leaf: np.ndarray,
    y_hat_s: np.ndarray,
    y_leaf: np.ndarray,
    y_s: np.ndarray,
    weights,
    variant: str,
) -> float:
    """Classification loss plus the chosen ontology loss, unit coefficients."""
    if variant not in ("cel", "cos"):
        raise LearningError(f"combined variant must be 'cel' or 'cos', got {variant!r}")
    base = loss_classification(y_hat_leaf, y_leaf)
    if variant == "cel":
        return base + loss_ontology_ce(y_hat_s, y_s, weights)
    return base + loss_ontology_cos(y_hat_s, y_s, weights)


# -- loss specification and analytic gradients ----------------------------------------


@dataclass(frozen=True)
class LossSpec:
    """Which loss drives training, with its weight vector where applicable.

    ``leaf_pos`` maps leaf outputs into the subgraph output for the combined
    variants (leaf prediction = subgraph prediction sliced at those indexes).
    """

    variant: str
    weights: WeightVector | None = None
    leaf_pos: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.variant != "c" and self.weights is None:
            raise ValueError(f"variant {self.variant!r} requires a weight vector")
        if self.variant.startswith("c+") and self.leaf_pos is None:
            raise ValueError(f"variant {self.variant!r} requires leaf positions")

    @classmethod
    def for_ontology(cls, variant: str, ont: Ontology | None = None, weights=None) -> "LossSpec":
        pos = leaf_positions(ont) if ont is not None and variant.startswith("c+") else None
        if weights is not None and ont is not None:
            check_alignment(ont, weights)
        return cls(variant, weights, pos)


def batch_loss_and_grads(
    head: ClassifierHead,
    features: np.ndarray,
    leaf_targets: np.ndarray | None,
    subgraph_targets: np.ndarray | None,
    spec: LossSpec,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean batch loss and its exact analytic gradients (dW, db)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise LearningError("empty batch")
    n = features.shape[0]
    probs = np.atleast_2d(head.forward(features))

    w = None if spec.weights is None else spec.weights.values
    total = 0.0
    if spec.variant == "c":
        if leaf_targets is None:
            raise LearningError("variant 'c' needs leaf targets")
        total, dz = kernels.bce_loss_dz(
            probs, np.atleast_2d(leaf_targets), np.ones(probs.shape[1])
        )
    elif spec.variant in ("cel", "cos"):
        if subgraph_targets is None:
            raise LearningError(f"variant {spec.variant!r} needs subgraph targets")
        ys = np.atleast_2d(subgraph_targets)
        fn = kernels.bce_loss_dz if spec.variant == "cel" else kernels.cos_loss_dz
        total, dz = fn(probs, ys, _weight_values(spec.weights, probs.shape[1]))
    else:  # c+cel, c+cos
        if leaf_targets is None or subgraph_targets is None:
            raise LearningError(f"variant {spec.variant!r} needs leaf and subgraph targets")
        ys = np.atleast_2d(subgraph_targets)
        yl = np.atleast_2d(leaf_targets)
        probs_leaf = np.ascontiguousarray(probs[:, spec.leaf_pos])
        loss_c, dz_c = kernels.bce_loss_dz(probs_leaf, yl, np.ones(yl.shape[1]))
        fn = kernels.bce_loss_dz if spec.variant == "c+cel" else kernels.cos_loss_dz
        loss_o, dz = fn(probs, ys, _weight_values(spec.weights, probs.shape[1]))
        dz = np.asarray(dz).copy()
        dz[:, spec.leaf_pos] += dz_c
        total = loss_c + loss_o

    dz = np.asarray(dz) / n
    grad_w = features.T @ dz
    grad_b = dz.sum(axis=0)
    return total / n, grad_w, grad_b


# -- datasets -----------------------------------------------------------------------


@dataclass
class Dataset:
    """Features with the targets the chosen loss needs, plus the ontology hash."""

    features: np.ndarray
    leaf_targets: np.ndarray | None = None
    subgraph_targets: np.ndarray | None = None
    ontology_hash: str | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx: np.ndarray) -> tuple:
        return (
            self.features[idx],
            None if self.leaf_targets is None else self.leaf_targets[idx],
            None if self.subgraph_targets is None else self.subgraph_targets[idx],
        )


# -- trainer ------------------------------------------------------------------------


@dataclass
class TraceRow:
    iteration: int
    lr: float
    train_loss: float
    val_loss: float | None


class Trainer:
    """Deterministic SGD loop with Nesterov momentum and best-val tracking.

    Resuming from a checkpoint reproduces the exact trajectory of an
    uninterrupted run: the batch sampler's generator state travels with the
    checkpoint.
    """

    def __init__(
        self,
        head: ClassifierHead,
        train_set: Dataset,
        val_set: Dataset | None,
        spec: LossSpec,
        optim: OptimConfig = OptimConfig(),
        schedule: LRSchedule = LRSchedule(),
        seed: int = 0,
        eval_every: int = 100,
    ):
        if spec.weights is not None and train_set.ontology_hash is not None:
            if spec.weights.ontology_hash != train_set.ontology_hash:
                raise EncodingError(
                    "weight vector and dataset were built on different ontologies"
                )
        self.head = head
        self.train_set = train_set
        self.val_set = val_set
        self.spec = spec
        self.optim = optim
        self.schedule = schedule
        self.eval_every = max(1, eval_every)
        self.rng = np.random.default_rng(seed)
        self.iteration = 0
        self.vel_w = np.zeros_like(head.weight)
        self.vel_b = np.zeros_like(head.bias)
        self.best_head = head.copy()
        self.best_val = np.inf
        self.best_iteration = 0
        self.trace: list[TraceRow] = []

    def _validation_loss(self) -> float | None:
        if self.val_set is None or len(self.val_set) == 0:
            return None
        loss, _, _ = batch_loss_and_grads(
            self.head,
            self.val_set.features,
            self.val_set.leaf_targets,
            self.val_set.subgraph_targets,
            self.spec,
        )
        return loss

    def _note_validation(self) -> float | None:
        val = self._validation_loss()
        if val is not None and val < self.best_val:
            self.best_val = val
            self.best_head = self.head.copy()
            self.best_iteration = self.iteration
        return val

    def step(self) -> TraceRow:
        lr = lr_at(self.schedule, self.iteration)
        idx = self.rng.integers(0, len(self.train_set), size=self.optim.batch_size)
        feats, yl, ys = self.train_set.take(idx)
        loss, grad_w, grad_b = batch_loss_and_grads(self.head, feats, yl, ys, self.spec)
        if not np.isfinite(loss):
            raise TrainingDiverged(self.iteration, [r.__dict__ for r in self.trace])
        kernels.nesterov_step(
            self.head.weight.reshape(-1),
            self.vel_w.reshape(-1),
            grad_w.reshape(-1),
            lr,
            self.optim.momentum,
            self.optim.weight_decay,
        )
        kernels.nesterov_step(
            self.head.bias, self.vel_b, grad_b, lr, self.optim.momentum, self.optim.weight_decay
        )
        self.iteration += 1
        val = None
        if self.iteration % self.eval_every == 0:
            val = self._note_validation()
        row = TraceRow(self.iteration, lr, loss, val)
        self.trace.append(row)
        return row

    def run(self, iterations: int) -> "Trainer":
        if self.iteration + iterations > self.schedule.total_iters:
            raise LearningError(
                f"{self.iteration + iterations} iterations exceed the schedule's "
                f"total of {self.schedule.total_iters}"
            )
        for _ in range(iterations):
            self.step()
        self._note_validation()
        if self.val_set is None or len(self.val_set) == 0:
            self.best_head = self.head.copy()
            self.best_iteration = self.iteration
        return self

    # -- checkpointing ---------------------------------------------------------

    def save_checkpoint(self, path: str | Path) -> None:
        meta = {
            "iteration": self.iteration,
            "best_iteration": self.best_iteration,
            "best_val": None if not np.isfinite(self.best_val) else self.best_val,
            "variant": self.spec.variant,
            "momentum": self.optim.momentum,
            "weight_decay": self.optim.weight_decay,
            "batch_size": self.optim.batch_size,
            "schedule": [
                self.schedule.warmup_start,
                self.schedule.warmup_end,
                self.schedule.warmup_iters,
                self.schedule.total_iters,
            ],
            "eval_every": self.eval_every,
            "rng_state": self.rng.bit_generator.state,
            "ontology_hash": self.train_set.ontology_hash,
            "weights_hash": None if self.spec.weights is None else self.spec.weights.ontology_hash,
        }
        np.savez(
            path,
            weight=self.head.weight,
            bias=self.head.bias,
            vel_w=self.vel_w,
            vel_b=self.vel_b,
            best_weight=self.best_head.weight,
            best_bias=self.best_head.bias,
            meta=json.dumps(meta),
        )

    def load_checkpoint(self, path: str | Path) -> "Trainer":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["variant"] != self.spec.variant:
                raise LearningError(
                    f"checkpoint was trained with variant {meta['variant']!r}"
                )
            if meta.get("ontology_hash") and self.train_set.ontology_hash:
                if meta["ontology_hash"] != self.train_set.ontology_hash:
                    raise EncodingError("checkpoint belongs to a different ontology")
            self.head.weight = data["weight"].copy()
            self.head.bias = data["bias"].copy()
            self.vel_w = data["vel_w"].copy()
            self.vel_b = data["vel_b"].copy()
            self.best_head = self.head.copy()
            self.best_head.weight = data["best_weight"].copy()
            self.best_head.bias = data["best_bias"].copy()
        self.iteration = int(meta["iteration"])
        self.best_iteration = int(meta["best_iteration"])
        self.best_val = np.inf if meta["best_val"] is None else float(meta["best_val"])
        self.rng.bit_generator.state = meta["rng_state"]
        return self


def train(
    head: ClassifierHead,
    train_set: Dataset,
    val_set: Dataset | None,
    spec: LossSpec,
    iterations: int,
    optim: OptimConfig = OptimConfig(),
    schedule: LRSchedule | None = None,
    seed: int = 0,
    eval_every: int = 100,
) -> Trainer:
    """Run a fresh training loop; returns the trainer with trace and best head."""
    if schedule is None:
        warmup = min(iterations // 10, 10_000)
        schedule = LRSchedule(warmup_iters=warmup, total_iters=max(iterations, warmup + 1))
    trainer = Trainer(head, train_set, val_set, spec, optim, schedule, seed, eval_every)
    trainer.run(iterations)
    return trainer


def write_trace(path: str | Path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,lr,train_loss,val_loss\n")
        for row in trace:
            val = "" if row.val_loss is None else format(row.val_loss, ".10g")
            fh.write(f"{row.iteration},{row.lr:.10g},{row.train_loss:.10g},{val}\n")


# -- ontology-driven inference --------------------------------------------------------


@dataclass(frozen=True)
class InferenceResult:
    """Leaf scores from a subgraph prediction.

    ``leaf_probs`` are the subgraph probabilities read at the leaf positions,
    ``leaf_cosines`` the cosine similarity of the weighted prediction to each
    leaf's weighted subgraph prototype, and ``combined`` their elementwise
    product — the final prediction.
    """

    leaf_probs: np.ndarray
    leaf_cosines: np.ndarray
    combined: np.ndarray


def leaf_prototypes(ont: Ontology) -> np.ndarray:
    """Stack of single-leaf subgraph encodings, one row per leaf in leaf order."""
    return np.stack([encode_subgraph(ont, [leaf]) for leaf in ont.leaf_order])


def infer(y_hat_s: np.ndarray, ont: Ontology, weights: WeightVector) -> InferenceResult:
    """Combine subgraph probabilities and per-leaf cosine similarity.

    The prediction and every leaf prototype are multiplied by the training
    weights before the cosine, mirroring how the loss saw them.
    """
    check_alignment(ont, weights)
    y_hat_s = np.asarray(y_hat_s, dtype=np.float64)
    single = y_hat_s.ndim == 1
    batch = np.atleast_2d(y_hat_s)
    if batch.shape[1] != len(ont.node_order):
        raise LearningError(
            f"prediction width {batch.shape[1]} != {len(ont.node_order)} ontology nodes"
        )
    pos = leaf_positions(ont)
    w = weights.values

    probs = batch[:, pos]
    protos = leaf_prototypes(ont) * w
    proto_norms = np.linalg.norm(protos, axis=1)
    weighted = batch * w
    norms = np.linalg.norm(weighted, axis=1)
    if np.any(norms == 0.0) or np.any(proto_norms == 0.0):
        raise LearningError("cosine undefined for a zero weighted vector")
    cosines = (weighted @ protos.T) / np.outer(norms, proto_norms)
    combined = probs * cosines
    if single:
        return InferenceResult(probs[0], cosines[0], combined[0])
    return InferenceResult(probs, cosines, combined)


# -- feature files ----------------------------------------------------------------------


def write_features(path: str | Path, features: np.ndarray) -> None:
    """Write ``dim=<d> count=<n>`` then one row of reals per sample."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={features.shape[1]} count={features.shape[0]}\n")
        for row in features:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def read_features(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            fields = dict(tok.split("=", 1) for tok in header)
            dim, count = int(fields["dim"]), int(fields["count"])
        except (ValueError, KeyError):
            raise LearningError(f"{path}: bad feature header {' '.join(header)!r}") from None
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            values = [float(t) for t in raw.split()]
            if len(values) != dim:
                raise LearningError(f"{path}:{lineno}: expected {dim} values")
            rows.append(values)
    if len(rows) != count:
        raise LearningError(f"{path}: header promised {count} rows, found {len(rows)}")
    return np.array(rows, dtype=np.float64)
