"""Dataset splitting, the Betti-feature MLP, the embedding-fusion classifier,
seeded training with best-validation checkpointing, and embedding table I/O.

Splits are a seeded uniform shuffle: the tail ceil(10%) of the shuffle is the
test set and the tail 10% of the remainder is a validation carve-out, so
model selection never touches the test rows. Training runs mini-batch Adam
with per-epoch seeded shuffles and keeps the parameters of the epoch with the
highest validation accuracy (earliest epoch on ties).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .betti import FeatureDataset
from .neural import (
    ADAM_LR,
    DROPOUT_STREAM,
    SHUFFLE_STREAM,
    AdamState,
    Mlp,
    adam_step,
    decode_array,
    encode_array,
    flatten_grads,
    make_rng,
    softmax,
    softmax_cross_entropy,
)

__all__ = [
    "EMBEDDING_DIM",
    "SplitConfig",
    "Split",
    "split_indices",
    "split_dataset",
    "TdaMlpModel",
    "FusionModel",
    "TrainConfig",
    "TrainResult",
    "EpochStats",
    "TrainingDivergedError",
    "best_epoch_index",
    "train",
    "predict",
    "load_embeddings",
    "save_embeddings",
    "embedding_matrix",
    "save_checkpoint",
    "load_checkpoint",
]

EMBEDDING_DIM = 64

CHECKPOINT_FORMAT = "topoclf-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.10
    validation_fraction_of_train: float = 0.10
    seed: int = 3

    def __post_init__(self) -> None:
        for name in ("test_fraction", "validation_fraction_of_train"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def split_indices(n_samples: int, cfg: SplitConfig = SplitConfig()) -> Split:
    """Disjoint, exhaustive train/validation/test indices for ``n_samples``."""
    if n_samples < 1:
        raise ValueError("cannot split an empty dataset")
    rng = make_rng(cfg.seed)
    perm = rng.permutation(n_samples)
    n_test = math.ceil(cfg.test_fraction * n_samples)
    n_val = math.ceil(cfg.validation_fraction_of_train * (n_samples - n_test))
    n_train = n_samples - n_test - n_val
    if n_test < 1 or n_val < 1 or n_train < 1:
        raise ValueError(
            f"{n_samples} samples are too few to fill train, validation, and test"
        )
    return Split(
        train=perm[:n_train],
        validation=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
    )


def split_dataset(ds: FeatureDataset, cfg: SplitConfig = SplitConfig()) -> Split:
    return split_indices(len(ds), cfg)


@dataclass(eq=False)
class TdaMlpModel:
    """Betti-feature classifier: input -> 800 -> 256 -> 128 (ReLU) -> classes.

    The 128-wide post-ReLU activation is the topological embedding feeding
    the softmax head.
    """

    net: Mlp

    @classmethod
    def build(
        cls,
        rng: np.random.Generator,
        input_dim: int = 200,
        hidden: tuple[int, ...] = (800, 256, 128),
        n_classes: int = 4,
    ) -> "TdaMlpModel":
        return cls(net=Mlp.build((input_dim, *hidden, n_classes), rng))

    @property
    def input_dim(self) -> int:
        return self.net.layers[0].n_in

    @property
    def n_classes(self) -> int:
        return self.net.layers[-1].n_out

    @property
    def embedding_dim(self) -> int:
        return self.net.layers[-2].n_out

    def forward(self, x, train=False, rng=None):
        return self.net.forward(x, train=train, rng=rng)

    def logits(self, tape) -> np.ndarray:
        return tape.output

    def backward(self, tape, dlogits) -> list[np.ndarray]:
        grads, _ = self.net.backward(tape, dlogits)
        return flatten_grads(grads)

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()


@dataclass(eq=False)
class FusionModel:
    """Two-branch classifier over ``[trunk embedding, external embedding]``.

    The Betti trunk ends in a ReLU embedding; it is concatenated (trunk
    first) with an externally supplied embedding row and passed through the
    fused head, which applies dropout to its last hidden activation before
    the softmax layer.
    """

    trunk: Mlp
    head: Mlp
    embedding_dim: int

    def __post_init__(self) -> None:
        fused = self.trunk.layers[-1].n_out + self.embedding_dim
        if self.head.layers[0].n_in != fused:
            raise ValueError(
                f"fusion head expects width {self.head.layers[0].n_in} but the "
                f"concatenation is {fused} (trunk {self.trunk.layers[-1].n_out} "
                f"+ embedding {self.embedding_dim})"
            )

    @classmethod
    def build(
        cls,
        rng: np.random.Generator,
        input_dim: int = 200,
        trunk_hidden: tuple[int, ...] = (800, 256, 128),
        embedding_dim: int = EMBEDDING_DIM,
        head_hidden: tuple[int, ...] = (256, 128),
        n_classes: int = 4,
        dropout_p: float = 0.2,
    ) -> "FusionModel":
        trunk = Mlp.build((input_dim, *trunk_hidden), rng, final_relu=True)
        fused = trunk_hidden[-1] + embedding_dim
        head = Mlp.build(
            (fused, *head_hidden, n_classes),
            rng,
            dropout_p=dropout_p,
            dropout_after=len(head_hidden) - 1,
        )
        return cls(trunk=trunk, head=head, embedding_dim=embedding_dim)

    @property
    def input_dim(self) -> int:
        return self.trunk.layers[0].n_in

    @property
    def n_classes(self) -> int:
        return self.head.layers[-1].n_out

    def forward(self, x, embeddings, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.shape != (x.shape[0], self.embedding_dim):
            raise ValueError(
                f"embedding block must be {x.shape[0]} x {self.embedding_dim}, "
                f"got {embeddings.shape}"
            )
        trunk_tape = self.trunk.forward(x, train=train)
        fused = np.concatenate([trunk_tape.output, embeddings], axis=1)
        head_tape = self.head.forward(fused, train=train, rng=rng)
        return trunk_tape, head_tape

    def logits(self, tapes) -> np.ndarray:
        return tapes[1].output

    def backward(self, tapes, dlogits) -> list[np.ndarray]:
        trunk_tape, head_tape = tapes
        head_grads, dfused = self.head.backward(head_tape, dlogits)
        trunk_width = trunk_tape.output.shape[1]
        trunk_grads, _ = self.trunk.backward(trunk_tape, dfused[:, :trunk_width])
        return flatten_grads(trunk_grads) + flatten_grads(head_grads)

    def parameters(self) -> list[np.ndarray]:
        return self.trunk.parameters() + self.head.parameters()


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = ADAM_LR
    seed: int = 3


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass(eq=False)
class TrainResult:
    history: list[EpochStats]
    best_epoch: int  # 1-based; 0 means untrained (epochs == 0)
    best_val_accuracy: float
    adam: AdamState  # optimizer state snapshotted at the best epoch


def best_epoch_index(accuracies: Sequence[float]) -> int:
    """Index of the highest accuracy; ties resolve to the earliest entry."""
    best = 0
    for i, acc in enumerate(accuracies):
        if acc > accuracies[best]:
            best = i
    return best


def train(
    model: TdaMlpModel | FusionModel,
    features: np.ndarray,
    labels: np.ndarray,
    split: Split,
    cfg: TrainConfig = TrainConfig(),
    embeddings: np.ndarray | None = None,
) -> TrainResult:
    """Mini-batch Adam training; leaves ``model`` at its best-validation epoch.

    ``features``/``labels`` (and ``embeddings`` for fusion models) cover the
    whole dataset and are indexed through ``split``. The final partial batch
    of each epoch is trained on.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    onehot = np.eye(model.n_classes)[y]
    is_fusion = isinstance(model, FusionModel)
    if is_fusion:
        if embeddings is None:
            raise ValueError("fusion training requires an embedding block")
        emb = np.asarray(embeddings, dtype=np.float64)
    params = model.parameters()
    adam = AdamState.for_params(params, lr=cfg.learning_rate)
    shuffle_rng = make_rng(cfg.seed, SHUFFLE_STREAM)
    dropout_rng = make_rng(cfg.seed, DROPOUT_STREAM)

    x_val = x[split.validation]
    y_val = y[split.validation]
    e_val = emb[split.validation] if is_fusion else None

    history: list[EpochStats] = []
    best_params = [p.copy() for p in params]
    best_adam = _copy_adam(adam)
    best_acc = -1.0
    best_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_rng.permutation(len(split.train))
        order = split.train[perm]
        losses: list[float] = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if is_fusion:
                tape = model.forward(x[batch], emb[batch], train=True, rng=dropout_rng)
            else:
                tape = model.forward(x[batch], train=True, rng=dropout_rng)
            loss, _probs, dlogits = softmax_cross_entropy(model.logits(tape), onehot[batch])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            adam_step(params, model.backward(tape, dlogits), adam)
            losses.append(loss)
        val_probs = predict(model, x_val, e_val)
        val_acc = float((val_probs.argmax(axis=1) == y_val).mean())
        history.append(EpochStats(epoch, float(np.mean(losses)), val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = [p.copy() for p in params]
            best_adam = _copy_adam(adam)
    for p, bp in zip(params, best_params):
        p[...] = bp
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc if history else 0.0,
        adam=best_adam,
    )


def predict(
    model: TdaMlpModel | FusionModel,
    features: np.ndarray,
    embeddings: np.ndarray | None = None,
) -> np.ndarray:
    """Class-probability rows with dropout disabled."""
    x = np.asarray(features, dtype=np.float64)
    if isinstance(model, FusionModel):
        if embeddings is None:
            raise ValueError("fusion prediction requires an embedding block")
        tape = model.forward(x, embeddings, train=False)
    else:
        tape = model.forward(x, train=False)
    return softmax(model.logits(tape))


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read a ``sample_id,e00..e63`` CSV into an id -> vector table."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty embeddings file")
    header = lines[0].split(",")
    n_value_cols = len(header) - 1
    if n_value_cols != EMBEDDING_DIM:
        raise ValueError(
            f"{path}: expected {EMBEDDING_DIM} embedding columns, found {n_value_cols}"
        )
    expected = ["sample_id"] + [f"e{i:02d}" for i in range(EMBEDDING_DIM)]
    if header != expected:
        raise ValueError(f"{path}: malformed header (expected sample_id,e00..e63)")
    table: dict[str, np.ndarray] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != EMBEDDING_DIM + 1:
            raise ValueError(
                f"{path}:{ln}: expected {EMBEDDING_DIM + 1} columns, found {len(parts)}"
            )
        sid = parts[0]
        if sid in table:
            raise ValueError(f"{path}:{ln}: duplicate sample_id {sid!r}")
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: non-numeric embedding entry") from exc
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{path}:{ln}: non-finite embedding entry")
        table[sid] = vec
    return table


def save_embeddings(table: dict[str, np.ndarray], path) -> None:
    """Write an embedding table; rows sorted by sample_id for stable bytes."""
    header = "sample_id," + ",".join(f"e{i:02d}" for i in range(EMBEDDING_DIM))
    lines = [header]
    for sid in sorted(table):
        vec = np.asarray(table[sid], dtype=np.float64)
        if vec.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding for {sid!r} must have length {EMBEDDING_DIM}")
        lines.append(sid + "," + ",".join(repr(float(v)) for v in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def embedding_matrix(table: dict[str, np.ndarray], sample_ids: Sequence[str]) -> np.ndarray:
    """Stack table rows in ``sample_ids`` order; every id must be present."""
    rows = []
    for sid in sample_ids:
        if sid not in table:
            raise ValueError(f"no embedding for sample_id {sid!r}")
        rows.append(table[sid])
    return np.stack(rows)


def save_checkpoint(
    path,
    model: TdaMlpModel | FusionModel,
    *,
    epoch: int,
    adam: AdamState | None = None,
    config: dict | None = None,
) -> None:
    """Versioned JSON checkpoint: shapes, float64 parameters, Adam state."""
    payload: dict = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "encoding": "base64 little-endian float64",
        "epoch": int(epoch),
        "config": config or {},
    }
    if isinstance(model, FusionModel):
        payload["kind"] = "fusion"
        payload["trunk_widths"] = list(model.trunk.widths)
        payload["head_widths"] = list(model.head.widths)
        payload["embedding_dim"] = model.embedding_dim
        payload["dropout_p"] = model.head.dropout_p
        payload["dropout_after"] = model.head.dropout_after
    else:
        payload["kind"] = "tda"
        payload["widths"] = list(model.net.widths)
    payload["params"] = [encode_array(p) for p in model.parameters()]
    if adam is not None:
        payload["adam"] = {
            "step": adam.step,
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "m": [encode_array(a) for a in adam.m],
            "v": [encode_array(a) for a in adam.v],
        }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[TdaMlpModel | FusionModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, raw payload)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    arrays = [decode_array(spec) for spec in payload["params"]]
    if payload["kind"] == "fusion":
        trunk = _mlp_from_widths(tuple(payload["trunk_widths"]), final_relu=True)
        head = _mlp_from_widths(
            tuple(payload["head_widths"]),
            dropout_p=float(payload["dropout_p"]),
            dropout_after=payload["dropout_after"],
        )
        model: TdaMlpModel | FusionModel = FusionModel(
            trunk=trunk, head=head, embedding_dim=int(payload["embedding_dim"])
        )
    else:
        model = TdaMlpModel(net=_mlp_from_widths(tuple(payload["widths"])))
    params = model.parameters()
    if len(params) != len(arrays):
        raise ValueError(f"{path}: parameter count does not match declared shapes")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise ValueError(f"{path}: parameter shape {a.shape} does not match {p.shape}")
        p[...] = a
    return model, payload


def _mlp_from_widths(
    widths: tuple[int, ...],
    final_relu: bool = False,
    dropout_p: float = 0.0,
    dropout_after: int | None = None,
) -> Mlp:
    from .neural import DenseLayer

    layers = [
        DenseLayer(weights=np.zeros((b, a)), biases=np.zeros(b))
        for a, b in zip(widths[:-1], widths[1:])
    ]
    return Mlp(
        layers=layers,
        final_relu=final_relu,
        dropout_p=dropout_p,
        dropout_after=dropout_after,
    )


def _copy_adam(state: AdamState) -> AdamState:
    return AdamState(
        m=[a.copy() for a in state.m],
        v=[a.copy() for a in state.v],
        step=state.step,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
