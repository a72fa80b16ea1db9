"""Feed-forward network core in float64.

Dense layers, ReLU, inverted dropout, softmax cross-entropy, exact
reverse-mode gradients, and bias-corrected Adam. All randomness flows through
seeded Philox (counter-based) bit generators, so identical seeds reproduce
identical initialisations, shuffles, and dropout masks. Substreams come from
``Philox.jumped``: stream 0 initialises weights, stream 1 drives epoch
shuffles, stream 2 draws dropout masks.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ADAM_LR",
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
    "INIT_STREAM",
    "SHUFFLE_STREAM",
    "DROPOUT_STREAM",
    "make_rng",
    "DenseLayer",
    "Mlp",
    "ForwardTape",
    "AdamState",
    "adam_step",
    "relu",
    "dropout",
    "softmax",
    "cross_entropy",
    "softmax_cross_entropy",
    "encode_array",
    "decode_array",
]

ADAM_LR = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

INIT_STREAM = 0
SHUFFLE_STREAM = 1
DROPOUT_STREAM = 2

_PROB_FLOOR = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox4x64 generator for ``seed``; ``stream`` picks a disjoint substream."""
    bg = np.random.Philox(key=seed)
    if stream:
        bg = bg.jumped(stream)
    return np.random.Generator(bg)


@dataclass(eq=False)
class DenseLayer:
    """Affine map y = W x + b with W of shape (n_out, n_in)."""

    weights: np.ndarray
    biases: np.ndarray

    @classmethod
    def glorot(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        limit = math.sqrt(6.0 / (n_in + n_out))
        weights = rng.uniform(-limit, limit, size=(n_out, n_in))
        return cls(weights=weights, biases=np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_out(self) -> int:
        return int(self.weights.shape[0])

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(
                f"input of shape {x.shape} does not match layer "
                f"({self.n_out} x {self.n_in})"
            )
        return x @ self.weights.T + self.biases


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dropout(
    x: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout; returns ``(output, multiplier)``.

    The multiplier holds 0 for dropped entries and 1/(1-p) for kept ones, so
    a backward pass just multiplies by it. Eval mode is the identity with an
    all-ones multiplier.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    multiplier = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * multiplier, multiplier


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean negative log-likelihood; probabilities floored at 1e-12."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    p = np.maximum(pred, _PROB_FLOOR)
    return float(-(target * np.log(p)).sum(axis=-1).mean())


def softmax_cross_entropy(
    logits: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus its exact logit gradient ``(softmax - target) / batch``."""
    probs = softmax(logits)
    loss = cross_entropy(probs, target)
    grad = (probs - target) / logits.shape[0]
    return loss, probs, grad


@dataclass(eq=False)
class ForwardTape:
    """Per-layer records from one forward pass, consumed by ``Mlp.backward``.

    ``inputs[i]`` is the activation feeding layer i, ``preacts[i]`` its affine
    output; dropout multipliers appear in ``masks`` only for training passes.
    """

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    output: np.ndarray
    masks: dict[int, np.ndarray]
    train: bool


@dataclass(eq=False)
class Mlp:
    """Dense stack with ReLU between layers.

    ``final_relu=False`` leaves the last layer as raw logits (classifier
    head); ``final_relu=True`` applies ReLU everywhere (embedding trunk).
    ``dropout_after`` names the hidden activation that receives inverted
    dropout at rate ``dropout_p``.
    """

    layers: list[DenseLayer]
    final_relu: bool = False
    dropout_p: float = 0.0
    dropout_after: int | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("Mlp needs at least one layer")
        if self.dropout_after is not None:
            last_hidden = len(self.layers) - 1 - (0 if self.final_relu else 1)
            if not 0 <= self.dropout_after <= last_hidden:
                raise ValueError("dropout must sit on a hidden activation")

    @classmethod
    def build(
        cls,
        widths: tuple[int, ...],
        rng: np.random.Generator,
        final_relu: bool = False,
        dropout_p: float = 0.0,
        dropout_after: int | None = None,
    ) -> "Mlp":
        layers = [
            DenseLayer.glorot(a, b, rng) for a, b in zip(widths[:-1], widths[1:])
        ]
        return cls(
            layers=layers,
            final_relu=final_relu,
            dropout_p=dropout_p,
            dropout_after=dropout_after,
        )

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].n_in, *(layer.n_out for layer in self.layers))

    def forward(
        self,
        x: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
        masks: dict[int, np.ndarray] | None = None,
    ) -> ForwardTape:
        a = np.asarray(x, dtype=np.float64)
        inputs: list[np.ndarray] = []
        preacts: list[np.ndarray] = []
        recorded: dict[int, np.ndarray] = {}
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            inputs.append(a)
            z = layer.forward(a)
            preacts.append(z)
            a = z if (i == last and not self.final_relu) else relu(z)
            if i == self.dropout_after:
                if masks is not None:
                    m = masks[i]
                    a = a * m
                else:
                    a, m = dropout(a, self.dropout_p, "train" if train else "eval", rng)
                if train:
                    recorded[i] = m
        return ForwardTape(inputs=inputs, preacts=preacts, output=a, masks=recorded, train=train)

    def backward(
        self, tape: ForwardTape, dout: np.ndarray
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Exact gradients given d(loss)/d(output).

        Returns ``([(dW, db), ...]`` aligned with ``layers``, and
        d(loss)/d(input). Recorded dropout multipliers are honoured.
        """
        if len(tape.preacts) != len(self.layers):
            raise ValueError("tape does not match this network")
        grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(self.layers)
        delta = np.asarray(dout, dtype=np.float64)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            if i == self.dropout_after:
                mask = tape.masks.get(i)
                if mask is not None:
                    delta = delta * mask
            if not (i == last and not self.final_relu):
                delta = delta * (tape.preacts[i] > 0)
            layer = self.layers[i]
            grads[i] = (delta.T @ tape.inputs[i], delta.sum(axis=0))
            delta = delta @ layer.weights
        return grads, delta  # type: ignore[return-value]

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out


@dataclass(eq=False)
class AdamState:
    """First/second-moment accumulators plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = ADAM_LR) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("parameter, gradient, and state lists must align")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """[(dW, db), ...] -> [dW0, db0, dW1, db1, ...], matching parameters()."""
    flat: list[np.ndarray] = []
    for dw, db in grads:
        flat.append(dw)
        flat.append(db)
    return flat


def encode_array(a: np.ndarray) -> dict:
    """JSON-safe array container: shape + base64 of little-endian float64."""
    data = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def decode_array(spec: dict) -> np.ndarray:
    buf = base64.b64decode(spec["data"])
    return np.frombuffer(buf, dtype="<f8").reshape(spec["shape"]).copy()
