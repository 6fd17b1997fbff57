"""Structured feedforward model.

Each hidden layer stacks a learned block on top of a fixed random block:
the learned block is ``V_Q @ O`` where ``V_Q = [I; -I]`` duplicates the
class-dimensional output with flipped sign, so that a ReLU keeps both the
positive and negative parts and the previous layer's optimum can always be
reproduced by the next layer (lossless flow). The random block provides
extra features and is shared by all workers through a common seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid model configuration or input shape."""


def relu(v):
    """Elementwise max(v, 0); shape preserved."""
    return np.maximum(v, 0.0)


def make_vq(q: int) -> np.ndarray:
    """The fixed 2q x q sign-duplication matrix [I_q; -I_q]."""
    if q < 1:
        raise ModelError(f"number of classes must be >= 1, got {q}")
    eye = np.eye(q)
    return np.vstack([eye, -eye])


def sample_random_matrix(rows: int, cols: int, seed: int, layer_index: int) -> np.ndarray:
    """Deterministic random block for one layer.

    Entries are i.i.d. normal scaled by 1/sqrt(cols) (fan-in scaling) so
    pre-activation variance does not depend on layer width. The RNG stream
    is keyed by (seed, layer_index): growing layers in a different order
    can never perturb earlier layers, and every worker holding the same
    seed reproduces the exact same matrix.
    """
    if rows < 1 or cols < 1:
        raise ModelError(f"random block must be at least 1x1, got {rows}x{cols}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, layer_index)))
    return rng.standard_normal((rows, cols)) / np.sqrt(cols)


@dataclass(frozen=True)
class SsfnDims:
    """Architecture sizes: input dim p, classes q, hidden width n, layer count."""

    p: int
    q: int
    n: int
    layers: int

    def __post_init__(self):
        if self.p < 1:
            raise ModelError(f"input dimension must be >= 1, got {self.p}")
        if self.q < 1:
            raise ModelError(f"number of classes must be >= 1, got {self.q}")
        if self.layers < 1:
            raise ModelError(f"number of layers must be >= 1, got {self.layers}")
        if self.n < 2 * self.q + 1:
            raise ModelError(
                f"hidden width n={self.n} leaves no random rows; need n >= 2q+1 = {2 * self.q + 1}"
            )

    @property
    def random_rows(self) -> int:
        return self.n - 2 * self.q


@dataclass(frozen=True)
class WeightMatrix:
    """One hidden-layer weight: vertical stack [V_q @ O; R]."""

    full: np.ndarray
    num_classes: int

    @property
    def learned_rows(self) -> np.ndarray:
        return self.full[: 2 * self.num_classes]

    @property
    def random_rows(self) -> np.ndarray:
        return self.full[2 * self.num_classes:]


def build_weight(o_star: np.ndarray, r: np.ndarray) -> WeightMatrix:
    """Stack the learned block V_q @ o_star on top of the random block r."""
    o_star = np.asarray(o_star, dtype=float)
    r = np.asarray(r, dtype=float)
    if o_star.ndim != 2 or r.ndim != 2:
        raise ModelError("weight blocks must be 2-D matrices")
    if o_star.shape[1] != r.shape[1]:
        raise ModelError(
            f"column mismatch: learned block has {o_star.shape[1]} columns, "
            f"random block has {r.shape[1]}"
        )
    q = o_star.shape[0]
    full = np.vstack([make_vq(q) @ o_star, r])
    return WeightMatrix(full=full, num_classes=q)


@dataclass
class SsfnNetwork:
    """Ordered hidden weights plus the final linear output matrix."""

    dims: SsfnDims
    weights: list[WeightMatrix] = field(default_factory=list)
    output: np.ndarray | None = None


def forward_features(net: SsfnNetwork, x: np.ndarray, upto_layer: int | None = None) -> np.ndarray:
    """Feature map after `upto_layer` hidden layers; layer 0 is the input itself."""
    x = np.asarray(x, dtype=float)
    if upto_layer is None:
        upto_layer = len(net.weights)
    if x.ndim != 2 or x.shape[0] != net.dims.p:
        raise ModelError(f"input must have {net.dims.p} rows, got shape {x.shape}")
    if not 0 <= upto_layer <= len(net.weights):
        raise ModelError(
            f"upto_layer={upto_layer} out of range; network has {len(net.weights)} built layers"
        )
    y = x
    for w in net.weights[:upto_layer]:
        y = relu(w.full @ y)
    return y


def predict(net: SsfnNetwork, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class scores O @ features and per-sample argmax labels (ties -> lowest index)."""
    if net.output is None:
        raise ModelError("network has no output matrix; train it first")
    scores = net.output @ forward_features(net, x)
    labels = np.argmax(scores, axis=0)
    return scores, labels


FORMAT_VERSION = 1


def save_network(net: SsfnNetwork, path) -> None:
    """Serialize to a versioned .npz container (matrices row-major)."""
    payload = {
        "format_version": np.array(FORMAT_VERSION),
        "dims": np.array([net.dims.p, net.dims.q, net.dims.n, net.dims.layers]),
        "num_weights": np.array(len(net.weights)),
        "has_output": np.array(net.output is not None),
    }
    for i, w in enumerate(net.weights):
        payload[f"weight_{i}"] = w.full
    if net.output is not None:
        payload["output"] = net.output
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_network(path) -> SsfnNetwork:
    with np.load(path) as data:
        if "format_version" not in data:
            raise ModelError(f"{path} is not a saved network (no format_version field)")
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ModelError(f"unsupported network format version {version}")
        p, q, n, layers = (int(v) for v in data["dims"])
        dims = SsfnDims(p=p, q=q, n=n, layers=layers)
        weights = [
            WeightMatrix(full=data[f"weight_{i}"], num_classes=q)
            for i in range(int(data["num_weights"]))
        ]
        output = data["output"] if bool(data["has_output"]) else None
    return SsfnNetwork(dims=dims, weights=weights, output=output)
