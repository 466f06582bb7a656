"""Small fully connected network with tanh hidden layers, written directly in numpy.

Layers compute ``a_{l+1} = tanh(a_l @ W_l + b_l)`` with an affine output
layer. All routines take a batch ``(B, D)`` (a single ``(D,)`` input is
promoted). Gradients are returned per layer as ``(dW, db)`` pairs summed over
the batch, and can be flattened into the parameter order used by
:func:`flatten_params`.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

WEIGHTS_FORMAT_VERSION = 1
STD_FLOOR = 1e-12


class ShapeMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class CorruptFile(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError("only tanh hidden layers are supported")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeMismatch("need one weight matrix and bias per layer transition")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise ShapeMismatch(f"layer {l}: W {w.shape}, b {b.shape} vs dims {self.layer_dims[l:l + 2]}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims), [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(layer_dims, seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in layer_dims]
    ws, bs = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (n_in + n_out))
        ws.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        bs.append(np.zeros(n_out))
    return Mlp(dims, ws, bs)


# ---------------------------------------------------------------------------
# parameter vector


def flatten_params(net: Mlp) -> np.ndarray:
    """``[W_0.ravel(), b_0, W_1.ravel(), b_1, ...]``."""
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(net.weights, net.biases)])


def unflatten_params(net: Mlp, flat: np.ndarray) -> Mlp:
    flat = np.asarray(flat, dtype=float)
    if flat.size != net.n_params:
        raise ShapeMismatch(f"expected {net.n_params} parameters, got {flat.size}")
    ws, bs, pos = [], [], 0
    for w, b in zip(net.weights, net.biases):
        ws.append(flat[pos:pos + w.size].reshape(w.shape).copy())
        pos += w.size
        bs.append(flat[pos:pos + b.size].copy())
        pos += b.size
    return Mlp(list(net.layer_dims), ws, bs, net.activation)


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


# ---------------------------------------------------------------------------
# forward / backward


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != {net.layer_dims[0]}")
    return x, single


def forward(net: Mlp, x, return_cache: bool = False):
    """Network output ``(B, Q)`` (or ``(Q,)`` for one input) and optionally the activations."""
    a, single = _as_batch(net, x)
    acts = [a]
    n = len(net.weights)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        a = np.tanh(z) if l < n - 1 else z
        acts.append(a)
    out = a[0] if single else a
    return (out, acts) if return_cache else out


def backward(net: Mlp, cache, upstream) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of ``sum(out * upstream)`` for every ``(W_l, b_l)``.

    ``cache`` is the activation list returned by ``forward(..., return_cache=True)``.
    """
    acts = cache
    delta = np.atleast_2d(np.asarray(upstream, dtype=float))
    if delta.shape != acts[-1].shape:
        raise ShapeMismatch(f"upstream {delta.shape} vs output {acts[-1].shape}")
    grads = []
    for l in range(len(net.weights) - 1, -1, -1):
        grads.append((acts[l].T @ delta, delta.sum(axis=0)))
        if l > 0:
            delta = (delta @ net.weights[l].T) * (1.0 - acts[l] ** 2)
    return grads[::-1]


# ---------------------------------------------------------------------------
# target normalization


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    input_lo: np.ndarray = field(default_factory=lambda: np.zeros(0))
    input_hi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.maximum(np.asarray(self.std, dtype=float), STD_FLOOR)
        self.input_lo = np.asarray(self.input_lo, dtype=float)
        self.input_hi = np.asarray(self.input_hi, dtype=float)

    @classmethod
    def fit(cls, targets, input_lo=(), input_hi=()) -> "NormalizationStats":
        t = np.atleast_2d(np.asarray(targets, dtype=float))
        if t.shape[0] == 0:
            raise EmptyDataset("cannot fit statistics on zero targets")
        return cls(t.mean(axis=0), t.std(axis=0), input_lo, input_hi)

    @classmethod
    def identity(cls, q: int) -> "NormalizationStats":
        return cls(np.zeros(q), np.ones(q))

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, z):
        return self.mean + self.std * np.asarray(z, dtype=float)


# ---------------------------------------------------------------------------
# supervised loss


def mse_loss_grad(net: Mlp, inputs, targets, loss: str = "mse", huber_delta: float = 1.0):
    """Summed squared error ``sum_i ||z_i - g(w, lam_i)||^2`` and its flat gradient.

    ``loss="huber"`` replaces the square by the Huber function (quadratic
    ``r^2`` inside ``|r| <= huber_delta``), the same scale as the squared loss.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    z = np.atleast_2d(np.asarray(targets, dtype=float))
    if x.shape[0] == 0:
        raise EmptyDataset("empty dataset")
    if z.shape[0] != x.shape[0]:
        raise ShapeMismatch("inputs and targets differ in length")
    out, cache = forward(net, x, return_cache=True)
    if out.shape != z.shape:
        raise ShapeMismatch(f"output {out.shape} vs targets {z.shape}")
    r = out - z
    if loss == "mse":
        value = float(np.sum(r**2))
        upstream = 2.0 * r
    elif loss == "huber":
        a = np.abs(r)
        inside = a <= huber_delta
        value = float(np.sum(np.where(inside, r**2, 2.0 * huber_delta * a - huber_delta**2)))
        upstream = np.where(inside, 2.0 * r, 2.0 * huber_delta * np.sign(r))
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, flatten_grads(backward(net, cache, upstream))


# ---------------------------------------------------------------------------
# weight files


def _canonical(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _weights_document(net: Mlp, stats: NormalizationStats, meta: dict | None = None) -> dict:
    doc = {
        "version": WEIGHTS_FORMAT_VERSION,
        "layer_dims": [int(d) for d in net.layer_dims],
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "normalization": {
            "mean": stats.mean.tolist(),
            "std": stats.std.tolist(),
            "input_lo": stats.input_lo.tolist(),
            "input_hi": stats.input_hi.tolist(),
        },
    }
    if meta:
        doc["meta"] = dict(meta)
    return doc


def save_weights(path, net: Mlp, stats: NormalizationStats, meta: dict | None = None) -> None:
    """Write a JSON weight file; ``checksum`` is the CRC32 of the canonical body without it.

    Floats go through ``repr`` so the round trip is bit-exact. ``meta`` is a
    free-form JSON mapping stored alongside (and covered by the checksum).
    """
    doc = _weights_document(net, stats, meta)
    doc["checksum"] = zlib.crc32(_canonical(doc))
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def load_weights(path, with_meta: bool = False):
    """``(net, stats)``, or ``(net, stats, meta)`` with ``with_meta``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"cannot read weight file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptFile("weight file is not a JSON object")
    if doc.get("version") != WEIGHTS_FORMAT_VERSION:
        raise VersionMismatch(f"weight file version {doc.get('version')!r}, expected {WEIGHTS_FORMAT_VERSION}")
    if "normalization" not in doc:
        raise VersionMismatch("weight file lacks the normalization block")
    stored = doc.pop("checksum", None)
    if stored != zlib.crc32(_canonical(doc)):
        raise CorruptFile("checksum mismatch")
    try:
        net = Mlp(
            [int(d) for d in doc["layer_dims"]],
            [np.array(w, dtype=float) for w in doc["weights"]],
            [np.array(b, dtype=float) for b in doc["biases"]],
            doc["activation"],
        )
        n = doc["normalization"]
        stats = NormalizationStats(n["mean"], n["std"], n["input_lo"], n["input_hi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"malformed weight file: {exc}") from exc
    if with_meta:
        return net, stats, doc.get("meta", {})
    return net, stats
