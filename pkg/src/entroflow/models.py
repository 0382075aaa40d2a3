"""Small differentiable encoders and synthetic supervised tasks.

Two encoder families produce a representation batch Z and predictions Yhat:

* ``mlp``   -- input -> hidden_dims... -> rep layer (width ``rep_dim``) -> linear head.
* ``attn1`` -- input reshaped to a token sequence, one self-attention block,
  mean pooling, rep layer, linear head.  ``hidden_dims`` must hold exactly
  one entry: the token embedding width, which must divide ``input_dim``.

Z is the rep layer's post-activation output in both cases.  Parameters live
in a single flat vector; layer k uses weights N(0, 1/fan_in) and zero biases.

Tasks are synthetic: low-rank linear regression (targets carry an intrinsic
low-dimensional structure) and a k-cluster Gaussian classification problem.
Datasets are generated deterministically from the task seed and frozen
read-only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .rng import TAG_DATA, TAG_VAL, make_rng

ENCODER_KINDS = ("mlp", "attn1")
ACTIVATIONS = ("tanh", "relu")
TASK_KINDS = ("regression_lowrank", "classify_gaussians")


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "mlp"
    input_dim: int = 8
    hidden_dims: tuple = ()
    rep_dim: int = 8
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        for name in ("input_dim", "rep_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must all be >= 1, got {self.hidden_dims}")
        if self.kind == "attn1":
            if len(self.hidden_dims) != 1:
                raise ConfigError(
                    "attn1 takes exactly one hidden dim (the token width), "
                    f"got {list(self.hidden_dims)}"
                )
            if self.input_dim % self.hidden_dims[0] != 0:
                raise ConfigError(
                    f"token width {self.hidden_dims[0]} must divide "
                    f"input_dim {self.input_dim}"
                )


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "classify_gaussians"
    n_train: int = 256
    n_test: int = 256
    input_dim: int = 8
    noise_std: float = 0.5
    seed: int = 0
    # classification extras (ignored by regression)
    n_classes: int = 4
    separation: float = 3.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.n_train < 2:
            raise ConfigError(f"n_train must be >= 2, got {self.n_train}")
        if self.n_test < 1:
            raise ConfigError(f"n_test must be >= 1, got {self.n_test}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.kind == "classify_gaussians" and self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")

    @property
    def output_dim(self) -> int:
        return 1 if self.kind == "regression_lowrank" else self.n_classes


@dataclass(frozen=True)
class Batch:
    """One data split; ``y`` is (n,1) float for regression, (n,) int labels otherwise."""

    x: np.ndarray
    y: np.ndarray
    kind: str


@dataclass(frozen=True)
class Dataset:
    spec: TaskSpec
    train: Batch
    val: Batch
    test: Batch


# ---------------------------------------------------------------------------
# parameters


def _layer_dims(spec: EncoderSpec) -> list[tuple[int, int]]:
    if spec.kind == "mlp":
        widths = [spec.input_dim, *spec.hidden_dims, spec.rep_dim]
        dims = list(zip(widths[:-1], widths[1:]))
    else:  # attn1: Wq, Wk, Wv, then rep and head
        e = spec.hidden_dims[0]
        dims = [(e, e), (e, e), (e, e), (e, spec.rep_dim)]
    dims.append((dims[-1][1], spec.output_dim))
    return dims


def param_count(spec: EncoderSpec) -> int:
    return sum((fi + 1) * fo for fi, fo in _layer_dims(spec))


def init_params(spec: EncoderSpec, seed: int) -> Tensor:
    """Flat parameter vector: weights N(0, 1/fan_in), biases zero."""
    rng = make_rng(seed)
    chunks = []
    for fi, fo in _layer_dims(spec):
        chunks.append(rng.standard_normal(fi * fo) / np.sqrt(fi))
        chunks.append(np.zeros(fo))
    return Tensor(np.concatenate(chunks))


def unpack_params(theta: Tensor, spec: EncoderSpec) -> list[tuple[Tensor, Tensor]]:
    """Views (W, b) per layer, all on the tape."""
    n = param_count(spec)
    if theta.data.shape != (n,):
        raise ShapeError(
            f"parameter vector has shape {theta.data.shape}, expected ({n},) for {spec.kind}"
        )
    layers = []
    offset = 0
    for fi, fo in _layer_dims(spec):
        w = ad.reshape(ad.slice1d(theta, offset, offset + fi * fo), (fi, fo))
        offset += fi * fo
        b = ad.slice1d(theta, offset, offset + fo)
        offset += fo
        layers.append((w, b))
    return layers


# ---------------------------------------------------------------------------
# forward passes


def _activate(x: Tensor, activation: str) -> Tensor:
    return ad.tanh(x) if activation == "tanh" else ad.relu(x)


def softmax_last(x: Tensor) -> Tensor:
    """Row-stabilized softmax over the last axis (constant shift off-tape)."""
    shift = x.data.max(axis=-1, keepdims=True)
    e = ad.exp(x - shift)
    return ad.div(e, e.sum(axis=-1, keepdims=True))


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention over (B, s, e) stacks."""
    e_dim = q.data.shape[-1]
    scores = ad.matmul(q, ad.transpose(k)) * (1.0 / np.sqrt(e_dim))
    return ad.matmul(softmax_last(scores), v)


def forward(theta: Tensor, x, spec: EncoderSpec) -> tuple[Tensor, Tensor]:
    """Run the encoder; returns (Z, Yhat), both on the tape."""
    xd = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if xd.ndim != 2 or xd.shape[1] != spec.input_dim:
        raise ShapeError(f"input has shape {xd.shape}, expected (B, {spec.input_dim})")
    xt = x if isinstance(x, Tensor) else Tensor(xd)
    layers = unpack_params(theta, spec)
    if spec.kind == "mlp":
        a = xt
        for w, b in layers[:-1]:
            a = _activate(ad.matmul(a, w) + b, spec.activation)
        z = a
    else:
        e = spec.hidden_dims[0]
        s = spec.input_dim // e
        seq = ad.reshape(xt, (xd.shape[0], s, e))
        (wq, bq), (wk, bk), (wv, bv), (wr, br) = layers[:-1]
        q = ad.matmul(seq, wq) + bq
        k = ad.matmul(seq, wk) + bk
        v = ad.matmul(seq, wv) + bv
        pooled = attention(q, k, v).mean(axis=1)
        z = _activate(ad.matmul(pooled, wr) + br, spec.activation)
    w_head, b_head = layers[-1]
    yhat = ad.matmul(z, w_head) + b_head
    return z, yhat


# ---------------------------------------------------------------------------
# losses and the generalization gap


def pred_loss(yhat: Tensor, y, task_kind: str) -> Tensor:
    """Mean squared error (regression) or softmax cross-entropy (classification)."""
    if task_kind == "regression_lowrank":
        target = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
        if yhat.data.shape != target.shape:
            raise ShapeError(f"prediction shape {yhat.data.shape} != target {target.shape}")
        diff = yhat - target
        return (diff * diff).mean()
    if task_kind == "classify_gaussians":
        labels = np.asarray(y)
        n, k = yhat.data.shape
        if labels.shape != (n,):
            raise ShapeError(f"labels have shape {labels.shape}, expected ({n},)")
        onehot = np.zeros((n, k))
        onehot[np.arange(n), labels.astype(int)] = 1.0
        shift = yhat.data.max(axis=1, keepdims=True)
        lse = ad.log(ad.exp(yhat - shift).sum(axis=1, keepdims=True)) + shift
        picked = (yhat * onehot).sum(axis=1, keepdims=True)
        return (lse - picked).mean()
    raise ConfigError(f"unknown task kind {task_kind!r}")


def eval_loss(theta: Tensor, batch: Batch, spec: EncoderSpec) -> float:
    """Predictive loss off the tape (no gradients recorded)."""
    with ad.Tape():
        _, yhat = forward(Tensor(theta.data), batch.x, spec)
        value = pred_loss(yhat, batch.y, batch.kind)
    return value.item()


def gen_gap(theta: Tensor, train_set: Batch, test_set: Batch, spec: EncoderSpec) -> float:
    """Test-minus-train predictive loss."""
    return eval_loss(theta, test_set, spec) - eval_loss(theta, train_set, spec)


# ---------------------------------------------------------------------------
# synthetic tasks


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def _regression_split(task: TaskSpec, w: np.ndarray, n: int, rng) -> Batch:
    x = rng.standard_normal((n, task.input_dim))
    y = x @ w[:, None] + task.noise_std * rng.standard_normal((n, 1))
    _freeze(x, y)
    return Batch(x, y, task.kind)


def _classify_split(task: TaskSpec, centers: np.ndarray, n: int, rng) -> Batch:
    labels = rng.integers(0, task.n_classes, size=n)
    x = centers[labels] + task.noise_std * rng.standard_normal((n, task.input_dim))
    _freeze(x, labels)
    return Batch(x, labels, task.kind)


def make_dataset(task: TaskSpec) -> Dataset:
    """Generate immutable train/val/test splits from the task seed.

    The validation split (same size as test) feeds reward signals so the
    test split stays out of any control loop.
    """
    rng = make_rng(task.seed, TAG_DATA)
    rng_val = make_rng(task.seed, TAG_VAL)
    if task.kind == "regression_lowrank":
        r = max(1, task.input_dim // 2)  # intrinsic dimension of the targets
        v = rng.standard_normal((r, task.input_dim))
        u = rng.standard_normal(r)
        w = v.T @ u
        w /= np.linalg.norm(w)
        splits = [
            _regression_split(task, w, task.n_train, rng),
            _regression_split(task, w, task.n_test, rng_val),
            _regression_split(task, w, task.n_test, rng),
        ]
    else:
        directions = rng.standard_normal((task.n_classes, task.input_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        centers = task.separation * directions
        splits = [
            _classify_split(task, centers, task.n_train, rng),
            _classify_split(task, centers, task.n_test, rng_val),
            _classify_split(task, centers, task.n_test, rng),
        ]
    return Dataset(task, *splits)


def write_dataset_csv(path, batch: Batch, output_dim: int) -> None:
    """Export a split as CSV: x_0..x_{d-1}, y_0..y_{o-1} (labels one-hot)."""
    d = batch.x.shape[1]
    if batch.kind == "regression_lowrank":
        y_cols = np.asarray(batch.y, dtype=float)
    else:
        y_cols = np.zeros((batch.x.shape[0], output_dim))
        y_cols[np.arange(batch.x.shape[0]), np.asarray(batch.y, dtype=int)] = 1.0
    header = [f"x_{i}" for i in range(d)] + [f"y_{j}" for j in range(y_cols.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi in zip(batch.x, y_cols):
            writer.writerow([f"{v:.17g}" for v in (*xi, *yi)])
