"""Minimal reverse-mode autodiff over float64 NumPy arrays.

A :class:`Tape` records operations in creation order; :func:`backward` walks
the record in reverse, accumulating gradients into ``Tensor.grad`` slots.
Only the primitives needed by this package are implemented (elementwise
arithmetic, matmul with batch broadcasting, reductions, reshaping/slicing,
and a PSD log-determinant).  Everything is float64 and C-contiguous.

Conventions
-----------
* Gradients accumulate across repeated ``backward`` calls until
  :func:`reset_grads` is invoked.
* Constants (plain scalars/arrays) may appear on either side of binary ops;
  they receive no gradient.
* ``backward`` requires a scalar seed.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DegenerateBatchError, FactorizationError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "reset_grads",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "slice1d",
    "exp",
    "log",
    "tanh",
    "relu",
    "covariance",
    "log_det_psd",
    "finite_diff_grad",
]

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        return pow_const(self, exponent)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        if isinstance(key, slice) and self.data.ndim == 1:
            start, stop, step = key.indices(self.data.shape[0])
            if step != 1:
                raise ShapeError("only contiguous slices are differentiable")
            return slice1d(self, start, stop)
        raise ShapeError("Tensor indexing supports contiguous 1-D slices only")


class Tape:
    """Records operations so that :func:`backward` can replay them in reverse."""

    def __init__(self):
        self._steps: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._steps)

    def backward(self, seed: Tensor) -> None:
        """Accumulate d(seed)/d(tensor) into ``.grad`` of every reachable tensor."""
        if seed.data.size != 1:
            raise ContractError(
                f"backward seed must be scalar, got shape {seed.data.shape}"
            )
        pending: dict[int, np.ndarray] = {id(seed): np.ones_like(seed.data)}
        holders: dict[int, Tensor] = {id(seed): seed}
        for out, inputs, bwd in reversed(self._steps):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            holders.pop(id(out), None)
            out.grad = g if out.grad is None else out.grad + g
            for tensor, gi in zip(inputs, bwd(g)):
                k = id(tensor)
                if k in pending:
                    pending[k] = pending[k] + gi
                else:
                    pending[k] = gi
                    holders[k] = tensor
        for k, tensor in holders.items():
            g = pending[k]
            tensor.grad = g if tensor.grad is None else tensor.grad + g


def backward(tape: Tape, seed: Tensor) -> None:
    """Module-level alias for :meth:`Tape.backward`."""
    tape.backward(seed)


def reset_grads(*tensors: Tensor) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# recording helpers


def _data(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _record(out: Tensor, inputs: Sequence[Tensor], bwd: Callable) -> None:
    if _TAPES and inputs:
        _TAPES[-1]._steps.append((out, tuple(inputs), bwd))


def _record_binary(a, b, out, grad_a: Callable, grad_b: Callable) -> None:
    inputs, fns = [], []
    if isinstance(a, Tensor):
        inputs.append(a)
        fns.append(grad_a)
    if isinstance(b, Tensor):
        inputs.append(b)
        fns.append(grad_b)
    if inputs:
        _record(out, inputs, lambda g: tuple(f(g) for f in fns))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the reverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad + bd)
    _record_binary(
        a, b, out,
        lambda g: _unbroadcast(g, ad.shape),
        lambda g: _unbroadcast(g, bd.shape),
    )
    return out


def sub(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad - bd)
    _record_binary(
        a, b, out,
        lambda g: _unbroadcast(g, ad.shape),
        lambda g: _unbroadcast(-g, bd.shape),
    )
    return out


def mul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad * bd)
    _record_binary(
        a, b, out,
        lambda g: _unbroadcast(g * bd, ad.shape),
        lambda g: _unbroadcast(g * ad, bd.shape),
    )
    return out


def div(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    out = Tensor(ad / bd)
    _record_binary(
        a, b, out,
        lambda g: _unbroadcast(g / bd, ad.shape),
        lambda g: _unbroadcast(-g * ad / (bd * bd), bd.shape),
    )
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def pow_const(a: Tensor, exponent: float) -> Tensor:
    c = float(exponent)
    ad = a.data
    out = Tensor(ad**c)
    _record(out, (a,), lambda g: (g * c * ad ** (c - 1.0),))
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    _record(out, (a,), lambda g: (g * y,))
    return out


def log(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(np.log(ad))
    _record(out, (a,), lambda g: (g / ad,))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    _record(out, (a,), lambda g: (g * (1.0 - y * y),))
    return out


def relu(a: Tensor) -> Tensor:
    ad = a.data
    mask = ad > 0.0
    out = Tensor(np.where(mask, ad, 0.0))
    _record(out, (a,), lambda g: (g * mask,))
    return out


# ---------------------------------------------------------------------------
# linear algebra / shape primitives


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs 2-D (or batched) operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    out = Tensor(ad @ bd)
    _record_binary(
        a, b, out,
        lambda g: _unbroadcast(g @ _swap(bd), ad.shape),
        lambda g: _unbroadcast(_swap(ad) @ g, bd.shape),
    )
    return out


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    out = Tensor(_swap(a.data))
    _record(out, (a,), lambda g: (_swap(g),))
    return out


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    out = Tensor(a.data.reshape(shape))
    _record(out, (a,), lambda g: (g.reshape(old),))
    return out


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError(f"slice1d expects a 1-D tensor, got shape {a.data.shape}")
    out = Tensor(a.data[start:stop])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    _record(out, (a,), bwd)
    return out


def _sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    out = Tensor(ad.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape).copy(),)

    _record(out, (a,), bwd)
    return out


def _mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    n = ad.size if axis is None else ad.shape[axis]
    out = Tensor(ad.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, ad.shape).copy(),)

    _record(out, (a,), bwd)
    return out


def covariance(z: Tensor) -> Tensor:
    """Unbiased sample covariance of a batch: (Z-mean)^T (Z-mean) / (B-1)."""
    if z.data.ndim != 2:
        raise ShapeError(f"covariance expects a (batch, dim) matrix, got {z.data.shape}")
    b = z.data.shape[0]
    if b < 2:
        raise DegenerateBatchError(f"covariance needs at least 2 rows, got {b}")
    zc = sub(z, z.mean(axis=0, keepdims=True))
    return mul(matmul(transpose(zc), zc), 1.0 / (b - 1))


def log_det_psd(m: Tensor, method: str = "eigh") -> Tensor:
    """log det of a symmetric positive-definite matrix.

    The default path is a symmetric eigendecomposition, which is also reused
    for the gradient (d logdet/dM = M^{-1}, assembled from the eigenfactors
    rather than an explicit inverse).  ``method="cholesky"`` is a faster
    forward path for well-conditioned inputs.

    Raises
    ------
    FactorizationError
        If the matrix is not positive definite; the message names the
        offending eigenvalue.
    """
    md = _data(m)
    if md.ndim != 2 or md.shape[0] != md.shape[1]:
        raise ShapeError(f"log_det_psd expects a square matrix, got {md.shape}")
    if method == "cholesky":
        try:
            chol = np.linalg.cholesky(md)
        except np.linalg.LinAlgError:
            w = np.linalg.eigvalsh(md)
            raise FactorizationError(
                f"matrix is not positive definite: smallest eigenvalue {w[0]:.6e}"
            ) from None
        value = 2.0 * np.log(np.diag(chol)).sum()
        inv = np.linalg.solve(md, np.eye(md.shape[0]))
    elif method == "eigh":
        w, v = np.linalg.eigh(md)
        if w[0] <= 0.0:
            raise FactorizationError(
                f"matrix is not positive definite: smallest eigenvalue {w[0]:.6e}"
            )
        value = float(np.log(w).sum())
        inv = (v * (1.0 / w)) @ v.T
    else:
        raise ValueError(f"unknown log_det_psd method {method!r}")
    out = Tensor(value)
    if isinstance(m, Tensor):
        _record(out, (m,), lambda g: (np.asarray(g).item() * inv,))
    return out


# ---------------------------------------------------------------------------
# finite differences (independent gradient oracle)


def finite_diff_grad(f: Callable, theta, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one tensor.

    Evaluations run on a throwaway tape so the oracle never pollutes the
    caller's recording.
    """
    base = np.array(_data(theta), dtype=np.float64)
    flat = base.reshape(-1)
    grad = np.empty_like(flat)

    def evaluate(vec: np.ndarray) -> float:
        with Tape():
            out = f(Tensor(vec.reshape(base.shape)))
        return out.item() if isinstance(out, Tensor) else float(out)

    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        f_plus = evaluate(flat)
        flat[i] = keep - h
        f_minus = evaluate(flat)
        flat[i] = keep
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(base.shape)
