"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is exactly what the recommendation model graph needs: 2-D matmul,
row-wise softmax family, layer norm, embedding gathers, concatenation and
slicing, and a handful of pointwise functions. There is no broadcasting
beyond bias-add; shapes are explicit everywhere. Everything is float64 so
that finite-difference gradient checks have headroom.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

# Additive mask value for causal attention. exp() of it underflows to exactly
# 0.0 in float64 while keeping every materialized array finite.
MASK_VALUE = -1e30

# When True, every op asserts its output is finite. Costs ~1 numpy pass per op.
DEBUG_CHECK_FINITE = False


def set_debug_checks(enabled: bool) -> None:
    global DEBUG_CHECK_FINITE
    DEBUG_CHECK_FINITE = bool(enabled)


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """A dense float64 array plus the graph record that produced it.

    ``_prev`` holds the input tensors and ``_vjp`` maps the output gradient to
    one gradient array per input (``None`` for inputs that do not need one).
    Leaves have neither.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "name", "_prev", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_f64(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.name = name
        self._prev: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, prev: tuple["Tensor", ...], vjp, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in prev)
        if out.requires_grad:
            out.op = op
            out._prev = prev
            out._vjp = vjp
        else:
            # Constant-only result: keep it a leaf so dead graph is not retained.
            out.op = "leaf"
            out._prev = ()
            out._vjp = None
        if DEBUG_CHECK_FINITE and not np.all(np.isfinite(out.data)):
            raise NumericError(f"non-finite output of op '{op}' with shape {data.shape}")
        return out

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        if self.shape == other.shape:
            def vjp(g):
                return g, g
            return Tensor._from_op(self.data + other.data, (self, other), vjp, "add")
        # bias-add: (n, d) + (d,)
        if self.ndim == 2 and other.ndim == 1 and self.shape[1] == other.shape[0]:
            def vjp(g):
                return g, g.sum(axis=0)
            return Tensor._from_op(self.data + other.data, (self, other), vjp, "add_bias")
        raise ShapeError(f"add: incompatible shapes {self.shape} and {other.shape}")

    def __sub__(self, other: "Tensor") -> "Tensor":
        if self.shape != other.shape:
            raise ShapeError(f"sub: incompatible shapes {self.shape} and {other.shape}")

        def vjp(g):
            return g, -g
        return Tensor._from_op(self.data - other.data, (self, other), vjp, "sub")

    def __neg__(self) -> "Tensor":
        def vjp(g):
            return (-g,)
        return Tensor._from_op(-self.data, (self,), vjp, "neg")

    def __mul__(self, other: "Tensor") -> "Tensor":
        if self.shape != other.shape:
            raise ShapeError(f"mul: incompatible shapes {self.shape} and {other.shape}")
        a, b = self, other

        def vjp(g):
            ga = g * b.data if a.requires_grad else None
            gb = g * a.data if b.requires_grad else None
            return ga, gb
        return Tensor._from_op(a.data * b.data, (a, b), vjp, "mul")

    def scale(self, c: float) -> "Tensor":
        c = float(c)

        def vjp(g):
            return (g * c,)
        return Tensor._from_op(self.data * c, (self,), vjp, "scale")

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")

        def vjp(g):
            ga = g @ b.data.T if a.requires_grad else None
            gb = a.data.T @ g if b.requires_grad else None
            return ga, gb
        return Tensor._from_op(a.data @ b.data, (a, b), vjp, "matmul")

    __matmul__ = matmul

    def t(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"t() needs a 2-D tensor, got {self.shape}")

        def vjp(g):
            return (g.T,)
        return Tensor._from_op(self.data.T.copy(), (self,), vjp, "transpose")

    # -- reductions ---------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)
        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), vjp, "sum")

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims).scale(1.0 / count)

    # -- pointwise ----------------------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def vjp(g):
            return (g * mask,)
        return Tensor._from_op(np.where(mask, self.data, 0.0), (self,), vjp, "relu")

    def exp(self) -> "Tensor":
        y = np.exp(self.data)

        def vjp(g):
            return (g * y,)
        return Tensor._from_op(y, (self,), vjp, "exp")

    def log(self) -> "Tensor":
        x = self.data

        def vjp(g):
            return (g / x,)
        return Tensor._from_op(np.log(x), (self,), vjp, "log")

    def sigmoid(self) -> "Tensor":
        y = _sigmoid(self.data)

        def vjp(g):
            return (g * y * (1.0 - y),)
        return Tensor._from_op(y, (self,), vjp, "sigmoid")

    def log_sigmoid(self) -> "Tensor":
        # log(sigmoid(x)) = -softplus(-x), computed without overflow.
        x = self.data
        y = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))

        def vjp(g):
            return (g * _sigmoid(-x),)
        return Tensor._from_op(y, (self,), vjp, "log_sigmoid")

    # -- row-wise softmax family (last axis) --------------------------------

    def softmax(self) -> "Tensor":
        y = _softmax(self.data)

        def vjp(g):
            dot = np.sum(g * y, axis=-1, keepdims=True)
            return (y * (g - dot),)
        return Tensor._from_op(y, (self,), vjp, "softmax")

    def log_softmax(self) -> "Tensor":
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        y = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))

        def vjp(g):
            return (g - np.exp(y) * np.sum(g, axis=-1, keepdims=True),)
        return Tensor._from_op(y, (self,), vjp, "log_softmax")

    # -- structural ---------------------------------------------------------

    def slice_cols(self, start: int, stop: int) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"slice_cols needs a 2-D tensor, got {self.shape}")
        shape = self.shape

        def vjp(g):
            full = np.zeros(shape)
            full[:, start:stop] = g
            return (full,)
        return Tensor._from_op(self.data[:, start:stop].copy(), (self,), vjp, "slice_cols")

    def slice_rows(self, start: int, stop: int) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"slice_rows needs a 2-D tensor, got {self.shape}")
        shape = self.shape

        def vjp(g):
            full = np.zeros(shape)
            full[start:stop, :] = g
            return (full,)
        return Tensor._from_op(self.data[start:stop, :].copy(), (self,), vjp, "slice_rows")

    def gather_per_row(self, cols: np.ndarray) -> "Tensor":
        """One element per row: out[i] = self[i, cols[i]]. cols is constant."""
        if self.ndim != 2:
            raise ShapeError(f"gather_per_row needs a 2-D tensor, got {self.shape}")
        cols = np.asarray(cols, dtype=np.intp)
        n, d = self.shape
        if cols.shape != (n,):
            raise ShapeError(f"gather_per_row: need {n} column indices, got shape {cols.shape}")
        if cols.size and (cols.min() < 0 or cols.max() >= d):
            raise IndexError(f"gather_per_row: column index out of range [0, {d})")
        rows_idx = np.arange(n)

        def vjp(g):
            full = np.zeros((n, d))
            full[rows_idx, cols] = g
            return (full,)
        return Tensor._from_op(self.data[rows_idx, cols].copy(), (self,), vjp, "gather_per_row")

    # -- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        Accumulates into existing ``grad`` buffers, so call zero_grad first if
        a fresh pass is wanted. Requires a scalar.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        grads = _raw_grads(self)
        for t, g in grads.items():
            if t.grad is None:
                t.grad = g.copy()
            else:
                t.grad += g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _raw_grads(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse accumulation from a scalar; pure, does not touch .grad fields."""
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        input_grads = node._vjp(g)
        for inp, ig in zip(node._prev, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] += ig
            else:
                grads[key] = np.array(ig, dtype=np.float64, copy=True)
                by_id[key] = inp
    return {by_id[k]: v for k, v in grads.items() if by_id[k].requires_grad}


def compute_grads(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. the given tensors, without mutating them.

    Safe to call concurrently from several threads as long as each call uses
    its own graph (shared leaves are only read).
    """
    if loss.data.size != 1:
        raise ShapeError(f"compute_grads needs a scalar loss, got shape {loss.shape}")
    grads = _raw_grads(loss)
    return [grads.get(t, np.zeros_like(t.data)) for t in wrt]


def first_nonfinite(root: Tensor) -> Tensor | None:
    """First tensor (in forward topological order) holding a NaN/Inf, if any."""
    for node in _topo_order(root):
        if not np.all(np.isfinite(node.data)):
            return node
    return None


# -- construction helpers ---------------------------------------------------

def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def param(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# -- multi-tensor ops -------------------------------------------------------

def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors into one 1-D tensor."""
    parts = tuple(parts)
    for p in parts:
        if p.ndim != 1:
            raise ShapeError(f"concat needs 1-D parts, got {p.shape}")
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))
    return Tensor._from_op(np.concatenate([p.data for p in parts]), parts, vjp, "concat")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors with equal row counts along columns."""
    parts = tuple(parts)
    n = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != n:
            raise ShapeError(f"concat_cols: rows must match, got {[q.shape for q in parts]}")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))
    return Tensor._from_op(np.concatenate([p.data for p in parts], axis=1), parts, vjp, "concat_cols")


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a 2-D tensor, one per row."""
    parts = tuple(parts)
    d = parts[0].shape[0]
    for p in parts:
        if p.ndim != 1 or p.shape[0] != d:
            raise ShapeError(f"stack_rows: lengths must match, got {[q.shape for q in parts]}")

    def vjp(g):
        return tuple(g[i] for i in range(len(parts)))
    return Tensor._from_op(np.stack([p.data for p in parts]), parts, vjp, "stack_rows")


def embedding_row(table: Tensor, index: int) -> Tensor:
    """Row lookup; the gradient accumulates into that row only."""
    v = table.shape[0]
    if not 0 <= index < v:
        raise IndexError(f"embedding index {index} out of range for table with {v} rows")
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)
    return Tensor._from_op(table.data[index].copy(), (table,), vjp, "embedding_row")


def embedding_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather many rows at once; repeated indices sum their gradients."""
    indices = np.asarray(indices, dtype=np.intp)
    v = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= v):
        bad = indices[(indices < 0) | (indices >= v)][0]
        raise IndexError(f"embedding index {bad} out of range for table with {v} rows")
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, indices, g)
        return (full,)
    return Tensor._from_op(table.data[indices].copy(), (table,), vjp, "embedding_rows")


def pool_rows(table: Tensor, groups: Sequence[Sequence[int]]) -> Tensor:
    """Mean of table rows per group: out[k] = mean(table[groups[k]])."""
    v = table.shape[0]
    idx_groups = [np.asarray(g, dtype=np.intp) for g in groups]
    for g in idx_groups:
        if g.size == 0:
            raise ShapeError("pool_rows: empty group")
        if g.min() < 0 or g.max() >= v:
            raise IndexError(f"pool_rows index out of range for table with {v} rows")
    out = np.stack([table.data[g].mean(axis=0) for g in idx_groups])
    shape = table.shape

    def vjp(gout):
        full = np.zeros(shape)
        for k, g in enumerate(idx_groups):
            np.add.at(full, g, np.broadcast_to(gout[k] / g.size, (g.size, shape[1])))
        return (full,)
    return Tensor._from_op(out, (table,), vjp, "pool_rows")


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale each row of x by a per-row factor: out[i] = s[i] * x[i]."""
    if x.ndim != 2:
        raise ShapeError(f"scale_rows needs a 2-D tensor, got {x.shape}")
    n = x.shape[0]
    if s.shape not in ((n,), (n, 1)):
        raise ShapeError(f"scale_rows: factors must have shape ({n},) or ({n},1), got {s.shape}")
    col = s.data.reshape(n, 1)

    def vjp(g):
        gx = g * col if x.requires_grad else None
        gs = np.sum(g * x.data, axis=1).reshape(s.shape) if s.requires_grad else None
        return gx, gs
    return Tensor._from_op(x.data * col, (x, s), vjp, "scale_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def vjp(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (dxhat
                        - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
        axes = tuple(range(out.ndim - 1))
        ggain = np.sum(g * xhat, axis=axes) if gain.requires_grad else None
        gbias = np.sum(g, axis=axes) if bias.requires_grad else None
        return gx, ggain, gbias
    return Tensor._from_op(out, (x, gain, bias), vjp, "layer_norm")


def causal_mask(n: int) -> np.ndarray:
    """Additive mask: MASK_VALUE strictly above the diagonal, 0 elsewhere."""
    mask = np.zeros((n, n))
    mask[np.triu_indices(n, k=1)] = MASK_VALUE
    return mask


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = False) -> Tensor:
    """softmax(q kᵀ / sqrt(d) [+ causal mask]) v, built from primitive ops."""
    if q.ndim != 2 or q.shape != k.shape or k.shape != v.shape:
        raise ShapeError(f"attention: q/k/v must share an (n, d) shape, got {q.shape}/{k.shape}/{v.shape}")
    n, d = q.shape
    scores = q.matmul(k.t()).scale(1.0 / math.sqrt(d))
    if causal:
        scores = scores + constant(causal_mask(n))
    return scores.softmax().matmul(v)


# -- gradient checking ------------------------------------------------------

def grad_check(build_loss: Callable[[], Tensor],
               params: Iterable[Tensor],
               eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``build_loss`` must rebuild the scalar loss from the current parameter
    values on every call. The relative error per entry is
    |a - n| / max(1, |a|, |n|); the max over all entries of all params is
    returned.
    """
    params = list(params)
    loss = build_loss()
    analytic = compute_grads(loss, params)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = build_loss().item()
            flat[i] = orig - eps
            down = build_loss().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
        a_flat = a.reshape(-1)
        denom = np.maximum(1.0, np.maximum(np.abs(a_flat), np.abs(numeric)))
        err = np.abs(a_flat - numeric) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
