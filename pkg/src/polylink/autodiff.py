"""Tape-based reverse-mode differentiation over dense 2-D arrays.

The model needs only a small closed set of primitives (matmul, elementwise
arithmetic, ReLU, sigmoid, log, row gather/reduction, sparse-dense products,
dropout), so the engine records each primitive application on an explicit
tape and replays it in reverse.  Tensors are thin wrappers around numpy
arrays; everything is rank 2 (scalars are (1, 1), per-relation diagonal
factors are (1, d) rows).

64-bit floats are the default; pass float32 arrays for reduced precision.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ContractError

LOG_CLAMP = 1e-12


class Tensor:
    """A 2-D value with an optional gradient buffer."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ContractError(f"tensors are rank 2 at most, got shape {arr.shape}")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class SparseAdjacency:
    """Compressed-row matrix of fixed aggregation coefficients.

    Rows are destination nodes, columns source nodes; entry (i, j) is the
    coefficient applied to j's state when aggregating into i.  Coefficients
    are constants: gradients flow only through the dense operand of spmm.
    """

    __slots__ = ("matrix", "_transpose")

    def __init__(self, matrix: sp.spmatrix):
        m = sp.csr_matrix(matrix)
        m.sum_duplicates()
        self.matrix = m
        self._transpose = None

    @classmethod
    def from_entries(cls, rows, cols, coefficients, shape) -> "SparseAdjacency":
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if coefficients.size and coefficients.min() <= 0.0:
            raise ArgumentError("aggregation coefficients must be strictly positive")
        return cls(sp.csr_matrix((coefficients, (rows, cols)), shape=shape))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def transposed(self) -> sp.csr_matrix:
        if self._transpose is None:
            self._transpose = sp.csr_matrix(self.matrix.T)
        return self._transpose

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _promote(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications.

    Each record holds the output tensor and a closure that maps the output
    gradient onto the inputs.  ``backward`` walks the records once in
    reverse; gradients of intermediates are held in a scratch map and
    released as soon as they have been consumed, while leaf tensors with
    ``requires_grad`` accumulate into their own ``grad`` buffers.

    A tape with ``record=False`` evaluates the same forward math without
    keeping records (used for evaluation passes).
    """

    def __init__(self, record: bool = True):
        self.record = record
        self._records: list[tuple[Tensor, callable]] = []

    # -- bookkeeping ---------------------------------------------------

    def _push(self, out: Tensor, backward) -> Tensor:
        if self.record:
            self._records.append((out, backward))
        return out

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` of every requires_grad leaf reachable from loss."""
        if loss.values.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.values.shape}")
        if not self.record:
            raise ContractError("backward on a non-recording tape")
        scratch: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}

        def accumulate(t: Tensor, g: np.ndarray) -> None:
            if t.requires_grad:
                t.grad += g
            else:
                key = id(t)
                if key in scratch:
                    scratch[key] += g
                else:
                    scratch[key] = g.copy()

        for out, backward_fn in reversed(self._records):
            g = scratch.pop(id(out), None)
            if g is None:
                continue
            backward_fn(g, accumulate)
        scratch.clear()

    # -- primitives ----------------------------------------------------

    def constant(self, values) -> Tensor:
        return _promote(values)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.values.shape[1] != b.values.shape[0]:
            raise ContractError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        out = Tensor(a.values @ b.values)

        def backward(g, acc):
            acc(a, g @ b.values.T)
            acc(b, a.values.T @ g)

        return self._push(out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.values.shape != b.values.shape:
            raise ContractError(f"add shape mismatch {a.shape} + {b.shape}")
        out = Tensor(a.values + b.values)

        def backward(g, acc):
            acc(a, g)
            acc(b, g)

        return self._push(out, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product; b may be a (1, d) row broadcast over a's rows."""
        if a.values.shape != b.values.shape:
            if not (b.values.shape == (1, a.values.shape[1])):
                raise ContractError(f"mul shape mismatch {a.shape} * {b.shape}")
        out = Tensor(a.values * b.values)

        def backward(g, acc):
            ga = g * b.values
            gb = g * a.values
            if b.values.shape != a.values.shape:
                gb = gb.sum(axis=0, keepdims=True)
            acc(a, ga)
            acc(b, gb)

        return self._push(out, backward)

    def affine(self, x: Tensor, alpha: float, beta: float) -> Tensor:
        out = Tensor(alpha * x.values + beta)

        def backward(g, acc):
            acc(x, alpha * g)

        return self._push(out, backward)

    def transpose(self, x: Tensor) -> Tensor:
        out = Tensor(x.values.T.copy())

        def backward(g, acc):
            acc(x, g.T)

        return self._push(out, backward)

    def relu(self, x: Tensor) -> Tensor:
        mask = x.values > 0
        out = Tensor(np.where(mask, x.values, 0.0))

        def backward(g, acc):
            acc(x, g * mask)

        return self._push(out, backward)

    def sigmoid(self, x: Tensor) -> Tensor:
        out = Tensor(stable_sigmoid(x.values))
        ov = out.values

        def backward(g, acc):
            acc(x, g * ov * (1.0 - ov))

        return self._push(out, backward)

    def log_sigmoid(self, x: Tensor) -> Tensor:
        """log(sigmoid(x)), computed as -logaddexp(0, -x).

        Stays accurate for saturated logits of either sign, where composing
        ``log`` with ``sigmoid`` would round 1 - p (or p) to zero first.
        """
        out = Tensor(-np.logaddexp(0.0, -x.values))

        def backward(g, acc):
            acc(x, g * stable_sigmoid(-x.values))

        return self._push(out, backward)

    def log(self, x: Tensor) -> Tensor:
        """Natural log, input clamped below at LOG_CLAMP."""
        clamped = np.maximum(x.values, LOG_CLAMP)
        out = Tensor(np.log(clamped))
        inside = x.values >= LOG_CLAMP

        def backward(g, acc):
            acc(x, np.where(inside, g / clamped, 0.0))

        return self._push(out, backward)

    def sum_all(self, x: Tensor) -> Tensor:
        out = Tensor(np.array([[x.values.sum()]], dtype=x.dtype))

        def backward(g, acc):
            acc(x, np.full_like(x.values, g[0, 0]))

        return self._push(out, backward)

    def sum_rows(self, x: Tensor) -> Tensor:
        """Row-wise sum, (m, n) -> (m, 1)."""
        out = Tensor(x.values.sum(axis=1, keepdims=True))

        def backward(g, acc):
            acc(x, np.repeat(g, x.values.shape[1], axis=1))

        return self._push(out, backward)

    def gather_rows(self, x: Tensor, indices) -> Tensor:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        out = Tensor(x.values[idx])

        def backward(g, acc):
            buf = np.zeros_like(x.values)
            np.add.at(buf, idx, g)
            acc(x, buf)

        return self._push(out, backward)

    def spmm(self, adj: SparseAdjacency, dense: Tensor) -> Tensor:
        """Sparse @ dense; differentiable in the dense operand only."""
        if adj.shape[1] != dense.values.shape[0]:
            raise ContractError(f"spmm shape mismatch {adj.shape} @ {dense.shape}")
        out = Tensor(adj.matrix @ dense.values)

        def backward(g, acc):
            acc(dense, adj.transposed() @ g)

        return self._push(out, backward)

    def dropout(self, x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
        """Inverted dropout: zero entries w.p. rate, scale survivors by 1/(1-rate)."""
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
        if rate == 0.0:
            return x
        keep = rng.random(x.values.shape) >= rate
        scale = 1.0 / (1.0 - rate)
        factor = keep.astype(x.dtype) * scale
        out = Tensor(x.values * factor)

        def backward(g, acc):
            acc(x, g * factor)

        return self._push(out, backward)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dropout(x: Tensor, rate: float, training: bool, seed: int, tape: Tape | None = None) -> Tensor:
    """Standalone dropout with an explicit seed; identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(seed)
    if tape is None:
        tape = Tape(record=False)
    return tape.dropout(x, rate, rng)


def sparse_dropout(matrix: sp.csr_matrix, rate: float, rng: np.random.Generator) -> sp.csr_matrix:
    """Inverted dropout over the stored entries of a constant sparse matrix."""
    if rate == 0.0:
        return matrix
    keep = rng.random(matrix.nnz) >= rate
    out = matrix.copy()
    out.data = out.data * keep / (1.0 - rate)
    return out
