"""Dense float64 matrices with reverse-mode gradient accumulation.

Every model quantity (frame features, hidden states, weights, losses) is a
:class:`Matrix`, a thin wrapper around a 2-D C-contiguous float64 array.
Operations executed while a :class:`GradientTape` is active are recorded so
that ``tape.backward(loss)`` can accumulate d(loss)/d(value) for every value
that participated, in strict reverse order of creation.

Scalars are 1x1 matrices; vectors are n x 1 column matrices. Summation order
inside every primitive is fixed, so equal seeds give bit-identical runs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Matrix",
    "GradientTape",
    "Gradients",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "elementwise",
    "vstack",
    "hstack",
    "transpose",
    "take_rows",
    "add_col",
    "sum_all",
    "softmax",
    "softmax_col",
]


class Matrix:
    """A rows x cols block of float64 values, optionally tracked on a tape."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError(f"Matrix must be 2-D, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 matrix, got {self.shape}")
        return float(self.data[0, 0])

    def copy(self) -> "Matrix":
        return Matrix(self.data.copy())

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def zeros(rows: int, cols: int) -> Matrix:
    return Matrix(np.zeros((rows, cols)))


class Gradients:
    """Gradient lookup produced by :meth:`GradientTape.backward`.

    Values that do not lie on any path to the loss get an exact zero of the
    matching shape.
    """

    def __init__(self, table: dict[int, np.ndarray]):
        self._table = table

    def get(self, value: Matrix) -> np.ndarray:
        g = self._table.get(id(value))
        if g is None:
            return np.zeros_like(value.data)
        return g

    def __contains__(self, value: Matrix) -> bool:
        return id(value) in self._table


# Stack of active tapes; ops record onto the innermost one.
_TAPE_STACK: list["GradientTape"] = []


class GradientTape:
    """Ordered record of primitive ops for reverse-mode differentiation."""

    def __init__(self):
        # (output, inputs, vjp) where vjp(grad_out) yields one gradient
        # contribution per input, in input order.
        self._ops: list[tuple[Matrix, tuple[Matrix, ...], object]] = []

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def _record(self, out: Matrix, inputs: tuple[Matrix, ...], vjp) -> None:
        self._ops.append((out, inputs, vjp))

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: Matrix) -> Gradients:
        """Accumulate d(loss)/d(value) for every value reaching ``loss``."""
        if loss.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar (1x1) loss, got {loss.shape}"
            )
        table: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        # Creation order is topological, so the reversed tape visits every
        # op after all consumers of its output.
        for out, inputs, vjp in reversed(self._ops):
            gout = table.get(id(out))
            if gout is None:
                continue
            contribs = vjp(gout)
            for inp, contrib in zip(inputs, contribs):
                if contrib is None:
                    continue
                acc = table.get(id(inp))
                if acc is None:
                    table[id(inp)] = contrib
                else:
                    acc += contrib
        return Gradients(table)


def _active_tape() -> GradientTape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(out: Matrix, inputs: tuple[Matrix, ...], vjp) -> Matrix:
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ValueError(
            f"matmul dimension mismatch: {a.rows}x{a.cols} @ {b.rows}x{b.cols}"
        )
    out = Matrix(a.data @ b.data)
    adata, bdata = a.data, b.data

    def vjp(g):
        return (g @ bdata.T, adata.T @ g)

    return _emit(out, (a, b), vjp)


def _require_same_shape(op: str, a: Matrix, b: Matrix) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("add", a, b)
    out = Matrix(a.data + b.data)
    return _emit(out, (a, b), lambda g: (g.copy(), g.copy()))


def sub(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("sub", a, b)
    out = Matrix(a.data - b.data)
    return _emit(out, (a, b), lambda g: (g.copy(), -g))


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise (Hadamard) product."""
    _require_same_shape("mul", a, b)
    out = Matrix(a.data * b.data)
    adata, bdata = a.data, b.data
    return _emit(out, (a, b), lambda g: (g * bdata, g * adata))


def scale(a: Matrix, c: float) -> Matrix:
    """Multiply every entry by the constant ``c``."""
    c = float(c)
    out = Matrix(a.data * c)
    return _emit(out, (a,), lambda g: (g * c,))


def tanh(a: Matrix) -> Matrix:
    out = Matrix(np.tanh(a.data))
    y = out.data
    return _emit(out, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    # Two-branch form never exponentiates a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Matrix) -> Matrix:
    out = Matrix(_sigmoid_stable(a.data))
    y = out.data
    return _emit(out, (a,), lambda g: (g * y * (1.0 - y),))


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "add": add, "mul": mul}


def elementwise(op: str, *args: Matrix) -> Matrix:
    """Dispatch an entrywise op by name: tanh | sigmoid | add | mul."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if op in ("tanh", "sigmoid"):
        if len(args) != 1:
            raise ValueError(f"{op} takes one argument, got {len(args)}")
    elif len(args) != 2:
        raise ValueError(f"{op} takes two arguments, got {len(args)}")
    return fn(*args)


def vstack(parts: list[Matrix]) -> Matrix:
    """Stack matrices vertically; gradient slices back row blocks."""
    if not parts:
        raise ValueError("vstack of empty list")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ValueError(
                f"vstack column mismatch: {p.cols} vs {cols}"
            )
    out = Matrix(np.concatenate([p.data for p in parts], axis=0))
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def vjp(g):
        return tuple(
            g[offsets[i]:offsets[i + 1]].copy() for i in range(len(parts))
        )

    return _emit(out, tuple(parts), vjp)


def hstack(parts: list[Matrix]) -> Matrix:
    """Stack matrices horizontally; gradient slices back column blocks."""
    if not parts:
        raise ValueError("hstack of empty list")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ValueError(f"hstack row mismatch: {p.rows} vs {rows}")
    out = Matrix(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def vjp(g):
        return tuple(
            g[:, offsets[i]:offsets[i + 1]].copy() for i in range(len(parts))
        )

    return _emit(out, tuple(parts), vjp)


def transpose(a: Matrix) -> Matrix:
    out = Matrix(a.data.T)
    return _emit(out, (a,), lambda g: (g.T.copy(),))


def take_rows(a: Matrix, indices) -> Matrix:
    """Gather rows of ``a``; gradient scatter-adds back."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("take_rows needs a nonempty 1-D index list")
    if idx.min() < 0 or idx.max() >= a.rows:
        raise ValueError(
            f"row index out of range: {idx.tolist()} for {a.rows} rows"
        )
    out = Matrix(a.data[idx])
    nrows, ncols = a.shape

    def vjp(g):
        ga = np.zeros((nrows, ncols))
        np.add.at(ga, idx, g)
        return (ga,)

    return _emit(out, (a,), vjp)


def add_col(a: Matrix, v: Matrix) -> Matrix:
    """Add column vector ``v`` (n x 1) to every column of ``a`` (n x k)."""
    if v.cols != 1 or v.rows != a.rows:
        raise ValueError(
            f"add_col needs a {a.rows}x1 column, got {v.rows}x{v.cols}"
        )
    out = Matrix(a.data + v.data)
    return _emit(out, (a, v), lambda g: (g.copy(), g.sum(axis=1, keepdims=True)))


def sum_all(a: Matrix) -> Matrix:
    """Sum of all entries, as a 1x1 matrix."""
    out = Matrix([[float(a.data.sum())]])
    nrows, ncols = a.shape
    return _emit(out, (a,), lambda g: (np.full((nrows, ncols), g[0, 0]),))


def softmax(values) -> np.ndarray:
    """Numerically stable softmax of a 1-D array of finite reals.

    Plain (untracked) function; the tape-aware variant is
    :func:`softmax_col`.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("softmax of empty input")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input must be finite")
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_col(a: Matrix) -> Matrix:
    """Softmax over the entries of a column vector, tracked on the tape."""
    if a.cols != 1:
        raise ValueError(f"softmax_col needs an n x 1 column, got {a.shape}")
    out = Matrix(softmax(a.data).reshape(-1, 1))
    y = out.data

    def vjp(g):
        return (y * (g - float((y * g).sum())),)

    return _emit(out, (a,), vjp)
