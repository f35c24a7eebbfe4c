"""Reverse-mode tape and the neural layers built on it.

Every array is 2-D float64 with the batch along rows. Ops append a node
holding a backward closure to a :class:`Tape`; :meth:`Tape.backward`
walks the nodes in reverse recording order and accumulates gradients
into :class:`Parameter` objects.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DisconnectedTape, EmptySequence, ShapeMismatch

PROB_FLOOR = 1e-12


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(1, -1)
        if value.ndim != 2:
            raise ShapeMismatch(f"parameter {name!r} must be 2-D, got shape {value.shape}")
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class Var:
    """A value on a tape. Leaves bound to a Parameter route gradients there."""

    __slots__ = ("value", "grad", "param", "tape", "index", "needs_grad")

    def __init__(self, value, tape=None, param=None, needs_grad=False):
        self.value = value
        self.grad = None
        self.param = param
        self.tape = tape
        self.index = None
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.value.shape


class Tape:
    def __init__(self):
        self.nodes: list[tuple[Var, tuple, Callable]] = []
        self._leaves: dict[int, Var] = {}

    def leaf(self, param: Parameter) -> Var:
        var = self._leaves.get(id(param))
        if var is None:
            var = Var(param.value, self, param, needs_grad=True)
            self._leaves[id(param)] = var
        return var

    def const(self, value) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(1, -1)
        return Var(value, self)

    def as_var(self, x) -> Var:
        if isinstance(x, Var):
            return x
        if isinstance(x, Parameter):
            return self.leaf(x)
        return self.const(x)

    def record(self, value, inputs: tuple, backward: Callable) -> Var:
        out = Var(value, self, needs_grad=any(v.needs_grad for v in inputs))
        out.index = len(self.nodes)
        self.nodes.append((out, inputs, backward))
        return out

    def backward(self, loss: Var, seed=None) -> None:
        """Accumulate d(loss)/d(parameter) into every reachable Parameter.grad."""
        if loss.tape is not self or loss.index is None:
            raise DisconnectedTape("loss was not produced by this tape")
        loss.grad = np.ones_like(loss.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for out, inputs, backward in reversed(self.nodes[: loss.index + 1]):
            if out.grad is None or not out.needs_grad:
                continue
            grads = backward(out.grad)
            for var, g in zip(inputs, grads):
                if g is None or not var.needs_grad:
                    continue
                if var.param is not None:
                    var.param.grad += g
                elif var.grad is None:
                    var.grad = g
                else:
                    var.grad = var.grad + g


# -- primitive ops -------------------------------------------------------


def linear(tape: Tape, x: Var, W: Var) -> Var:
    """``x @ W.T`` for weights stored as (out, in)."""
    if x.value.shape[1] != W.value.shape[1]:
        raise ShapeMismatch(f"input width {x.value.shape[1]} vs weight {W.value.shape}")
    xv, Wv = x.value, W.value
    return tape.record(xv @ Wv.T, (x, W), lambda g: (g @ Wv, g.T @ xv))


def add(tape: Tape, a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ShapeMismatch(f"cannot add {a.value.shape} and {b.value.shape}")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def add_bias(tape: Tape, z: Var, b: Var) -> Var:
    if b.value.shape != (1, z.value.shape[1]):
        raise ShapeMismatch(f"bias {b.value.shape} does not fit {z.value.shape}")
    return tape.record(z.value + b.value, (z, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul(tape: Tape, a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    return tape.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def tanh(tape: Tape, x: Var) -> Var:
    y = np.tanh(x.value)
    return tape.record(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(tape: Tape, x: Var) -> Var:
    y = _sigmoid(x.value)
    return tape.record(y, (x,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def concat(tape: Tape, parts: Sequence[Var]) -> Var:
    rows = {p.value.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeMismatch("concatenated parts disagree on batch size")
    widths = np.cumsum([0] + [p.value.shape[1] for p in parts])
    value = np.concatenate([p.value for p in parts], axis=1)

    def backward(g):
        return tuple(g[:, widths[i]:widths[i + 1]] for i in range(len(parts)))

    return tape.record(value, tuple(parts), backward)


def blend(tape: Tape, new: Var, old: Var, mask: np.ndarray) -> Var:
    """Rows with mask 1 take ``new``, rows with mask 0 keep ``old``."""
    keep = 1.0 - mask
    return tape.record(mask * new.value + keep * old.value, (new, old),
                       lambda g: (g * mask, g * keep))


def lookup(tape: Tape, table: Parameter, ids) -> Var:
    """Gather rows of an embedding table; the backward pass scatters into it."""
    ids = np.asarray(ids, dtype=np.int64)
    table_var = tape.leaf(table)

    def backward(g):
        np.add.at(table.grad, ids, g)
        return (None,)

    return tape.record(table.value[ids], (table_var,), backward)


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class DropoutSpec:
    rate: float
    mode: Mode = Mode.TRAIN

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


def dropout(tape: Tape, x: Var, spec: DropoutSpec, rng: np.random.Generator | None) -> Var:
    """Inverted dropout: identity in eval mode, kept units scaled by 1/(1-p)."""
    if spec.mode is Mode.EVAL or spec.rate == 0.0:
        return x
    keep = 1.0 - spec.rate
    mask = (rng.random(x.value.shape) < keep) / keep
    return tape.record(x.value * mask, (x,), lambda g: (g * mask,))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(tape: Tape, logits: Var, targets, weights=None) -> tuple[np.ndarray, Var]:
    """Softmax probabilities and the weighted cross-entropy averaged over the batch.

    ``weights`` are per-example multipliers (the class weight of each
    example's true class); ``None`` means 1.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, k = logits.value.shape
    if k < 2:
        raise ShapeMismatch("softmax needs at least two logits")
    if len(targets) != n:
        raise ShapeMismatch(f"{len(targets)} targets for batch of {n}")
    w = np.ones(n) if weights is None else np.broadcast_to(np.asarray(weights, dtype=np.float64), (n,))
    probs = softmax(logits.value)
    picked = np.maximum(probs[np.arange(n), targets], PROB_FLOOR)
    loss = np.array([[np.sum(-w * np.log(picked)) / n]])

    def backward(g):
        d = probs.copy()
        d[np.arange(n), targets] -= 1.0
        return (d * (w[:, None] * g[0, 0] / n),)

    return probs, tape.record(loss, (logits,), backward)


def total(tape: Tape, x: Var, weights=None) -> Var:
    """Scalar ``sum(weights * x)``; handy for building test losses."""
    w = np.ones_like(x.value) if weights is None else np.asarray(weights, dtype=np.float64)
    return tape.record(np.array([[np.sum(w * x.value)]]), (x,), lambda g: (g[0, 0] * w,))


# -- layers --------------------------------------------------------------


def dense_tanh_forward(tape: Tape, x, W, b) -> Var:
    """``tanh(x W^T + b)``."""
    z = linear(tape, tape.as_var(x), tape.as_var(W))
    return tanh(tape, add_bias(tape, z, tape.as_var(b)))


def dense_forward(tape: Tape, x, W, b) -> Var:
    return add_bias(tape, linear(tape, tape.as_var(x), tape.as_var(W)), tape.as_var(b))


GATES = ("i", "f", "o", "g")


@dataclass
class LSTMCellParams:
    W: dict  # gate -> Parameter (hidden, input)
    U: dict  # gate -> Parameter (hidden, hidden)
    b: dict  # gate -> Parameter (1, hidden)

    @property
    def hidden(self) -> int:
        return self.U["i"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.W["i"].shape[1]

    def parameters(self) -> list[Parameter]:
        return [group[g] for group in (self.W, self.U, self.b) for g in GATES]

    @classmethod
    def create(cls, prefix: str, input_dim: int, hidden: int,
               init: Callable[[str, int, int], np.ndarray] | None = None) -> "LSTMCellParams":
        """Build gate parameters; ``init(name, rows, cols)`` supplies weight values, biases start at 0."""
        if init is None:
            init = lambda name, r, c: np.zeros((r, c))  # noqa: E731
        W = {g: Parameter(f"{prefix}.W_{g}", init(f"{prefix}.W_{g}", hidden, input_dim)) for g in GATES}
        U = {g: Parameter(f"{prefix}.U_{g}", init(f"{prefix}.U_{g}", hidden, hidden)) for g in GATES}
        b = {g: Parameter(f"{prefix}.b_{g}", np.zeros((1, hidden))) for g in GATES}
        expected = ((W, (hidden, input_dim)), (U, (hidden, hidden)), (b, (1, hidden)))
        for group, shape in expected:
            if any(p.shape != shape for p in group.values()):
                raise ShapeMismatch("inconsistent hidden size across gates")
        return cls(W, U, b)


def lstm_step(tape: Tape, x_t, h_prev, c_prev, params: LSTMCellParams) -> tuple[Var, Var]:
    x_t, h_prev, c_prev = tape.as_var(x_t), tape.as_var(h_prev), tape.as_var(c_prev)
    if x_t.value.shape[1] != params.input_dim:
        raise ShapeMismatch(f"input width {x_t.value.shape[1]} != {params.input_dim}")
    if h_prev.value.shape[1] != params.hidden or c_prev.value.shape[1] != params.hidden:
        raise ShapeMismatch("state width does not match hidden size")
    pre = {}
    for g in GATES:
        z = add(tape, linear(tape, x_t, tape.leaf(params.W[g])),
                linear(tape, h_prev, tape.leaf(params.U[g])))
        pre[g] = add_bias(tape, z, tape.leaf(params.b[g]))
    i = sigmoid(tape, pre["i"])
    f = sigmoid(tape, pre["f"])
    o = sigmoid(tape, pre["o"])
    g = tanh(tape, pre["g"])
    c_t = add(tape, mul(tape, f, c_prev), mul(tape, i, g))
    h_t = mul(tape, o, tanh(tape, c_t))
    return h_t, c_t


def lstm_run(tape: Tape, xs: Sequence, params: LSTMCellParams, masks=None) -> Var:
    """Final hidden state after feeding ``xs``; masked rows freeze once their sequence ends."""
    if len(xs) == 0:
        raise EmptySequence("LSTM needs at least one time step")
    batch = tape.as_var(xs[0]).value.shape[0]
    h = tape.const(np.zeros((batch, params.hidden)))
    c = tape.const(np.zeros((batch, params.hidden)))
    for t, x in enumerate(xs):
        h_new, c_new = lstm_step(tape, x, h, c, params)
        if masks is None or t == 0:
            # every sequence has at least one token
            h, c = h_new, c_new
        else:
            h = blend(tape, h_new, h, masks[t])
            c = blend(tape, c_new, c, masks[t])
    return h


def bilstm_encode(tape: Tape, xs: Sequence, fwd: LSTMCellParams, bwd: LSTMCellParams,
                  xs_backward: Sequence | None = None, masks=None) -> Var:
    """Concatenate the final states of a forward and a backward LSTM.

    ``xs_backward`` is the per-example reversed sequence; it defaults to
    ``reversed(xs)``, which is only right when all sequences share one length.
    """
    if len(xs) == 0:
        raise EmptySequence("biLSTM needs at least one time step")
    if xs_backward is None:
        xs_backward = list(reversed(xs))
    h_f = lstm_run(tape, xs, fwd, masks)
    h_b = lstm_run(tape, xs_backward, bwd, masks)
    return concat(tape, [h_f, h_b])
