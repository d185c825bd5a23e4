import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.errors import NonDeterministicForwardError, NumericError, ShapeError, TapeError

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# The single numeric guard: log() never sees anything below this.
LOG_FLOOR = 1e-12

# Absolute floor in the relative-error denominator used by grad_check
GRAD_CHECK_FLOOR = 1e-4

_local = threading.local()


def _tape_stack() -> List["Tape"]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def current_tape() -> Optional["Tape"]:
    """Return the innermost active tape of the calling thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """
    Dense float64 array that can take part in reverse-mode differentiation.

    Ops only record onto a tape when one is active (``with Tape():``) and at
    least one input has ``requires_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape", "_topo")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional["Tape"] = None
        self._topo = -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


ArrayLike = Union[Tensor, np.ndarray, float, int]


@dataclass
class TapeRecord:
    output: Tensor
    parents: Tuple[Tensor, ...]
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    op: str


class Tape:
    """
    Define-by-run record of forward ops.

    Records are appended in execution order, which is a topological order of
    the computation; backward walks them in reverse exactly once.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, output: Tensor, parents: Tuple[Tensor, ...], backward_fn, op: str):
        if self.consumed:
            raise TapeError("Cannot record onto a tape that already ran backward; call reset() first")
        output._tape = self
        output._topo = len(self.records)
        self.records.append(TapeRecord(output, parents, backward_fn, op))

    def reset(self):
        """Drop all records so the tape can be reused for a fresh forward pass."""
        for rec in self.records:
            rec.output._tape = None
        self.records = []
        self.consumed = False

    def backward(self, loss: Tensor):
        """
        Populate ``.grad`` on every leaf tensor with requires_grad that fed this tape.

        Args:
            loss: scalar Tensor produced on this tape

        Raises:
            TapeError: non-scalar loss, loss from another tape, or repeated backward
        """
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("Loss was not produced on this tape (detached)")
        if self.consumed:
            raise TapeError("backward already ran on this tape; reset() before reuse")

        # Leaves that participated get a zero buffer even when unreachable from loss
        for rec in self.records:
            for parent in rec.parents:
                if parent.requires_grad and parent._tape is not self and parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)

        grads: List[Optional[np.ndarray]] = [None] * len(self.records)
        grads[loss._topo] = np.ones_like(loss.data)

        for idx in range(loss._topo, -1, -1):
            upstream = grads[idx]
            if upstream is None:
                continue
            rec = self.records[idx]
            parent_grads = rec.backward_fn(upstream)
            for parent, pg in zip(rec.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                if parent._tape is self:
                    slot = parent._topo
                    grads[slot] = pg if grads[slot] is None else grads[slot] + pg
                elif parent.grad is None:
                    parent.grad = pg.copy()
                else:
                    parent.grad = parent.grad + pg
            grads[idx] = None

        self.consumed = True


def backward(loss: Tensor):
    """Run backward on the tape that produced ``loss``."""
    if loss._tape is None:
        raise TapeError("Loss is detached: it was not produced under an active tape")
    loss._tape.backward(loss)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _lift(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_op(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """
    Wrap a forward result and register it on the active tape.

    Args:
        data: forward output values
        parents: input tensors
        backward_fn: maps the upstream gradient to one gradient (or None) per parent
        op: name used in diagnostics

    Returns:
        Tensor: the output, tracked when any parent requires grad

    Raises:
        NumericError: when the output holds NaN or Inf
    """
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericError(f"Op '{op}' produced non-finite values")
    parents = tuple(parents)
    tape = current_tape()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(out, parents, backward_fn, op)
    return out


# Arithmetic

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    return make_op(
        a.data / b.data,
        (a, b),
        lambda g: (g / b.data, -g * a.data / (b.data * b.data)),
        "div",
    )


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product a[m×k] · b[k×n]."""
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return make_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the leading axis: [n×p×k] · [n×k×q]."""
    a, b = _lift(a), _lift(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm shape mismatch: {a.shape} x {b.shape}")

    def backward_fn(g):
        return (np.matmul(g, np.swapaxes(b.data, 1, 2)), np.matmul(np.swapaxes(a.data, 1, 2), g))

    return make_op(np.matmul(a.data, b.data), (a, b), backward_fn, "bmm")


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return make_op(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    original = a.shape
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(original),), "reshape")


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    original = a.shape

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, original).copy(),)

    return make_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward_fn, "sum")


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return div(tensor_sum(a, axis=axis, keepdims=keepdims), float(max(count, 1)))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """
    Concatenate along ``axis`` (columns by default); gradients split back.

    Raises:
        ShapeError: when the non-concatenated extents differ
    """
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise ShapeError(f"concat shape mismatch: {[t.shape for t in tensors]}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn, "concat")


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows ``a[index]``; gradients scatter-add back to the source rows."""
    index = np.asarray(index, dtype=np.int64)

    def backward_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return make_op(a.data[index], (a,), backward_fn, "gather_rows")


def scatter_add_rows(src: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """Sum rows of ``src`` into ``num_rows`` buckets given by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((num_rows,) + src.shape[1:], dtype=np.float64)
    np.add.at(out, index, src.data)
    return make_op(out, (src,), lambda g: (g[index],), "scatter_add_rows")


# Normalisations

def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the last axis, shifted by the row max.

    Args:
        x: scores
        mask: optional boolean array, same shape, False entries are excluded.
            Rows with every entry masked come out as all zeros.

    Returns:
        Tensor: rows that are non-negative and sum to 1
    """
    x = _lift(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    if mask is None:
        shifted = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        masked = np.where(mask, x.data, -np.inf)
        row_max = masked.max(axis=-1, keepdims=True)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        e = np.where(mask, np.exp(np.where(mask, x.data - row_max, 0.0)), 0.0)
        total = e.sum(axis=-1, keepdims=True)
        y = e / np.where(total > 0, total, 1.0)

    def backward_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_op(y, (x,), backward_fn, "softmax_rows")


def segment_softmax(scores: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """
    Softmax of edge scores grouped by receiver.

    Args:
        scores: [E × H] scores, one column per head
        segments: [E] receiver id of each edge
        num_segments: number of receivers

    Returns:
        Tensor: [E × H] weights summing to 1 within every (segment, head)
    """
    segments = np.asarray(segments, dtype=np.int64)
    data = scores.data
    seg_max = np.full((num_segments,) + data.shape[1:], -np.inf)
    np.maximum.at(seg_max, segments, data)
    e = np.exp(data - seg_max[segments])
    denom = np.zeros((num_segments,) + data.shape[1:])
    np.add.at(denom, segments, e)
    y = e / denom[segments]

    def backward_fn(g):
        weighted = np.zeros((num_segments,) + data.shape[1:])
        np.add.at(weighted, segments, g * y)
        return (y * (g - weighted[segments]),)

    return make_op(y, (scores,), backward_fn, "segment_softmax")


# Elementwise

def relu(x: Tensor) -> Tensor:
    x = _lift(x)
    return make_op(np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),), "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = _lift(x)
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return make_op(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def square(x: Tensor) -> Tensor:
    x = _lift(x)
    return make_op(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def log(x: Tensor) -> Tensor:
    """Natural log of max(x, LOG_FLOOR); the clamped region has zero gradient."""
    x = _lift(x)
    clamped = np.maximum(x.data, LOG_FLOOR)
    return make_op(np.log(clamped), (x,), lambda g: (np.where(x.data > LOG_FLOOR, g / clamped, 0.0),), "log")


def exp(x: Tensor) -> Tensor:
    x = _lift(x)
    y = np.exp(x.data)
    return make_op(y, (x,), lambda g: (g * y,), "exp")


ELEMENTWISE = {
    "relu": relu,
    "sigmoid": sigmoid,
    "square": square,
    "log": log,
    "exp": exp,
}


def elementwise(x: Tensor, fn: str) -> Tensor:
    """Apply one of relu | sigmoid | square | log | exp."""
    if fn not in ELEMENTWISE:
        raise ValueError(f"Unknown elementwise function '{fn}'")
    return ELEMENTWISE[fn](x)


# Optimiser

@dataclass
class AdamState:
    """
    Adam moments and hyperparameters.

    Weight decay is classic L2: ``weight_decay * param`` is added to the
    gradient before the moment update.
    """

    lr: float = 0.001
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], grads: Optional[Dict[str, np.ndarray]], state: AdamState) -> Dict[str, Tensor]:
    """
    Apply one Adam update in place.

    Args:
        params: name -> parameter tensor
        grads: name -> gradient; None takes ``param.grad`` (missing grads count as zero)
        state: optimiser state, advanced by one step

    Returns:
        dict: the same parameter mapping, updated
    """
    if state.step < 0:
        raise ValueError("AdamState.step must be non-negative")
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        grad = grads.get(name) if grads is not None else param.grad
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")
        if state.weight_decay:
            grad = grad + state.weight_decay * param.data

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        elif m.shape != param.shape:
            raise ShapeError(f"Moment buffer for '{name}' has shape {m.shape}, parameter has {param.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v

        update = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        param.data -= update

    return params


def zero_grads(params: Dict[str, Tensor]):
    for param in params.values():
        param.grad = None


# Gradient checking

def _forward_value(fn: Callable[[], Tensor]) -> float:
    # No tape: nothing is recorded
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        return float(fn().data.reshape(-1)[0])
    finally:
        stack.extend(saved)


def grad_check(
    fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    eps: float = 1e-6,
    tol: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> Dict[str, object]:
    """
    Compare analytic gradients against central finite differences.

    Args:
        fn: builds the scalar loss from ``params`` (called many times)
        params: name -> parameter tensor (requires_grad)
        eps: finite-difference step, in (0, 1e-3]
        tol: maximum allowed relative error
        max_entries: check at most this many random entries per parameter
        seed: RNG seed for entry sampling

    Returns:
        dict: {"max_errors": {name: float}, "max_error": float, "passed": bool, "tolerance": tol}

    Raises:
        NonDeterministicForwardError: two identical forward runs disagree
    """
    if not 0.0 < eps <= 1e-3:
        raise ValueError(f"eps must lie in (0, 1e-3], got {eps}")

    first = _forward_value(fn)
    second = _forward_value(fn)
    if first != second:
        raise NonDeterministicForwardError(f"Forward pass is not deterministic: {first!r} vs {second!r}")

    zero_grads(params)
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    rng = np.random.default_rng(seed)
    max_errors: Dict[str, float] = {}
    for name, param in params.items():
        flat = param.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for entry in entries:
            original = flat[entry]
            flat[entry] = original + eps
            plus = _forward_value(fn)
            flat[entry] = original - eps
            minus = _forward_value(fn)
            flat[entry] = original
            numeric = (plus - minus) / (2.0 * eps)
            exact = analytic[name].reshape(-1)[entry]
            denom = max(abs(exact), abs(numeric), GRAD_CHECK_FLOOR)
            worst = max(worst, abs(exact - numeric) / denom)
        max_errors[name] = worst

    overall = max(max_errors.values()) if max_errors else 0.0
    passed = overall < tol
    if not passed:
        logger.warning(f"Gradient check failed: max relative error {overall:.3e} >= {tol:.1e}")
    return {"max_errors": max_errors, "max_error": overall, "passed": passed, "tolerance": tol}
