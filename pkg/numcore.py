"""
Numerical core for the relational inference toolkit.
Dense float64 tensors, a reverse-mode differentiation tape, the Adam optimizer,
symmetric eigendecomposition, matrix exponentials and powers, and named
random streams.
"""

import math
import threading
import zlib
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ContractError, DimensionError, NumericError

DTYPE = np.float64

_local = threading.local()


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    """Innermost tape entered on the calling thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        # leaves own their buffer; op outputs wrap freshly computed arrays
        self.data = np.array(data, dtype=DTYPE) if requires_grad else np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        flag = " requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{label}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Record:
    __slots__ = ("op_kind", "inputs", "output", "backward_fn")

    def __init__(self, op_kind, inputs, output, backward_fn):
        self.op_kind = op_kind
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitives; a context manager that activates itself per thread."""

    def __init__(self):
        self.records: List[_Record] = []
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

    def record(self, op_kind, inputs, output, backward_fn):
        if self.consumed:
            raise ContractError("cannot record on a consumed tape")
        self.records.append(_Record(op_kind, inputs, output, backward_fn))

    def backward(self, loss: Tensor):
        backward(self, loss)


def backward(tape: Tape, loss: Tensor):
    """Populate ``grad`` on every requires-grad leaf reached from ``loss``; consumes the tape."""
    if tape.consumed:
        raise ContractError("tape already consumed")
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")

    produced = {id(r.output) for r in tape.records}
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        input_grads = rec.backward_fn(g)
        for tensor, ig in zip(rec.inputs, input_grads):
            if ig is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
            if key not in produced:
                leaves[key] = tensor

    for key, tensor in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        if tensor.grad is None:
            tensor.grad = np.array(g, dtype=DTYPE).reshape(tensor.shape)
        else:
            tensor.grad = tensor.grad + g.reshape(tensor.shape)

    tape.records = []
    tape.consumed = True


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _finish(op_kind, inputs: Sequence[Tensor], out: np.ndarray, backward_fn: Callable) -> Tensor:
    if not math.isfinite(float(np.sum(out))) and not np.all(np.isfinite(out)):
        raise NumericError(f"{op_kind} produced non-finite values")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor(out)
    result.requires_grad = track
    if track:
        tape.record(op_kind, tuple(inputs), result, backward_fn)
    return result


def _broadcast_op(op_kind, fn, a, b):
    try:
        return fn(a, b)
    except ValueError as exc:
        raise DimensionError(op_kind, f"incompatible shapes {np.shape(a)} and {np.shape(b)}") from exc


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op("add", np.add, a.data, b.data)
    return _finish("add", (a, b), out,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op("sub", np.subtract, a.data, b.data)
    return _finish("sub", (a, b), out,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    out = _broadcast_op("mul", np.multiply, a.data, b.data)
    return _finish("mul", (a, b), out,
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _finish("scalar_mul", (a,), a.data * c, lambda g: (g * c,))


def matmul(a, b, op_kind="matmul") -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(op_kind, f"operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(op_kind, f"inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # stacked rows times one matrix: a single 2-D product
        k = a.shape[-1]
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))

        def grad_fn(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a.data.reshape(-1, k).T @ g2

        return _finish(op_kind, (a, b), out, grad_fn)

    out = _broadcast_op(op_kind, np.matmul, a.data, b.data)

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _finish(op_kind, (a, b), out, grad_fn)


def power_step(M, X) -> Tensor:
    """One power-iteration step ``M @ X``."""
    return matmul(M, X, op_kind="power_step")


def sum_reduce(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _finish("sum", (a,), np.asarray(out, dtype=DTYPE), grad_fn)


def mse(pred, target) -> Tensor:
    """Mean of squared differences over every element."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError("mse", f"prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    count = max(diff.size, 1)
    out = np.asarray(np.sum(diff * diff) / count, dtype=DTYPE)

    def grad_fn(g):
        d = (2.0 / count) * diff * g
        return d, -d

    return _finish("mse", (pred, target), out, grad_fn)


def concat(tensors: Sequence, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError("concat", str(exc)) from exc
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _finish("concat", tensors, out, grad_fn)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _finish("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def elu(a, alpha=1.0) -> Tensor:
    a = as_tensor(a)
    below = a.data < 0
    curve = alpha * np.expm1(a.data[below])
    out = a.data.copy()
    out[below] = curve

    def grad_fn(g):
        ga = g.copy()
        ga[below] *= curve + alpha
        return (ga,)

    return _finish("elu", (a,), out, grad_fn)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _finish("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _finish("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def softmax(a, scale=1.0) -> Tensor:
    """Softmax of ``scale * a`` over the last axis."""
    a = as_tensor(a)
    z = scale * a.data
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=-1, keepdims=True)

    def grad_fn(g):
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return (scale * out * (g - inner),)

    return _finish("softmax", (a,), out, grad_fn)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    return _finish("transpose", (a,), np.swapaxes(a.data, -1, -2).copy(),
                   lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError("reshape", str(exc)) from exc
    return _finish("reshape", (a,), out.copy(), lambda g: (g.reshape(a.shape),))


def take(a, indices, axis=-1) -> Tensor:
    """Select entries along one axis; repeated indices accumulate in the gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, idx, axis=axis)
    ax = axis % a.ndim

    def grad_fn(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, ax, 0)
        np.add.at(moved, idx, np.moveaxis(g, ax, 0) if idx.ndim else g)
        return (full,)

    return _finish("take", (a,), np.asarray(out, dtype=DTYPE), grad_fn)


def floor_clamp(a, floor: float) -> Tensor:
    """``max(a, floor)`` elementwise; gradient passes where ``a`` exceeds the floor."""
    a = as_tensor(a)
    mask = a.data > floor
    return _finish("floor_clamp", (a,), np.where(mask, a.data, floor), lambda g: (g * mask,))


def power(a, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""
    a = as_tensor(a)
    out = np.power(a.data, exponent)
    return _finish("power", (a,), out,
                   lambda g: (g * exponent * np.power(a.data, exponent - 1.0),))


def eye_like(n: int) -> Tensor:
    return Tensor(np.eye(n))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def finite_difference_grad(fn: Callable[[], Tensor], tensor: Tensor, h=1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued ``fn`` with respect to ``tensor``."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = fn().item()
        flat[i] = orig - h
        minus = fn().item()
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def analytic_grad(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> List[np.ndarray]:
    """Run ``fn`` under a fresh tape and return the gradients of ``tensors``."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers for a named parameter set."""

    def __init__(self, params: Dict[str, Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(state: AdamState, params: Dict[str, Tensor], grads: Optional[Dict[str, np.ndarray]] = None):
    """Apply one bias-corrected Adam update in place; ``grads`` defaults to each ``param.grad``."""
    updates = {}
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=DTYPE)
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise DimensionError("adam", f"parameter {name!r}: grad {g.shape} vs param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        updates[name] = g

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in updates.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name].data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Dense linear algebra
# ---------------------------------------------------------------------------

class SpectralDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a symmetric matrix."""

    def __init__(self, eigenvalues: np.ndarray, eigenvectors: np.ndarray):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    def reconstruct(self, fn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
        """``U diag(fn(λ)) Uᵀ``; identity ``fn`` rebuilds the input."""
        lam = self.eigenvalues if fn is None else fn(self.eigenvalues)
        U = self.eigenvectors
        return (U * lam) @ U.T


def is_symmetric(M: np.ndarray, tol=1e-10) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= tol * max(1.0, np.max(np.abs(M), initial=0.0)))


def sym_eig(M) -> SpectralDecomposition:
    M = np.asarray(M, dtype=DTYPE)
    if not is_symmetric(M):
        raise ContractError("sym_eig requires a square symmetric matrix")
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    return SpectralDecomposition(lam, U)


_TAYLOR_TERMS = 18


def _exp_series(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    norm = np.linalg.norm(A, 1)
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    S = A / (2.0 ** squarings)
    E = np.eye(n)
    for k in range(_TAYLOR_TERMS, 0, -1):
        E = np.eye(n) + (S @ E) / k
    for _ in range(squarings):
        E = E @ E
    return E


def mat_exp(M, scale=1.0, route="auto") -> np.ndarray:
    """``exp(scale * M)`` through the eigendecomposition (symmetric) or scaling-and-squaring."""
    M = np.asarray(M, dtype=DTYPE)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("mat_exp", f"square matrix required, got {M.shape}")
    if not np.all(np.isfinite(M)) or not math.isfinite(scale):
        raise NumericError("mat_exp input is not finite")
    if route == "auto":
        route = "eig" if is_symmetric(M, tol=1e-12) else "series"
    if route == "eig":
        return sym_eig(M).reconstruct(lambda lam: np.exp(scale * lam))
    if route == "series":
        return _exp_series(scale * M)
    raise ContractError(f"unknown mat_exp route {route!r}")


def mat_pow(M, k: int) -> np.ndarray:
    M = np.asarray(M, dtype=DTYPE)
    if int(k) != k or k < 0:
        raise ContractError(f"mat_pow exponent must be a non-negative integer, got {k}")
    out = np.eye(M.shape[0])
    for _ in range(int(k)):
        out = out @ M
    return out


# ---------------------------------------------------------------------------
# Named random streams
# ---------------------------------------------------------------------------

def stream_seed(seed: int, *names) -> np.random.SeedSequence:
    """Seed sequence for the stream ``names`` under a run seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    entropy += [zlib.crc32(str(name).encode("utf-8")) for name in names]
    return np.random.SeedSequence(entropy)


def stream_rng(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, *names))


def stream_int(seed: int, *names) -> int:
    """32-bit integer seed for libraries that take plain ints."""
    return int(stream_seed(seed, *names).generate_state(1, dtype=np.uint32)[0])
