"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation in this module takes :class:`Tensor` inputs, computes its
result eagerly with numpy and, when any input requires gradients, records a
node holding a closure that maps the output gradient to input gradients.
:func:`backward` collects those nodes into a :class:`Tape` (producers before
consumers) and replays it in reverse.

Convolutions use cross-correlation semantics (no kernel flip). The ReLU
derivative at 0 is defined as 0.
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
import logging
import threading
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ctanet.core.errors import ConfigurationError, ContractError, DimensionError, NumericError


logger = logging.getLogger(__name__)

Axis = Optional[Union[int, Tuple[int, ...]]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


def _kink_records() -> Optional[List[np.ndarray]]:
    return getattr(_state, 'kinks', None)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def record_kinks() -> Iterator[List[np.ndarray]]:
    """Collect the branch pattern of every piecewise op evaluated on this thread.

    Yields
    ------
    list of np.ndarray
        Boolean masks appended by ``relu`` and ``clamp_min`` in evaluation
        order. Two evaluations with equal lists took the same linear piece.
    """
    previous = _kink_records()
    records: List[np.ndarray] = []
    _state.kinks = records
    try:
        yield records
    finally:
        _state.kinks = previous


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient accumulator.

    Parameters
    ----------
    data : array_like
        Values, copied and converted to float64.
    requires_grad : bool, optional
        Whether gradients should be accumulated into ``grad``.
    name : str, optional
        Label used in error messages and parameter listings.
    """
    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._node: Optional['_Node'] = None
        self._retain = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def retain_grad(self) -> 'Tensor':
        """Keep the gradient of this non-leaf tensor after :func:`backward`."""
        self._retain = True
        self.grad = np.zeros_like(self.data)
        return self

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other: Any) -> 'Tensor':
        return add(self, other)

    def __radd__(self, other: Any) -> 'Tensor':
        return add(other, self)

    def __sub__(self, other: Any) -> 'Tensor':
        return sub(self, other)

    def __rsub__(self, other: Any) -> 'Tensor':
        return sub(other, self)

    def __mul__(self, other: Any) -> 'Tensor':
        return mul(self, other)

    def __rmul__(self, other: Any) -> 'Tensor':
        return mul(other, self)

    def __truediv__(self, other: Any) -> 'Tensor':
        return div(self, other)

    def __neg__(self) -> 'Tensor':
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> 'Tensor':
        return power(self, exponent)

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        return matmul(self, other)

    def __getitem__(self, index: Any) -> 'Tensor':
        return getitem(self, index)


def parameter(data: Any, name: Optional[str] = None) -> Tensor:
    """Create a leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class _Node:
    op: str
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn
    output: Optional[Tensor] = None


def _wrap(data: np.ndarray, op: str, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.name = None
    out._retain = False
    out.grad = None
    out._node = None
    out.requires_grad = _grad_enabled() and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        out._node = _Node(op=op, inputs=tuple(inputs), backward=backward_fn, output=out)
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _normalize_axis(axis: Axis, ndim: int, op: str) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise DimensionError(f"{op}: axis {a} out of range for a tensor of rank {ndim}")
        normalized.append(a % ndim)
    return tuple(normalized)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} cannot be broadcast")


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'add')

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _wrap(a.data + b.data, 'add', (a, b), backward_fn)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'sub')

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _wrap(a.data - b.data, 'sub', (a, b), backward_fn)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'mul')

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return _wrap(a.data * b.data, 'mul', (a, b), backward_fn)


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, 'div')
    with np.errstate(divide='ignore', invalid='ignore'):
        out = a.data / b.data

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * a.data / (b.data * b.data), b.shape)

    return _wrap(out, 'div', (a, b), backward_fn)


def power(x: Any, exponent: float) -> Tensor:
    x = as_tensor(x)
    exponent = float(exponent)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * exponent * np.power(x.data, exponent - 1.0),)

    return _wrap(np.power(x.data, exponent), 'power', (x,), backward_fn)


def exp(x: Any) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over='ignore'):
        out = np.exp(x.data)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * out,)

    return _wrap(out, 'exp', (x,), backward_fn)


def log(x: Any) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.log(x.data)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g / x.data,)

    return _wrap(out, 'log', (x,), backward_fn)


def clamp_min(x: Any, low: float) -> Tensor:
    """Elementwise ``max(x, low)``; the gradient is passed where ``x >= low``."""
    x = as_tensor(x)
    mask = x.data >= low
    records = _kink_records()
    if records is not None:
        records.append(mask)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * mask,)

    return _wrap(np.where(mask, x.data, low), 'clamp_min', (x,), backward_fn)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def sigmoid(x: Any) -> Tensor:
    x = as_tensor(x)
    e = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * out * (1.0 - out),)

    return _wrap(out, 'sigmoid', (x,), backward_fn)


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * (1.0 - out * out),)

    return _wrap(out, 'tanh', (x,), backward_fn)


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    records = _kink_records()
    if records is not None:
        records.append(mask)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * mask,)

    return _wrap(np.where(mask, x.data, 0.0), 'relu', (x,), backward_fn)


POINTWISE: Dict[str, Callable[[Any], Tensor]] = {
    'sigmoid': sigmoid,
    'tanh': tanh,
    'relu': relu,
}


def pointwise(name: str, x: Any) -> Tensor:
    """Apply the named elementwise nonlinearity.

    Raises
    ------
    ConfigurationError
        If ``name`` is not one of ``sigmoid``, ``tanh`` or ``relu``.
    """
    if name not in POINTWISE:
        raise ConfigurationError(f"unknown pointwise op '{name}'. Use one of {sorted(POINTWISE)}.")
    return POINTWISE[name](x)


# ---------------------------------------------------------------------------
# reductions and normalisation


def tensor_sum(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axis(axis, x.ndim, 'sum')
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _wrap(out, 'sum', (x,), backward_fn)


def tensor_mean(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axis(axis, x.ndim, 'mean')
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _wrap(out, 'mean', (x,), backward_fn)


def global_avg_pool_2d(x: Any) -> Tensor:
    """Average over the two trailing (spatial) axes: ``C×H×W -> C``."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"global_avg_pool_2d expects a C×H×W map, got shape {x.shape}")
    return tensor_mean(x, axis=(x.ndim - 2, x.ndim - 1))


def reduce(name: str, x: Any, axis: Axis = None) -> Tensor:
    """Apply the named reduction (``sum``, ``mean`` or ``global_avg_pool_2d``)."""
    if name == 'sum':
        return tensor_sum(x, axis)
    if name == 'mean':
        return tensor_mean(x, axis)
    if name == 'global_avg_pool_2d':
        return global_avg_pool_2d(x)
    raise ConfigurationError(f"unknown reduction '{name}'")


def softmax(x: Any, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` computed with max-subtraction."""
    x = as_tensor(x)
    (ax,) = _normalize_axis(axis, x.ndim, 'softmax')  # type: ignore
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=ax, keepdims=True)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return _wrap(out, 'softmax', (x,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy ``matmul`` semantics.

    The plain case is ``a[m×k] @ b[k×n]``. Leading batch axes broadcast and a
    1-D operand is treated as a row (left) or column (right) vector.

    Raises
    ------
    DimensionError
        If the inner dimensions disagree; the message names both shapes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch dimensions disagree for shapes {a.shape} and {b.shape}")

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            ga = np.matmul(bd, g[..., :, None])[..., 0]
            gb = ad[:, None] * g[..., None, :]
        elif bd.ndim == 1:
            ga = g[..., :, None] * bd
            gb = np.matmul(np.swapaxes(ad, -1, -2), g[..., :, None])[..., 0]
        else:
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _wrap(out, 'matmul', (a, b), backward_fn)


def conv2d(inputs: Tensor,
           kernels: Tensor,
           stride: int = 1,
           padding: int = 0,
           bias: Optional[Tensor] = None) -> Tensor:
    """2-D cross-correlation.

    Parameters
    ----------
    inputs : Tensor
        ``C_in×H×W`` feature map, or ``N×C_in×H×W`` for a stack of maps.
    kernels : Tensor
        ``C_out×C_in×k×k`` filters.
    stride : int
        Step between windows, at least 1.
    padding : int
        Zero padding added on every spatial border.
    bias : Tensor, optional
        ``C_out`` offsets added to every output position.

    Returns
    -------
    Tensor
        ``C_out×H'×W'`` (or ``N×C_out×H'×W'``) with
        ``H' = floor((H + 2·padding − k) / stride) + 1``.
    """
    inputs, kernels = as_tensor(inputs), as_tensor(kernels)
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride} and {padding}")
    if inputs.ndim not in (3, 4) or kernels.ndim != 4:
        raise DimensionError(f"conv2d: expected C×H×W input and 4-D kernels, got {inputs.shape} and {kernels.shape}")
    batched = inputs.ndim == 4
    x = inputs.data if batched else inputs.data[None]
    w = kernels.data
    n, c_in, height, width = x.shape
    c_out, k_in, kh, kw = w.shape
    if k_in != c_in:
        raise DimensionError(f"conv2d: input has {c_in} channels but kernels {kernels.shape} expect {k_in}")
    if kh > height + 2 * padding or kw > width + 2 * padding:
        raise DimensionError(f"conv2d: kernel {kh}×{kw} larger than padded input {height}×{width} "
                             f"(padding {padding})")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {c_out} output channels")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum('nchwij,ocij->nohw', windows, w, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        g4 = g if batched else g[None]
        gw = np.einsum('nchwij,nohw->ocij', windows, g4, optimize=True)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += np.einsum(
                    'nohw,oc->nchw', g4, w[:, :, i, j], optimize=True)
        gx = gxp[:, :, padding:padding + height, padding:padding + width]
        grads: List[Optional[np.ndarray]] = [gx if batched else gx[0], gw]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    parents = (inputs, kernels) if bias is None else (inputs, kernels, bias)
    return _wrap(out if batched else out[0], 'conv2d', parents, backward_fn)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}")

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g.reshape(x.shape),)

    return _wrap(out, 'reshape', (x,), backward_fn)


def transpose(x: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    perm = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(perm) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {perm} is not a permutation of the axes of {x.shape}")
    inverse = tuple(np.argsort(perm))

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.transpose(g, inverse),)

    return _wrap(np.transpose(x.data, perm), 'transpose', (x,), backward_fn)


def getitem(x: Any, index: Any) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data[index]
    except IndexError as e:
        raise DimensionError(f"index {index!r} invalid for shape {x.shape}: {e}")

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _wrap(np.array(out, dtype=np.float64), 'getitem', (x,), backward_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack: no tensors given")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _wrap(out, 'stack', tensors, backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no tensors given")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return np.split(g, splits, axis=axis)

    return _wrap(out, 'concat', tensors, backward_fn)


# ---------------------------------------------------------------------------
# reverse mode


class Tape:
    """Ordered record of executed operations.

    Entries are in topological order: every node appears after the nodes that
    produced its inputs.
    """

    def __init__(self, entries: List[_Node]) -> None:
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[_Node]:
        return iter(self.entries)

    @classmethod
    def from_output(cls, output: Tensor) -> 'Tape':
        """Record every node that ``output`` depends on."""
        entries: List[_Node] = []
        visited = set()
        if output._node is None:
            return cls(entries)
        stack: List[Tuple[_Node, bool]] = [(output._node, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                entries.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.inputs:
                if parent._node is not None and id(parent._node) not in visited:
                    stack.append((parent._node, False))
        return cls(entries)

    def replay(self, output: Tensor, seed: np.ndarray) -> None:
        """Propagate ``seed`` (the gradient of ``output``) to every input."""
        pending: Dict[int, np.ndarray] = {id(output): seed}
        for node in reversed(self.entries):
            out = node.output
            assert out is not None
            g = pending.pop(id(out), None)
            if g is None:
                continue
            if out._retain and out.grad is not None:
                out.grad += g
            for parent, pg in zip(node.inputs, node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._node is None:
                    if parent.grad is None:
                        parent.grad = np.zeros_like(parent.data)
                    parent.grad += pg
                elif id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + pg
                else:
                    pending[id(parent)] = np.array(pg, dtype=np.float64)


def backward(loss: Tensor) -> Tape:
    """Accumulate d(loss)/d(leaf) into every ``requires_grad`` leaf.

    Gradients accumulate across calls; call ``zero_grad`` on the leaves
    between independent passes.

    Raises
    ------
    ContractError
        If ``loss`` is not a scalar.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    tape = Tape.from_output(loss)
    if loss._node is None:
        if loss.requires_grad and loss.grad is not None:
            loss.grad += seed
        return tape
    tape.replay(loss, seed)
    return tape


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Outcome of :func:`grad_check`.

    Attributes
    ----------
    max_error : float
        Max over checked coordinates of
        ``|analytic − numeric| / max(1, |numeric|)``.
    checked : int
        Number of coordinates compared.
    excluded : list of (str, tuple)
        Coordinates skipped because the perturbation crossed a kink.
    """
    max_error: float = 0.0
    checked: int = 0
    excluded: List[Tuple[str, Tuple[int, ...]]] = field(default_factory=list)
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None


def _same_branches(first: List[np.ndarray], second: List[np.ndarray]) -> bool:
    if len(first) != len(second):
        return False
    return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(first, second))


def grad_check(f: Callable[[Any], Tensor],
               x0: Union[Tensor, Mapping[str, Tensor]],
               h: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences.

    Parameters
    ----------
    f : callable
        Builds a scalar graph from ``x0`` (called as ``f(x0)``).
    x0 : Tensor or mapping of str to Tensor
        The leaves to differentiate; their values are perturbed in place and
        restored.
    h : float
        Central-difference step.

    Returns
    -------
    GradCheckReport
        Coordinates where ``f`` took a different linear piece at ``+h`` and
        ``−h`` are listed in ``excluded`` instead of being compared.

    Raises
    ------
    NumericError
        If any op produces non-finite values; the message names the op.
    """
    if h <= 0:
        raise ContractError(f"grad_check step must be positive, got {h}")
    leaves = {'x': x0} if isinstance(x0, Tensor) else dict(x0)
    for leaf in leaves.values():
        if not leaf.requires_grad:
            leaf.requires_grad = True
            leaf.grad = np.zeros_like(leaf.data)
        leaf.zero_grad()
    backward(f(x0))
    analytic = {name: leaf.grad.copy() for name, leaf in leaves.items()}  # type: ignore

    report = GradCheckReport()
    with no_grad():
        for name, leaf in leaves.items():
            for idx in np.ndindex(*leaf.shape):
                original = leaf.data[idx]
                leaf.data[idx] = original + h
                with record_kinks() as plus_branches:
                    f_plus = f(x0).item()
                leaf.data[idx] = original - h
                with record_kinks() as minus_branches:
                    f_minus = f(x0).item()
                leaf.data[idx] = original
                if not _same_branches(plus_branches, minus_branches):
                    report.excluded.append((name, idx))
                    continue
                numeric = (f_plus - f_minus) / (2.0 * h)
                error = abs(analytic[name][idx] - numeric) / max(1.0, abs(numeric))
                report.checked += 1
                if error > report.max_error or report.worst is None:
                    report.max_error = max(report.max_error, error)
                    report.worst = (name, idx)
    if report.excluded:
        logger.debug(f"grad_check excluded {len(report.excluded)} kink coordinates")
    return report


class Parameterized:
    """Base class for objects that own named parameter tensors."""

    def named_parameters(self) -> Dict[str, Tensor]:
        """Return parameters keyed by their checkpoint name, in a stable order."""
        raise NotImplementedError

    def zero_grad(self) -> None:
        for tensor in self.named_parameters().values():
            tensor.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.size for t in self.named_parameters().values())
