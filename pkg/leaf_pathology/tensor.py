# coding=utf-8
"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation that has at least one input requiring a gradient records its
inputs and a backward rule on the output tensor. Calling :func:`backward` on a
scalar sorts the recorded graph into a :class:`Tape` and sweeps it in reverse,
accumulating gradients into the ``grad`` of every tensor that requires one.
The graph is rebuilt on every forward pass.

Usage:

.. code-block:: python

    from leaf_pathology.tensor import Tensor, backward

    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = (x * x).sum()
    backward(loss)
    print(x.grad)  # [2. 4. 6.]
"""
import threading
import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ShapeMismatch, InvalidStride, NotScalar, EmptyTape, NonFinite

ELEMENTWISE_KINDS = ('add', 'sub', 'mul')
ACTIVATION_KINDS = ('relu', 'sigmoid', 'swish')
POOL_KINDS = ('global_avg', 'max2x2')

_grad_state = threading.local()


def _grad_enabled():
    return getattr(_grad_state, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    """Context manager in which no operation is recorded for differentiation."""
    previous = _grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor(object):
    """A dense n-dimensional array of 64-bit floats.

    Args:
        data: Anything numpy can turn into a float64 array. Scalars become
            tensors of shape (1,).
        requires_grad: Boolean to note whether gradients should be accumulated
            into this tensor when :func:`backward` runs. (Default: False).

    Properties:
        * data
        * shape
        * size
        * ndim
        * requires_grad
        * grad
    """
    __slots__ = ('_data', 'requires_grad', 'grad', '_parents', '_backward', '_op')

    def __init__(self, data, requires_grad=False, _parents=(), _op=''):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if 0 in arr.shape:
            raise ShapeMismatch(
                'Tensor dimensions must be at least 1. Got shape {}.'.format(arr.shape))
        self._data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @classmethod
    def zeros(cls, shape, requires_grad=False):
        """Create a tensor of zeros with a given shape."""
        return cls(np.zeros(shape), requires_grad)

    @classmethod
    def ones_like(cls, other):
        """Create a tensor of ones with the shape of another tensor."""
        return cls(np.ones(other.shape))

    @property
    def data(self):
        """Get or set the numpy array of values (row-major, float64)."""
        return self._data

    @data.setter
    def data(self, value):
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if arr.shape != self._data.shape:
            raise ShapeMismatch('Cannot assign data of shape {} to a tensor of shape '
                                '{}.'.format(arr.shape, self._data.shape))
        self._data = arr

    @property
    def shape(self):
        """Get a tuple for the dimension sizes of the tensor."""
        return self._data.shape

    @property
    def size(self):
        """Get the number of elements in the tensor."""
        return self._data.size

    @property
    def ndim(self):
        """Get the number of dimensions of the tensor."""
        return self._data.ndim

    @property
    def op(self):
        """Get the name of the operation that produced this tensor (if any)."""
        return self._op

    @property
    def parents(self):
        """Get a tuple of the recorded input tensors of this tensor."""
        return self._parents

    def item(self):
        """Get the value of a single-element tensor as a float."""
        if self.size != 1:
            raise NotScalar('item() requires a single element. Got shape {}.'.format(
                self.shape))
        return float(self._data.reshape(-1)[0])

    def numpy(self):
        """Get a copy of the values as a numpy array."""
        return self._data.copy()

    def detach(self):
        """Get a new tensor sharing the values but with no recorded history."""
        return Tensor(self._data)

    def zero_grad(self):
        """Clear the accumulated gradient."""
        self.grad = None

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return reshape(self, shape)

    def relu(self):
        return activation('relu', self)

    def sigmoid(self):
        return activation('sigmoid', self)

    def swish(self):
        return activation('swish', self)

    def __add__(self, other):
        return elementwise('add', self, other)

    def __radd__(self, other):
        return elementwise('add', self, other)

    def __sub__(self, other):
        return elementwise('sub', self, other)

    def __rsub__(self, other):
        return elementwise('add', -self, other)

    def __mul__(self, other):
        return elementwise('mul', self, other)

    def __rmul__(self, other):
        return elementwise('mul', self, other)

    def __neg__(self):
        return elementwise('mul', self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __len__(self):
        return self.shape[0]

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'Tensor: [shape: {}, requires_grad: {}]'.format(
            self.shape, self.requires_grad)


class TapeEntry(object):
    """One executed operation on a :class:`Tape`.

    Properties:
        * op
        * inputs
        * output
    """
    __slots__ = ('output',)

    def __init__(self, output):
        self.output = output

    @property
    def op(self):
        return self.output._op

    @property
    def inputs(self):
        return self.output._parents

    def run_backward(self):
        """Apply the backward rule of the operation to its output gradient."""
        if self.output.grad is not None:
            self.output._backward(self.output.grad)


class Tape(object):
    """Operations that produced a tensor, in topological order.

    Every entry appears after the entries that produced its inputs and every
    operation appears exactly once, no matter how often its output was reused.

    Args:
        entries: An ordered list of TapeEntry objects.
    """
    __slots__ = ('_entries',)

    def __init__(self, entries):
        self._entries = tuple(entries)

    @classmethod
    def from_output(cls, output):
        """Collect the recorded history of a tensor into a Tape.

        Args:
            output: The Tensor whose history will be collected.
        """
        order, visited = [], set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(TapeEntry(node))
                continue
            if id(node) in visited or node._backward is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited and parent._backward is not None:
                    stack.append((parent, False))
        return cls(order)

    @property
    def entries(self):
        """Get a tuple of TapeEntry objects in execution order."""
        return self._entries

    def backward(self, output):
        """Sweep the tape in reverse from an output whose grad is already set."""
        for entry in self._entries:
            if entry.output is not output:
                entry.output.grad = None
        for entry in reversed(self._entries):
            entry.run_backward()

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def ToString(self):
        return self.__repr__()

    def __repr__(self):
        return 'Tape: [{} operations]'.format(len(self._entries))


def backward(loss):
    """Populate the gradients of every tensor that contributed to a scalar loss.

    Gradients accumulate (+=) into tensors that are used more than once and into
    leaf tensors that already hold a gradient from an earlier call.

    Args:
        loss: A single-element Tensor.

    Returns:
        The Tape that was swept.
    """
    if loss.size != 1:
        raise NotScalar('backward() requires a scalar loss. Got shape {}.'.format(
            loss.shape))
    tape = Tape.from_output(loss)
    if len(tape) == 0 and not loss.requires_grad:
        raise EmptyTape('The loss has no recorded operations requiring gradients.')
    loss.grad = np.ones(loss.shape)
    tape.backward(loss)
    return tape


def grad_check(f, x, step=1e-5):
    """Compare the analytic gradient of a scalar function with central differences.

    The values of ``x`` are perturbed in place, so ``f`` may also close over
    ``x`` (for example a weight of a model) instead of using its argument.

    Args:
        f: A function taking the Tensor x and returning a scalar Tensor.
        x: The Tensor with respect to which gradients are checked.
        step: The finite-difference step. (Default: 1e-5).

    Returns:
        The maximum over coordinates of
        ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    if step <= 0:
        raise ValueError('grad_check step must be positive. Got {}.'.format(step))
    was_required, old_grad = x.requires_grad, x.grad
    x.requires_grad, x.grad = True, None
    try:
        out = f(x)
        _check_finite_scalar(out)
        backward(out)
        analytic = np.zeros(x.size) if x.grad is None else x.grad.reshape(-1).copy()
        x.requires_grad = False
        flat = x.data.reshape(-1)
        max_err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = _check_finite_scalar(f(x))
            flat[i] = orig - step
            f_minus = _check_finite_scalar(f(x))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            max_err = max(max_err, abs(analytic[i] - numeric) / denom)
    finally:
        x.requires_grad, x.grad = was_required, old_grad
    return max_err


def _check_finite_scalar(out):
    if out.size != 1:
        raise NotScalar('Expected a scalar output. Got shape {}.'.format(out.shape))
    value = out.item()
    if not np.isfinite(value):
        raise NonFinite('Function produced a non-finite value: {}'.format(value))
    return value


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _make(data, parents, backward_fn, op):
    """Create an output tensor and record its history when gradients are needed."""
    tracked = _grad_enabled() and any(p.requires_grad for p in parents)
    if not tracked:
        return Tensor(data, _op=op)
    out = Tensor(data, requires_grad=True, _parents=tuple(parents), _op=op)
    out._backward = backward_fn
    return out


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64).reshape(tensor.shape)
    else:
        tensor.grad = tensor.grad + grad


def _check_broadcast(a_shape, b_shape):
    if len(b_shape) > len(a_shape):
        raise ShapeMismatch('Cannot broadcast shape {} into shape {}.'.format(
            b_shape, a_shape))
    lead = len(a_shape) - len(b_shape)
    for a_dim, b_dim in zip(a_shape[lead:], b_shape):
        if b_dim != a_dim and b_dim != 1:
            raise ShapeMismatch('Cannot broadcast shape {} into shape {}.'.format(
                b_shape, a_shape))


def _unbroadcast(grad, shape):
    """Sum a gradient over the dimensions along which ``shape`` was broadcast."""
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def elementwise(op_kind, a, b):
    """Add, subtract or multiply two tensors elementwise.

    Args:
        op_kind: One of add, sub, mul.
        a: The left Tensor, which sets the shape of the output.
        b: The right Tensor (or number). Its shape must equal a.shape or
            broadcast into it: fewer or equal dimensions, each trailing
            dimension equal to the one of a or 1.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    if op_kind == 'add':
        data = a.data + b.data
    elif op_kind == 'sub':
        data = a.data - b.data
    elif op_kind == 'mul':
        data = a.data * b.data
    else:
        raise ValueError('Unknown elementwise op "{}". Choose from {}.'.format(
            op_kind, ELEMENTWISE_KINDS))

    def _backward(g):
        if op_kind == 'add':
            g_a, g_b = g, g
        elif op_kind == 'sub':
            g_a, g_b = g, -g
        else:
            g_a, g_b = g * b.data, g * a.data
        _accumulate(a, np.broadcast_to(g_a, a.shape))
        _accumulate(b, _unbroadcast(g_b, b.shape))
    return _make(data, (a, b), _backward, op_kind)


def matmul(a, b):
    """Multiply an m x k matrix by a k x n matrix."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch('Cannot multiply matrices of shapes {} and {}.'.format(
            a.shape, b.shape))

    def _backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)
    return _make(a.data @ b.data, (a, b), _backward, 'matmul')


def conv2d(input, kernel, stride=1, padding=0, depthwise=False):
    """Two-dimensional cross-correlation (the kernel is not flipped).

    Args:
        input: A Tensor of shape N x C x H x W.
        kernel: A Tensor of shape F x C x kh x kw, or C x 1 x kh x kw when
            depthwise is True.
        stride: Integer step between neighboring output positions. (Default: 1).
        padding: Integer number of zero rows/columns added on every side.
            (Default: 0).
        depthwise: Boolean to convolve each channel with its own kernel.
            (Default: False).

    Returns:
        A Tensor of shape N x F x Ho x Wo with Ho = (H + 2p - kh) // stride + 1.
    """
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise InvalidStride('Convolution stride must be an integer >= 1. '
                            'Got {}.'.format(stride))
    if padding < 0:
        raise ShapeMismatch('Convolution padding must be >= 0. Got {}.'.format(padding))
    if input.ndim != 4 or kernel.ndim != 4:
        raise ShapeMismatch('conv2d expects 4D input and kernel. Got {} and {}.'.format(
            input.shape, kernel.shape))
    n, c, h, w = input.shape
    f, kc, kh, kw = kernel.shape
    if depthwise:
        if f != c or kc != 1:
            raise ShapeMismatch('Depthwise kernel must have shape {} x 1 x kh x kw. '
                                'Got {}.'.format(c, kernel.shape))
    elif kc != c:
        raise ShapeMismatch('Kernel expects {} input channels. Got {}.'.format(kc, c))
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeMismatch('Kernel {}x{} is larger than the padded input {}x{}.'.format(
            kh, kw, h + 2 * padding, w + 2 * padding))

    x_pad = np.pad(input.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) \
        if padding else input.data
    windows = sliding_window_view(x_pad, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]
    if depthwise:
        data = np.einsum('nchwij,cij->nchw', windows, kernel.data[:, 0])
    else:
        data = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3]))
        data = data.transpose(0, 3, 1, 2)

    def _backward(g):
        if kernel.requires_grad:
            if depthwise:
                g_k = np.einsum('nchwij,nchw->cij', windows, g)[:, None]
            else:
                g_k = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
            _accumulate(kernel, g_k)
        if input.requires_grad:
            if depthwise:
                g_win = np.einsum('nchw,cij->nchwij', g, kernel.data[:, 0])
            else:
                g_win = np.tensordot(g, kernel.data, axes=([1], [0]))
                g_win = g_win.transpose(0, 3, 1, 2, 4, 5)
            g_pad = np.zeros(x_pad.shape)
            h_span = stride * (h_out - 1) + 1
            w_span = stride * (w_out - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    g_pad[:, :, i:i + h_span:stride, j:j + w_span:stride] += \
                        g_win[:, :, :, :, i, j]
            _accumulate(input, g_pad[:, :, padding:padding + h, padding:padding + w])
    return _make(data, (input, kernel), _backward, 'conv2d')


def activation(kind, x):
    """Apply relu, sigmoid or swish (x * sigmoid(x)) elementwise."""
    if kind == 'relu':
        data = np.maximum(x.data, 0.0)

        def _backward(g):
            _accumulate(x, g * (x.data > 0))
    elif kind == 'sigmoid':
        data = expit(x.data)

        def _backward(g):
            _accumulate(x, g * data * (1.0 - data))
    elif kind == 'swish':
        sig = expit(x.data)
        data = x.data * sig

        def _backward(g):
            _accumulate(x, g * (sig + x.data * sig * (1.0 - sig)))
    else:
        raise ValueError('Unknown activation "{}". Choose from {}.'.format(
            kind, ACTIVATION_KINDS))
    return _make(data, (x,), _backward, kind)


def pool(kind, x):
    """Global average pooling to N x C x 1 x 1 or 2x2 max pooling with stride 2."""
    if x.ndim != 4:
        raise ShapeMismatch('pool expects a 4D tensor. Got {}.'.format(x.shape))
    n, c, h, w = x.shape
    if kind == 'global_avg':
        data = x.data.mean(axis=(2, 3), keepdims=True)

        def _backward(g):
            _accumulate(x, np.broadcast_to(g / (h * w), x.shape))
    elif kind == 'max2x2':
        if h % 2 or w % 2:
            raise ShapeMismatch('max2x2 pooling requires even spatial dims. '
                                'Got {}x{}.'.format(h, w))
        cells = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(n, c, h // 2, w // 2, 4)
        idx = cells.argmax(axis=-1)[..., None]
        data = np.take_along_axis(cells, idx, axis=-1)[..., 0]

        def _backward(g):
            g_cells = np.zeros(cells.shape)
            np.put_along_axis(g_cells, idx, g[..., None], axis=-1)
            g_x = g_cells.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            _accumulate(x, g_x.reshape(n, c, h, w))
    else:
        raise ValueError('Unknown pool "{}". Choose from {}.'.format(kind, POOL_KINDS))
    return _make(data, (x,), _backward, kind)


def softmax(x):
    """Row-wise softmax of an N x C tensor, computed with max-subtraction."""
    if x.ndim != 2:
        raise ShapeMismatch('softmax expects an N x C tensor. Got {}.'.format(x.shape))
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    data = exp / exp.sum(axis=1, keepdims=True)

    def _backward(g):
        _accumulate(x, data * (g - (g * data).sum(axis=1, keepdims=True)))
    return _make(data, (x,), _backward, 'softmax')


def tensor_sum(x):
    """Sum every element into a tensor of shape (1,)."""
    def _backward(g):
        _accumulate(x, np.broadcast_to(g.reshape(()), x.shape))
    return _make(np.array([x.data.sum()]), (x,), _backward, 'sum')


def mean(x):
    """Mean of every element as a tensor of shape (1,)."""
    size = x.size

    def _backward(g):
        _accumulate(x, np.broadcast_to(g.reshape(()) / size, x.shape))
    return _make(np.array([x.data.mean()]), (x,), _backward, 'mean')


def reshape(x, shape):
    """View a tensor with a new shape holding the same number of elements."""
    shape = tuple(int(s) for s in shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch('Cannot reshape {} into {}.'.format(x.shape, shape))

    def _backward(g):
        _accumulate(x, g.reshape(x.shape))
    return _make(data, (x,), _backward, 'reshape')


def log(x, floor=None):
    """Natural logarithm, optionally of the values clamped from below at floor.

    Coordinates that were clamped receive no gradient.
    """
    clamped = x.data if floor is None else np.maximum(x.data, floor)
    with np.errstate(divide='ignore', invalid='ignore'):
        data = np.log(clamped)

    def _backward(g):
        grad = g / clamped
        if floor is not None:
            grad = grad * (x.data >= floor)
        _accumulate(x, grad)
    return _make(data, (x,), _backward, 'log')
