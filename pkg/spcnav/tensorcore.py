"""A small dense tensor library with reverse-mode automatic differentiation

All values are 64-bit floating point numpy arrays. Every differentiable
operation returns a new :class:`Tensor` that remembers its inputs and a
closure that maps the gradient of its output to gradients of its inputs.
Calling :meth:`Tensor.backward` on a scalar replays these closures in
reverse topological order.
"""

from spcnav.utils import SpcNavError

import contextlib
import json
import logging
import numpy as np
import threading

logger = logging.getLogger("spcnav")

# The version of the checkpoint container layout
CHECKPOINT_FORMAT_VERSION = 1


class TensorError(SpcNavError):
    pass


class DimensionError(TensorError):
    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs. ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class GradientError(TensorError):
    pass


class CheckpointError(SpcNavError):
    pass


#
# Gradient recording mode
#

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable the recording of operations in the current thread"""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    def __init__(self, data, requires_grad=False):
        """A node of the computational graph

        :param data:
            Anything that numpy can convert to a float64 array
        :param requires_grad:
            Whether gradients should be accumulated into this tensor
        """
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # Operator overloads delegate to the module level functions

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return sum_(self, axis=axis)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data, parents, backward_fn):
    """Create the output of an operation and record it if necessary"""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


class Tape:
    def __init__(self, nodes):
        """The recorded operations leading to a tensor in topological order

        :param nodes:
            The tensors of the graph, inputs before the operations consuming them.
        """
        self.nodes = nodes

    @classmethod
    def record(cls, root):
        """Collect the graph below root with an iterative depth-first search"""
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)


def backward(loss):
    """Accumulate the gradients of a scalar loss into all leaf tensors

    Gradients of leaves are added to existing gradients, so calling this
    twice without resetting doubles them.

    :raises GradientError: if the loss is not a scalar.
    """
    if loss.data.size != 1:
        raise GradientError(
            f"Can only differentiate scalar values, got shape {loss.shape}"
        )
    if not loss.requires_grad:
        raise GradientError("The loss does not depend on any tensor requiring gradients")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(Tape.record(loss).nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue

        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue

        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


#
# Elementwise arithmetic
#


def _check_broadcast(a, b, opname):
    """Scalars and row vectors matching the last axis are the only broadcasts"""
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim == 1 and b.ndim == 2 and a.shape[0] == b.shape[1]:
        return
    if b.ndim == 1 and a.ndim == 2 and b.shape[0] == a.shape[1]:
        return
    raise DimensionError(f"Incompatible shapes in {opname}", a.shape, b.shape)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.sum(g)
    return np.sum(g, axis=0)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), _backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), _backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), _backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")

    def _backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _result(a.data / b.data, (a, b), _backward)


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = as_tensor(a)
    return _result(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0.0),))


#
# Linear algebra and shape manipulation
#


def matmul(a, b):
    """Matrix products of vectors and matrices (no batching)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError("matmul expects vectors or matrices", a.shape, b.shape)
    if a.shape[-1] != b.shape[0]:
        raise DimensionError("Inner dimensions of matmul differ", a.shape, b.shape)

    def _backward(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 1 and b.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        if a.ndim == 2 and b.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g * b.data, g * a.data

    return _result(a.data @ b.data, (a, b), _backward)


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError("dot expects two vectors of equal length", a.shape, b.shape)
    return matmul(a, b)


def transpose(a):
    a = as_tensor(a)
    return _result(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("Cannot reshape", a.shape, tuple(np.atleast_1d(shape)))
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, index):
    a = as_tensor(a)

    def _backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), _backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("Cannot concatenate an empty list of tensors")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("Incompatible shapes in concat", *[t.shape for t in tensors])

    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(out, tensors, _backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("Cannot stack an empty list of tensors")
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("Incompatible shapes in stack", *[t.shape for t in tensors])

    def _backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(out, tensors, _backward)


#
# Reductions
#


def sum_(a, axis=None):
    a = as_tensor(a)

    def _backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result(np.sum(a.data, axis=axis), (a,), _backward)


def mean(a, axis=None):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return div(sum_(a, axis=axis), float(count))


def amax(a, axis=None):
    """Maximum with the subgradient routed to the first maximal entry"""
    a = as_tensor(a)
    if a.size == 0:
        raise DimensionError("Cannot reduce an empty tensor", a.shape)

    if axis is None:
        flat = int(np.argmax(a.data))

        def _backward(g):
            full = np.zeros(a.data.size)
            full[flat] = g
            return (full.reshape(a.shape),)

        return _result(a.data.reshape(-1)[flat], (a,), _backward)

    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)

    def _backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, arg, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _result(np.take_along_axis(a.data, arg, axis=axis).squeeze(axis), (a,), _backward)


#
# Masking, normalization and losses
#


def _mask_array(mask, shape):
    if mask is None:
        return np.zeros(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise DimensionError("Mask does not match the masked values", mask.shape, shape)
    return mask


def masked_fill(a, mask, value):
    """Replace the entries where mask is True by a constant"""
    a = as_tensor(a)
    mask = _mask_array(mask, a.shape)
    return _result(np.where(mask, value, a.data), (a,), lambda g: (np.where(mask, 0.0, g),))


def masked_softmax(a, mask=None):
    """Softmax over the last axis, entries where mask is True get probability zero

    :raises TensorError: if all entries of a row are masked.
    """
    a = as_tensor(a)
    if a.ndim not in (1, 2):
        raise DimensionError("softmax expects a vector or a matrix", a.shape)
    mask = _mask_array(mask, a.shape)
    if np.any(np.all(mask, axis=-1)):
        raise TensorError("Cannot normalize over entries that are all masked")

    shifted = np.where(mask, -np.inf, a.data)
    shifted = shifted - np.max(shifted, axis=-1, keepdims=True)
    e = np.where(mask, 0.0, np.exp(shifted))
    p = e / np.sum(e, axis=-1, keepdims=True)

    def _backward(g):
        return (p * (g - np.sum(g * p, axis=-1, keepdims=True)),)

    return _result(p, (a,), _backward)


def softmax(a):
    return masked_softmax(a)


def log_softmax(a):
    a = as_tensor(a)
    if a.ndim != 1:
        raise DimensionError("log_softmax expects a vector", a.shape)
    shifted = a.data - np.max(a.data)
    lse = np.log(np.sum(np.exp(shifted)))
    out = shifted - lse
    p = np.exp(out)
    return _result(out, (a,), lambda g: (g - p * np.sum(g),))


def cross_entropy(logits, target):
    """The negative log-likelihood of the target class under softmax(logits)"""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise DimensionError("cross_entropy expects a vector of logits", logits.shape)
    if not 0 <= target < logits.shape[0]:
        raise TensorError(
            f"Target index {target} out of range for {logits.shape[0]} classes"
        )
    return neg(log_softmax(logits)[int(target)])


def mse(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    diff = sub(pred, target)
    return mean(mul(diff, diff))


def cosine(a, b, eps=1e-12):
    """Cosine similarity of two vectors, eps keeps zero vectors finite"""
    a, b = as_tensor(a), as_tensor(b)
    return div(dot(a, b), sqrt(mul(dot(a, a), dot(b, b)) + eps))


#
# Parameters and layers
#


class Parameter(Tensor):
    def __init__(self, data, name=""):
        """A trainable tensor together with its ADAM state"""
        super().__init__(data, requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.adam_step = 0

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class for objects owning parameters

    Parameters and submodules are discovered from the instance attributes in
    definition order, which makes parameter names stable across runs.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            yield from _named(value, f"{prefix}{key}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _named(value, name):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _named(item, f"{name}.{i}")


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise DimensionError("Linear layer input", x.shape, (self.in_dim,))
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = add(out, self.bias)
        return out


class Embedding(Module):
    def __init__(self, num, dim, rng):
        self.num = num
        self.dim = dim
        self.weight = Parameter(uniform_init(rng, (num, dim), dim))

    def __call__(self, ids):
        return getitem(self.weight, np.asarray(ids, dtype=np.int64))


class LSTMCell(Module):
    def __init__(self, input_dim, hidden_dim, rng):
        """A standard LSTM cell with gates in the order input, forget, candidate, output"""
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight = Parameter(
            uniform_init(rng, (input_dim + hidden_dim, 4 * hidden_dim), input_dim + hidden_dim)
        )
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim : 2 * hidden_dim] = 1.0
        self.bias = Parameter(bias)

    def initial_state(self):
        return Tensor(np.zeros(self.hidden_dim)), Tensor(np.zeros(self.hidden_dim))

    def __call__(self, x, state=None):
        x = as_tensor(x)
        if x.shape != (self.input_dim,):
            raise DimensionError("LSTM input", x.shape, (self.input_dim,))
        h_prev, c_prev = state if state is not None else self.initial_state()
        if h_prev.shape != (self.hidden_dim,) or c_prev.shape != (self.hidden_dim,):
            raise DimensionError("LSTM state", h_prev.shape, (self.hidden_dim,))

        H = self.hidden_dim
        gates = matmul(concat([x, h_prev]), self.weight) + self.bias
        i = sigmoid(gates[0:H])
        f = sigmoid(gates[H : 2 * H])
        g = tanh(gates[2 * H : 3 * H])
        o = sigmoid(gates[3 * H : 4 * H])
        c = f * c_prev + i * g
        h = o * tanh(c)
        return h, c


#
# Optimization
#


def adam_step(params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected ADAM update and clear the gradients

    Parameters without gradient are left untouched.
    """
    for p in params:
        if p.grad is None:
            continue
        p.adam_step += 1
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * p.grad
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * p.grad * p.grad
        m_hat = p.adam_m / (1.0 - beta1**p.adam_step)
        v_hat = p.adam_v / (1.0 - beta2**p.adam_step)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def numerical_gradient(f, array, eps=1e-5):
    """Central finite differences of a scalar function w.r.t. a numpy array

    The array is perturbed in place and restored afterwards.
    """
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        orig = array[idx]
        array[idx] = orig + eps
        plus = float(f())
        array[idx] = orig - eps
        minus = float(f())
        array[idx] = orig
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


#
# Checkpoint container
#


def save_checkpoint(filename, named_params, header):
    """Write parameters, their ADAM state and a JSON header to an npz container

    :param named_params:
        An iterable of (name, Parameter) tuples
    :param header:
        A JSON-serializable dictionary, e.g. model hyperparameters
    """
    arrays = {}
    for name, p in named_params:
        arrays[f"param:{name}"] = np.asarray(p.data, dtype="<f8")
        arrays[f"adam_m:{name}"] = np.asarray(p.adam_m, dtype="<f8")
        arrays[f"adam_v:{name}"] = np.asarray(p.adam_v, dtype="<f8")
        arrays[f"adam_step:{name}"] = np.asarray(p.adam_step, dtype="<i8")

    header = dict(header, format_version=CHECKPOINT_FORMAT_VERSION)
    arrays["__header__"] = np.array(json.dumps(header, sort_keys=True))

    with open(filename, "wb") as f:
        np.savez(f, **arrays)
    logger.debug(f"Wrote checkpoint {filename} with {len(arrays) // 4} parameters")
    return filename


def load_checkpoint(filename):
    """Read a checkpoint written by :func:`save_checkpoint`

    :returns:
        A tuple of the header dictionary and a dictionary mapping parameter
        names to (data, adam_m, adam_v, adam_step).
    """
    try:
        with np.load(filename, allow_pickle=False) as archive:
            header = json.loads(str(archive["__header__"]))
            state = {}
            for key in archive.files:
                if not key.startswith("param:"):
                    continue
                name = key[len("param:") :]
                state[name] = (
                    archive[key].astype(np.float64),
                    archive[f"adam_m:{name}"].astype(np.float64),
                    archive[f"adam_v:{name}"].astype(np.float64),
                    int(archive[f"adam_step:{name}"]),
                )
    except (OSError, KeyError, ValueError) as e:
        raise CheckpointError(f"Cannot read checkpoint {filename}: {e}")

    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint format version {header.get('format_version')}"
        )
    return header, state


def restore_parameters(named_params, state):
    """Copy a checkpoint state into existing parameters"""
    named_params = list(named_params)
    missing = [name for name, _ in named_params if name not in state]
    if missing:
        raise CheckpointError(f"Checkpoint lacks parameters: {', '.join(missing)}")

    for name, p in named_params:
        data, m, v, step = state[name]
        if data.shape != p.shape:
            raise CheckpointError(
                f"Shape of parameter {name} differs: {data.shape} vs. {p.shape}"
            )
        p.data = data.copy()
        p.adam_m = m.copy()
        p.adam_v = v.copy()
        p.adam_step = step
        p.grad = None
