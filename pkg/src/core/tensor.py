# -*- coding: utf-8 -*-

"""
Reverse-mode automatic differentiation over dense float64 arrays.

Every primitive is a Function subclass with a forward pass over numpy
arrays and a backward pass returning one adjoint per input. Applying a
Function to tensors that require gradients links the result to the
Function instance; Tape.record walks those links back from a loss and
Tape.replay runs the adjoints in reverse execution order.

Implicit broadcasting is limited to scalar (shape ()) operands; anything
else has to go through broadcast_to explicitly.
"""

import logging
import threading
from contextlib import contextmanager
from itertools import product

import numpy as np

from constants import NORM_EPS
from errors import DomainError, ShapeError

logger = logging.getLogger(__name__)

_grad_mode = threading.local()


def grad_enabled():
    """True unless inside a no_grad block on this thread."""
    return getattr(_grad_mode, 'enabled', True)


@contextmanager
def no_grad():
    """Run a block without recording operations."""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _normalize_axes(axes, shape):
    if axes is None:
        axes = tuple(range(len(shape)))
    elif isinstance(axes, int):
        axes = (axes,)
    axes = tuple(sorted(axis % len(shape) for axis in axes)) if shape else ()
    if not axes and shape:
        raise ShapeError('Reduction over an empty axis list')
    for axis in axes:
        if shape[axis] == 0:
            raise ShapeError('Reduction over empty axis {0} of shape {1}'
                             .format(axis, shape))
    return axes


def _unbroadcast(grad, shape):
    """Sum a gradient back down to 'shape' (numpy broadcasting rules)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_pair(name, a, b):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError('{0}: shape mismatch {1} vs {2}'.format(
            name, a.shape, b.shape))


class Function(object):

    """
    Base class of a recorded primitive.
    """

    def __init__(self, *inputs):
        self.inputs = inputs

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        """Return one adjoint per input (None for no contribution)."""
        raise NotImplementedError

    def needs_grad(self, index):
        return self.inputs[index].requires_grad

    @classmethod
    def apply(cls, *inputs, **kwargs):
        inputs = tuple(as_tensor(t) for t in inputs)
        func = cls(*inputs)
        data = func.forward(*(t.data for t in inputs), **kwargs)

        if grad_enabled() and any(t.requires_grad for t in inputs):
            return Tensor(data, requires_grad=True, node=func)
        return Tensor(data)


class Tensor(object):

    """
    Dense float64 array taking part in a differentiation graph.

    'node' is the Function that produced the tensor (None for leaves);
    'grad' is populated on leaves that require gradients by backward().
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, node=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.node = node

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
    def is_leaf(self):
        return self.node is None

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        """Same values, cut from the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return 'Tensor(shape={0}, requires_grad={1})'.format(
            self.shape, self.requires_grad)

    # -- Arithmetic --
    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, other):
        return Pow.apply(self, other)

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    # -- Unary --
    def relu(self):
        return Relu.apply(self)

    def sigmoid(self):
        return Sigmoid.apply(self)

    def tanh(self):
        return Tanh.apply(self)

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    def sqrt(self):
        return Sqrt.apply(self)

    def abs(self):
        return Abs.apply(self)

    def clamp(self, low=None, high=None):
        return Clamp.apply(self, low=low, high=high)

    # -- Reductions --
    def sum(self, axes=None, keepdims=False):
        return Sum.apply(self, axes=axes, keepdims=keepdims)

    def mean(self, axes=None, keepdims=False):
        return Mean.apply(self, axes=axes, keepdims=keepdims)

    def max(self, axes=None, keepdims=False):
        return Max.apply(self, axes=axes, keepdims=keepdims)

    # -- Shape --
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *perm):
        if not perm:
            perm = tuple(reversed(range(self.ndim)))
        elif len(perm) == 1 and isinstance(perm[0], (tuple, list)):
            perm = tuple(perm[0])
        return Transpose.apply(self, perm=perm)

    @property
    def T(self):
        return self.transpose()

    def broadcast_to(self, shape):
        return BroadcastTo.apply(self, shape=tuple(shape))

    def backward(self):
        backward(self)


class Tape(object):

    """
    Ordered record of the primitives a tensor was computed from. Entries
    run in execution order: each tensor comes after all of its inputs.
    """

    def __init__(self, entries):
        self.entries = entries

    @classmethod
    def record(cls, root):
        """Collect every tensor reachable from 'root' that needs a gradient."""
        order = []
        visited = set()
        stack = [(root, False)]

        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))

            if tensor.node is not None:
                for parent in tensor.node.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        return cls(order)

    def __len__(self):
        return len(self.entries)

    def replay(self, root, seed):
        """Propagate 'seed' (dL/droot) back to every leaf on the tape."""
        grads = {id(root): seed}

        for tensor in reversed(self.entries):
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue

            if tensor.node is None:
                if tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64)
                else:
                    tensor.grad = tensor.grad + grad
                continue

            func = tensor.node
            for parent, adjoint in zip(func.inputs, func.backward(grad)):
                if adjoint is None or not parent.requires_grad:
                    continue
                assert adjoint.shape == parent.shape, (
                    type(func).__name__, adjoint.shape, parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + adjoint
                else:
                    grads[key] = adjoint


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every leaf that requires gradients."""
    if loss.shape != ():
        raise ShapeError('backward needs a scalar loss, got shape {0}'
                         .format(loss.shape))
    if not loss.requires_grad:
        return
    Tape.record(loss).replay(loss, np.ones(()))


# -- Elementwise --

class Add(Function):
    def forward(self, a, b):
        _check_pair('add', a, b)
        return a + b

    def backward(self, grad):
        return (_unbroadcast(grad, self.inputs[0].shape),
                _unbroadcast(grad, self.inputs[1].shape))


class Sub(Function):
    def forward(self, a, b):
        _check_pair('sub', a, b)
        return a - b

    def backward(self, grad):
        return (_unbroadcast(grad, self.inputs[0].shape),
                _unbroadcast(-grad, self.inputs[1].shape))


class Mul(Function):
    def forward(self, a, b):
        _check_pair('mul', a, b)
        return a * b

    def backward(self, grad):
        a, b = self.inputs[0].data, self.inputs[1].data
        return (_unbroadcast(grad * b, a.shape),
                _unbroadcast(grad * a, b.shape))


class Div(Function):
    def forward(self, a, b):
        _check_pair('div', a, b)
        return a / b

    def backward(self, grad):
        a, b = self.inputs[0].data, self.inputs[1].data
        grad_b = None
        if self.needs_grad(1):
            grad_b = _unbroadcast(-grad * a / (b * b), b.shape)
        return _unbroadcast(grad / b, a.shape), grad_b


class Pow(Function):
    def forward(self, a, b):
        _check_pair('power', a, b)
        fractional = np.broadcast_to(b != np.round(b),
                                     np.broadcast(a, b).shape)
        if np.any((np.broadcast_to(a, fractional.shape) < 0) & fractional):
            raise DomainError('power: negative base with fractional exponent')
        self.out = a ** b
        return self.out

    def backward(self, grad):
        a, b = self.inputs[0].data, self.inputs[1].data
        grad_a = _unbroadcast(grad * b * a ** (b - 1), a.shape)
        grad_b = None
        if self.needs_grad(1):
            safe = np.where(a > 0, a, 1.)
            local = np.where(a > 0, self.out * np.log(safe), 0.)
            grad_b = _unbroadcast(grad * local, b.shape)
        return grad_a, grad_b


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Relu(Function):
    def forward(self, a):
        return np.maximum(a, 0.)

    def backward(self, grad):
        return (grad * (self.inputs[0].data > 0),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = 0.5 * (1. + np.tanh(0.5 * a))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1. - self.out),)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1. - self.out ** 2),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        if np.any(a < 0):
            raise DomainError('log of negative input (min {0})'.format(
                a.min()))
        with np.errstate(divide='ignore'):
            return np.log(a)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Sqrt(Function):
    def forward(self, a):
        if np.any(a < 0):
            raise DomainError('sqrt of negative input (min {0})'.format(
                a.min()))
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad * 0.5 / self.out,)


class Abs(Function):
    def forward(self, a):
        return np.abs(a)

    def backward(self, grad):
        return (grad * np.sign(self.inputs[0].data),)


class Clamp(Function):
    def forward(self, a, low=None, high=None):
        self.low = -np.inf if low is None else low
        self.high = np.inf if high is None else high
        return np.clip(a, self.low, self.high)

    def backward(self, grad):
        a = self.inputs[0].data
        return (grad * ((a >= self.low) & (a <= self.high)),)


ELEMENTWISE = {
    'add': Add, 'sub': Sub, 'mul': Mul, 'div': Div, 'power': Pow,
    'neg': Neg, 'relu': Relu, 'sigmoid': Sigmoid, 'tanh': Tanh,
    'exp': Exp, 'log': Log, 'sqrt': Sqrt, 'abs': Abs,
}


def elementwise(kind, a, b=None):
    """Apply the elementwise primitive named 'kind'."""
    try:
        func = ELEMENTWISE[kind]
    except KeyError:
        raise ValueError('Unknown elementwise op: {0}'.format(kind))
    if b is None:
        return func.apply(a)
    return func.apply(a, b)


# -- Linear algebra --

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError('matmul: cannot multiply {0} by {1}'.format(
                a.shape, b.shape))
        return a.dot(b)

    def backward(self, grad):
        a, b = self.inputs[0].data, self.inputs[1].data
        grad_b = a.T.dot(grad) if self.needs_grad(1) else None
        grad_a = grad.dot(b.T) if self.needs_grad(0) else None
        return grad_a, grad_b


def matmul(a, b):
    return MatMul.apply(a, b)


# -- Reductions --

class Sum(Function):
    def forward(self, a, axes=None, keepdims=False):
        self.axes = _normalize_axes(axes, a.shape)
        return a.sum(axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        shape = self.inputs[0].shape
        kept = [1 if axis in self.axes else size
                for axis, size in enumerate(shape)]
        return (np.broadcast_to(grad.reshape(kept), shape).copy(),)


class Mean(Sum):
    def forward(self, a, axes=None, keepdims=False):
        out = Sum.forward(self, a, axes, keepdims)
        self.count = int(np.prod([a.shape[axis] for axis in self.axes]))
        return out / self.count

    def backward(self, grad):
        return (Sum.backward(self, grad)[0] / self.count,)


class Max(Function):
    """Maximum; the gradient goes to the first arg-max only."""
    def forward(self, a, axes=None, keepdims=False):
        self.axes = _normalize_axes(axes, a.shape)
        keep = [axis for axis in range(a.ndim) if axis not in self.axes]
        self.perm = keep + list(self.axes)
        moved = a.transpose(self.perm)
        self.moved_shape = moved.shape
        flat = moved.reshape(moved.shape[:len(keep)] + (-1,))
        self.flat_shape = flat.shape
        self.index = np.argmax(flat, axis=-1)[..., None]
        out = np.take_along_axis(flat, self.index, axis=-1)[..., 0]
        if keepdims:
            out = out.reshape([1 if axis in self.axes else size
                               for axis, size in enumerate(a.shape)])
        return out

    def backward(self, grad):
        flat = np.zeros(self.flat_shape)
        values = grad.reshape(self.flat_shape[:-1])[..., None]
        np.put_along_axis(flat, self.index, values, axis=-1)
        moved = flat.reshape(self.moved_shape)
        return (moved.transpose(np.argsort(self.perm)),)


REDUCTIONS = {'sum': Sum, 'mean': Mean, 'max': Max}


def reduce(kind, x, axes=None, keepdims=False):
    """Reduce 'x' over 'axes' (all axes when None)."""
    return REDUCTIONS[kind].apply(x, axes=axes, keepdims=keepdims)


# -- Shape manipulation --

class Reshape(Function):
    def forward(self, a, shape=None):
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(self, a, perm=None):
        self.perm = perm
        return a.transpose(perm)

    def backward(self, grad):
        return (grad.transpose(np.argsort(self.perm)),)


class GetItem(Function):
    def forward(self, a, index=None):
        self.index = index
        return np.array(a[index])

    def backward(self, grad):
        out = np.zeros(self.inputs[0].shape)
        np.add.at(out, self.index, grad)
        return (out,)


class BroadcastTo(Function):
    def forward(self, a, shape=None):
        return np.broadcast_to(a, shape).copy()

    def backward(self, grad):
        return (_unbroadcast(grad, self.inputs[0].shape),)


class Concat(Function):
    def forward(self, *arrays, **kwargs):
        self.axis = kwargs.get('axis', 0)
        self.sizes = [array.shape[self.axis] for array in arrays]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


# -- Normalization --

class Softmax(Function):
    def forward(self, a, axis=-1):
        self.axis = axis
        shifted = np.exp(a - a.max(axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        dot = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - dot),)


class L2Normalize(Function):
    """Unit Euclidean norm along 'axis'; rows with norm < eps pass through."""
    def forward(self, a, axis=-1):
        self.axis = axis
        self.norm = np.sqrt((a * a).sum(axis=axis, keepdims=True))
        self.dead = self.norm < NORM_EPS
        self.out = np.where(self.dead, a, a / np.where(self.dead, 1.,
                                                       self.norm))
        return self.out

    def backward(self, grad):
        dot = (grad * self.out).sum(axis=self.axis, keepdims=True)
        norm = np.where(self.dead, 1., self.norm)
        return (np.where(self.dead, grad, (grad - self.out * dot) / norm),)


def softmax(x, axis=-1):
    return Softmax.apply(x, axis=axis)


def l2_normalize(x, axis=-1):
    return L2Normalize.apply(x, axis=axis)


# -- Volumetric --

class Conv3d(Function):

    """
    3D cross-correlation of x (Cin, W, H, D) with kernels
    (Cout, Cin, k, k, k). Accumulates one tensordot per kernel offset.
    """

    def forward(self, x, w, stride=1, padding=0):
        if x.ndim != 4 or w.ndim != 5 or w.shape[1] != x.shape[0]:
            raise ShapeError('conv3d: input {0} incompatible with kernels {1}'
                             .format(x.shape, w.shape))
        size = w.shape[2]
        if w.shape[2:] != (size,) * 3 or size % 2 == 0:
            raise ShapeError('conv3d: kernels must be odd cubes, got {0}'
                             .format(w.shape[2:]))
        if padding < 0 or stride < 1:
            raise ShapeError('conv3d: invalid padding/stride')

        self.out_dims = tuple((dim + 2 * padding - size) // stride + 1
                              for dim in x.shape[1:])
        if min(self.out_dims) <= 0:
            raise ShapeError('conv3d: non-positive output dims {0}'.format(
                self.out_dims))

        self.size, self.stride, self.padding = size, stride, padding
        pad = ((0, 0),) + ((padding, padding),) * 3
        self.padded = np.pad(x, pad) if padding else x

        out = np.zeros((w.shape[0],) + self.out_dims)
        for offset in product(range(size), repeat=3):
            patch = self.padded[self._window(offset)]
            out += np.tensordot(w[(slice(None), slice(None)) + offset],
                                patch, axes=(1, 0))
        return out

    def _window(self, offset):
        return (slice(None),) + tuple(
            slice(start, start + self.stride * (dim - 1) + 1, self.stride)
            for start, dim in zip(offset, self.out_dims))

    def backward(self, grad):
        w = self.inputs[1].data
        grad_padded = np.zeros_like(self.padded)
        grad_w = np.zeros_like(w)

        for offset in product(range(self.size), repeat=3):
            window = self._window(offset)
            kernel = (slice(None), slice(None)) + offset
            grad_w[kernel] = np.tensordot(grad, self.padded[window],
                                          axes=([1, 2, 3], [1, 2, 3]))
            grad_padded[window] += np.tensordot(w[kernel], grad,
                                                axes=(0, 0))

        pad = self.padding
        if pad:
            grad_padded = grad_padded[:, pad:-pad, pad:-pad, pad:-pad]
        return grad_padded, grad_w


def conv3d(x, kernels, stride=1, padding=0):
    return Conv3d.apply(x, kernels, stride=stride, padding=padding)


def _check_divisible(name, shape, factor):
    if len(shape) != 4 or any(dim % factor for dim in shape[1:]):
        raise ShapeError('{0}: dims {1} not divisible by {2}'.format(
            name, shape[1:], factor))


class MaxPool3d(Function):
    def forward(self, x, factor=2):
        _check_divisible('pool3d', x.shape, factor)
        chans, width, height, depth = x.shape
        blocks = x.reshape(chans, width // factor, factor,
                           height // factor, factor, depth // factor, factor)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4, 6)
        self.block_shape = blocks.shape
        blocks = blocks.reshape(blocks.shape[:4] + (-1,))
        self.index = np.argmax(blocks, axis=-1)[..., None]
        return np.take_along_axis(blocks, self.index, axis=-1)[..., 0]

    def backward(self, grad):
        blocks = np.zeros(self.block_shape[:4] +
                          (int(np.prod(self.block_shape[4:])),))
        np.put_along_axis(blocks, self.index, grad[..., None], axis=-1)
        blocks = blocks.reshape(self.block_shape).transpose(0, 1, 4, 2, 5,
                                                            3, 6)
        return (blocks.reshape(self.inputs[0].shape),)


class Upsample3d(Function):
    """Nearest-neighbour upsampling."""
    def forward(self, x, factor=2):
        if x.ndim != 4:
            raise ShapeError('upsample3d: expected (C, W, H, D), got {0}'
                             .format(x.shape))
        self.factor = factor
        return x.repeat(factor, 1).repeat(factor, 2).repeat(factor, 3)

    def backward(self, grad):
        chans, width, height, depth = self.inputs[0].shape
        factor = self.factor
        grad = grad.reshape(chans, width, factor, height, factor, depth,
                            factor)
        return (grad.sum(axis=(2, 4, 6)),)


def pool3d(x, factor=2):
    return MaxPool3d.apply(x, factor=factor)


def upsample3d(x, factor=2):
    return Upsample3d.apply(x, factor=factor)
