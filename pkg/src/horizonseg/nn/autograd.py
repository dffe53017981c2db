""" Tape-based reverse-mode differentiation over numpy arrays.

Every operation on tensors that require gradients records its parents and a backward closure;
the recorded graph is the tape. :meth:`Tensor.backward` walks it once in reverse topological
order and then releases it, so a second backward without a fresh forward is an error.
"""
import numpy as np


class Tensor:
    __slots__ = ('data', 'grad', 'requires_grad', '_parents', '_backward', '_consumed', 'name')

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    def __repr__(self):
        return f'Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})'

    # -------------------------------------------------------------- arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(-self, other)

    def sum(self):
        return tensor_sum(self)

    def reshape(self, *shape):
        return reshape(self, *shape)

    # -------------------------------------------------------------- backward
    def backward(self, grad=None):
        if self._consumed:
            raise RuntimeError('backward already ran through this graph; run the forward pass again')
        if grad is None:
            if self.data.size != 1:
                raise ValueError('grad must be given for non-scalar outputs')
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        for node in order:
            if not node.is_leaf:
                node._consumed = True
                node._backward = None
                node._parents = ()


def _topological_order(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        if node._consumed:
            raise RuntimeError('graph contains nodes released by an earlier backward pass')
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def record(data, parents, backward):
    """ Wrap an op result, recording it on the tape only if some parent needs gradients. """
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return record(a.data + b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return record(a.data * b.data, (a, b), backward)


def tensor_sum(a):
    def backward(g):
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)
    return record(a.data.sum(), (a,), backward)


def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], tuple):
        shape = shape[0]

    def backward(g):
        return (g.reshape(a.shape),)
    return record(a.data.reshape(shape), (a,), backward)
