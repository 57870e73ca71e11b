"""Small reverse-mode differentiation engine over numpy arrays.

Every :class:`DiffValue` wraps a float64 array (0-d for scalars) and records
the vector-Jacobian products needed to push adjoints back to its parents.
The engine covers exactly the operations the losses in this package use:
elementwise arithmetic with broadcasting, matrix products, reductions,
indexing, and a handful of transcendental functions.

>>> x = DiffValue(3.0)
>>> y = x * x
>>> backward_grad(y)
>>> float(x.grad)
6.0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    DeterminismError,
    InvalidInputError,
    NumericalError,
)

ARTANH_CLAMP = 1.0 - 1e-15


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class DiffValue:
    """Node of a differentiable computation graph.

    Parameters
    ----------
    value : array_like
        Numeric value, stored as float64.
    requires_grad : bool
        Leaves created directly are trainable by default; use
        :func:`constant` for data.
    name : str, optional
        Label used in error messages.
    """

    __array_priority__ = 1000

    __slots__ = ("value", "grad", "requires_grad", "op", "name", "_parents")

    def __init__(self, value, requires_grad=True, name=None, *, _op="leaf", _parents=()):
        with np.errstate(all="ignore"):
            value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            if _op in ("leaf", "const"):
                raise InvalidInputError(f"non-finite value in {name or _op}")
            raise NumericalError(f"non-finite value produced by '{_op}' node")
        self.value = value
        self.grad = np.zeros_like(value)
        self.requires_grad = requires_grad
        self.op = _op
        self.name = name
        self._parents = _parents

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"DiffValue({self.op}{label}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        return _node(
            self.value + other.value,
            "add",
            (self, lambda g: _unbroadcast(g, self.shape)),
            (other, lambda g: _unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return _node(
            self.value - other.value,
            "sub",
            (self, lambda g: _unbroadcast(g, self.shape)),
            (other, lambda g: _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.value, other.value
        return _node(
            a * b,
            "mul",
            (self, lambda g: _unbroadcast(g * b, self.shape)),
            (other, lambda g: _unbroadcast(g * a, other.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        a, b = self.value, other.value
        return _node(
            a / b,
            "div",
            (self, lambda g: _unbroadcast(g / b, self.shape)),
            (other, lambda g: _unbroadcast(-g * a / (b * b), other.shape)),
        )

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __neg__(self):
        return _node(-self.value, "neg", (self, lambda g: -g))

    def __pow__(self, exponent):
        if isinstance(exponent, DiffValue):
            raise ContractError("only constant exponents are supported")
        a = self.value
        return _node(a**exponent, "pow", (self, lambda g: g * exponent * a ** (exponent - 1)))

    def __matmul__(self, other):
        other = _lift(other)
        a, b = self.value, other.value
        if b.ndim != 2 or a.ndim not in (1, 2):
            raise ContractError("matmul supports (n,) or (B, n) times (n, m)")

        def grad_a(g):
            return g @ b.T

        def grad_b(g):
            if a.ndim == 1:
                return np.outer(a, g)
            return a.T @ g

        return _node(a @ b, "matmul", (self, grad_a), (other, grad_b))

    def __rmatmul__(self, other):
        return _lift(other) @ self

    # structure ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def grad(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return _node(self.value.sum(axis=axis, keepdims=keepdims), "sum", (self, grad))

    def mean(self, axis=None, keepdims=False):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        old = self.shape
        return _node(self.value.reshape(*shape), "reshape", (self, lambda g: g.reshape(old)))

    def __getitem__(self, index):
        shape = self.shape

        def grad(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return out

        return _node(self.value[index], "index", (self, grad))


def constant(value, name=None):
    """Wrap data that should not receive gradients."""
    if isinstance(value, DiffValue):
        return value
    return DiffValue(value, requires_grad=False, name=name, _op="const")


def _lift(x):
    return x if isinstance(x, DiffValue) else constant(x)


def _node(value, op, *parents):
    live = tuple((p, vjp) for p, vjp in parents if p.requires_grad)
    return DiffValue(value, requires_grad=bool(live), _op=op, _parents=live)


# elementwise functions ---------------------------------------------------


def exp(x):
    x = _lift(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.value)
    return _node(out, "exp", (x, lambda g: g * out))


def log(x):
    x = _lift(x)
    a = x.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a)
    return _node(out, "log", (x, lambda g: g / a))


def sqrt(x):
    x = _lift(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.value)
    return _node(out, "sqrt", (x, lambda g: g * 0.5 / out))


def tanh(x):
    x = _lift(x)
    out = np.tanh(x.value)
    return _node(out, "tanh", (x, lambda g: g * (1.0 - out * out)))


def arctanh(x):
    """Inverse hyperbolic tangent with the argument clamped inside (-1, 1)."""
    x = _lift(x)
    z = np.clip(x.value, -ARTANH_CLAMP, ARTANH_CLAMP)
    out = 0.5 * np.log((1.0 + z) / (1.0 - z))
    inside = np.abs(x.value) < ARTANH_CLAMP
    return _node(out, "arctanh", (x, lambda g: np.where(inside, g / (1.0 - z * z), 0.0)))


def relu(x):
    x = _lift(x)
    active = x.value > 0
    return _node(np.where(active, x.value, 0.0), "relu", (x, lambda g: g * active))


def sigmoid(x):
    x = _lift(x)
    out = _np_sigmoid(x.value)
    return _node(out, "sigmoid", (x, lambda g: g * out * (1.0 - out)))


def softplus(x):
    """``log(1 + exp(x))`` evaluated without overflow."""
    x = _lift(x)
    a = x.value
    out = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
    return _node(out, "softplus", (x, lambda g: g * _np_sigmoid(a)))


def clamp_min(x, lower):
    """Elementwise ``max(x, lower)`` for a constant ``lower``."""
    x = _lift(x)
    keep = x.value > lower
    return _node(np.where(keep, x.value, lower), "clamp_min", (x, lambda g: g * keep))


def minimum(x, upper):
    """Elementwise ``min(x, upper)`` for a constant ``upper``."""
    x = _lift(x)
    keep = x.value <= upper
    return _node(np.where(keep, x.value, upper), "minimum", (x, lambda g: g * keep))


def logsumexp(x, axis=-1, mask=None, keepdims=False):
    """Stable ``log(sum(mask * exp(x)))`` along ``axis``.

    Entries where ``mask`` is false are excluded; every reduced slice must
    keep at least one entry.
    """
    x = _lift(x)
    a = x.value
    if mask is None:
        mask = np.ones(a.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    if not np.all(mask.any(axis=axis)):
        raise ContractError("logsumexp over an empty masked slice")
    shift = np.max(np.where(mask, a, -np.inf), axis=axis, keepdims=True)
    e = np.where(mask, np.exp(np.where(mask, a - shift, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + shift
    weights = e / s

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * weights

    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return _node(out, "logsumexp", (x, grad))


def log_softmax(x, axis=-1):
    x = _lift(x)
    return x - logsumexp(x, axis=axis, keepdims=True)


def _np_sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def softmax(a, axis=-1):
    """Plain numpy softmax with max-subtraction (no graph)."""
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# graph evaluation --------------------------------------------------------


def forward_eval(root):
    """Return the value held at ``root`` (a float for scalar roots)."""
    if not np.all(np.isfinite(root.value)):
        raise NumericalError(f"non-finite value at '{root.op}' node")
    if root.value.ndim == 0:
        return float(root.value)
    return root.value.copy()


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward_grad(root):
    """Accumulate ``d root / d node`` into ``node.grad`` for every reachable node.

    Gradients add onto whatever is already stored, so two calls without a
    reset give twice the gradient.
    """
    if root.value.size != 1:
        raise ContractError(f"backward_grad needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    adjoints = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological_order(root)):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        for parent, vjp in node._parents:
            pg = vjp(g)
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + pg
            else:
                adjoints[key] = pg


# parameters and optimisation --------------------------------------------


@dataclass
class ParameterStore:
    """Named trainable tensors plus the SGD settings that update them."""

    params: dict = field(default_factory=dict)
    base_lr: float = 0.1
    milestones: list = field(default_factory=list)
    weight_decay: float = 5e-4
    momentum: float = 0.9
    frozen: set = field(default_factory=set)
    max_grad_norm: float = None
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        self.milestones = [(int(e), float(m)) for e, m in self.milestones]
        epochs = [e for e, _ in self.milestones]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ContractError(f"milestones must be strictly increasing, got {epochs}")
        if self.weight_decay < 0:
            raise ContractError("weight decay must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError("momentum must lie in [0, 1)")
        self.params = {k: self._wrap(k, v) for k, v in self.params.items()}

    @staticmethod
    def _wrap(name, value):
        if isinstance(value, DiffValue):
            value.name = name
            return value
        return DiffValue(value, name=name)

    def __getitem__(self, name):
        return self.params[name]

    def __setitem__(self, name, value):
        self.params[name] = self._wrap(name, value)
        self.velocity.pop(name, None)

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def lr_at(self, epoch):
        lr = self.base_lr
        for milestone, factor in self.milestones:
            if epoch >= milestone:
                lr *= factor
        return lr

    def zero_grad(self):
        for p in self.params.values():
            p.grad = np.zeros_like(p.value)

    def values(self):
        """Copy of every parameter value keyed by name."""
        return {k: p.value.copy() for k, p in self.params.items()}

    def copy(self):
        return ParameterStore(
            params={k: DiffValue(p.value.copy()) for k, p in self.params.items()},
            base_lr=self.base_lr,
            milestones=list(self.milestones),
            weight_decay=self.weight_decay,
            momentum=self.momentum,
            frozen=set(self.frozen),
            max_grad_norm=self.max_grad_norm,
        )


def sgd_step(params, epoch):
    """One SGD update with weight decay and heavy-ball momentum, then zero grads.

    Frozen parameters are skipped entirely.
    """
    lr = params.lr_at(epoch)
    live = [(name, p) for name, p in params.items() if name not in params.frozen]
    for name, p in live:
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient for parameter '{name}'")
    clip = 1.0
    if params.max_grad_norm is not None:
        total = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in live))
        if total > params.max_grad_norm:
            clip = params.max_grad_norm / total
    for name, p in live:
        step = clip * p.grad + params.weight_decay * p.value
        if params.momentum > 0:
            buf = params.velocity.get(name)
            buf = step if buf is None else params.momentum * buf + step
            params.velocity[name] = buf
            step = buf
        p.value = p.value - lr * step
    params.zero_grad()


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst <= self.tolerance


def finite_difference_check(loss_fn, params, step=1e-5, tolerance=1e-4, names=None):
    """Compare analytic gradients of ``loss_fn(params)`` with central differences.

    The relative error for each scalar entry uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``; the report keeps the maximum per
    parameter tensor.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    names = list(params) if names is None else list(names)
    params.zero_grad()
    loss = loss_fn(params)
    again = forward_eval(loss_fn(params))
    if forward_eval(loss) != again:
        raise DeterminismError("loss function returned different values for identical inputs")
    backward_grad(loss)
    report = {}
    for name in names:
        p = params[name]
        analytic = p.grad.copy()
        worst = 0.0
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = forward_eval(loss_fn(params))
            flat[i] = orig - step
            down = forward_eval(loss_fn(params))
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    params.zero_grad()
    return GradCheckReport(report, tolerance)
