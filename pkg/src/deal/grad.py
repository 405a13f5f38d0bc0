"""Reverse-mode differentiation over a fixed set of matrix primitives.

Every op returns a :class:`Node` that records its inputs, so evaluating a loss
builds the tape. ``backward`` walks the graph in reverse topological order and
looks each op's adjoint up in ``ADJOINTS``; an op without a registered adjoint
raises :class:`UnregisteredPrimitive`. All values are 2-D float64 arrays.

Typical use::

    params = ParamSet()
    params.add("w", np.eye(3), tag="theta2")
    grads = grad_of(lambda p: mse(matmul(p["w"], x), y), params)
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import ShapeMismatch, UnregisteredPrimitive

TAGS = ("theta1", "theta2", "adapter")


class Node:
    __slots__ = ("value", "op", "parents", "attrs", "grad", "requires_grad", "name")

    def __init__(self, value, op="const", parents=(), attrs=None, requires_grad=False, name=None):
        self.value = value
        self.op = op
        self.parents = parents
        self.attrs = attrs or {}
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def const(x) -> Node:
    if isinstance(x, Node):
        return x
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    return Node(v)


def leaf(x, name=None) -> Node:
    v = np.array(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    return Node(v, op="leaf", requires_grad=True, name=name)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(op, value, parents, **attrs) -> Node:
    return Node(value, op=op, parents=tuple(parents), attrs=attrs)


# ---- primitives -----------------------------------------------------------

def matmul(a, b) -> Node:
    a, b = const(a), const(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatch(f"matmul: {a.value.shape} @ {b.value.shape}")
    return _make("matmul", a.value @ b.value, (a, b))


def add(a, b) -> Node:
    a, b = const(a), const(b)
    return _make("add", a.value + b.value, (a, b))


def sub(a, b) -> Node:
    a, b = const(a), const(b)
    return _make("sub", a.value - b.value, (a, b))


def mul(a, b) -> Node:
    a, b = const(a), const(b)
    return _make("mul", a.value * b.value, (a, b))


def scale(a, k: float) -> Node:
    a = const(a)
    return _make("scale", a.value * k, (a,), k=float(k))


def exp(a) -> Node:
    a = const(a)
    return _make("exp", np.exp(a.value), (a,))


def tanh(a) -> Node:
    a = const(a)
    return _make("tanh", np.tanh(a.value), (a,))


def identity(a) -> Node:
    a = const(a)
    return _make("identity", a.value, (a,))


def clip(a, lo: float, hi: float) -> Node:
    a = const(a)
    return _make("clip", np.clip(a.value, lo, hi), (a,), lo=lo, hi=hi)


def transpose(a) -> Node:
    a = const(a)
    return _make("transpose", a.value.T, (a,))


def take_cols(a, idx) -> Node:
    a = const(a)
    idx = np.asarray(idx, dtype=np.intp)
    return _make("take_cols", a.value[:, idx], (a,), idx=idx)


def sum_all(a) -> Node:
    a = const(a)
    return _make("sum_all", np.array([[a.value.sum()]]), (a,))


def mse(pred, target) -> Node:
    pred, target = const(pred), const(target)
    if pred.value.shape != target.value.shape:
        raise ShapeMismatch(f"mse: {pred.value.shape} vs {target.value.shape}")
    d = pred.value - target.value
    return _make("mse", np.array([[np.mean(d * d)]]), (pred, target))


def pnorm_pow(a, p: float) -> Node:
    """Sum of ``|a|**p`` over all entries."""
    from .numerics import p_norm_pow

    a = const(a)
    return _make("pnorm_pow", np.array([[p_norm_pow(a.value, p)]]), (a,), p=float(p))


ACTIVATIONS: dict[str, Callable[[Node], Node]] = {"tanh": tanh, "identity": identity}


# ---- adjoints -------------------------------------------------------------
# Each rule maps (upstream grad, node) to one gradient per parent.

def _adj_matmul(g, node):
    a, b = node.parents
    return g @ b.value.T, a.value.T @ g


def _adj_add(g, node):
    a, b = node.parents
    return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)


def _adj_sub(g, node):
    a, b = node.parents
    return _unbroadcast(g, a.value.shape), -_unbroadcast(g, b.value.shape)


def _adj_mul(g, node):
    a, b = node.parents
    return _unbroadcast(g * b.value, a.value.shape), _unbroadcast(g * a.value, b.value.shape)


def _adj_pnorm(g, node):
    (a,) = node.parents
    p = node.attrs["p"]
    x = a.value
    if p == 1:
        d = np.sign(x)
    elif p == 2:
        d = 2.0 * x
    else:
        # |x|^(p-1) sign(x); defined as 0 at x = 0
        d = p * np.abs(x) ** (p - 1) * np.sign(x)
    return (g[0, 0] * d,)


def _adj_clip(g, node):
    (a,) = node.parents
    lo, hi = node.attrs["lo"], node.attrs["hi"]
    inside = (a.value >= lo) & (a.value <= hi)
    return (g * inside,)


def _adj_take_cols(g, node):
    (a,) = node.parents
    out = np.zeros_like(a.value)
    np.add.at(out, (slice(None), node.attrs["idx"]), g)
    return (out,)


def _adj_mse(g, node):
    pred, target = node.parents
    d = pred.value - target.value
    gp = g[0, 0] * 2.0 * d / d.size
    return gp, -gp


ADJOINTS: dict[str, Callable] = {
    "matmul": _adj_matmul,
    "add": _adj_add,
    "sub": _adj_sub,
    "mul": _adj_mul,
    "scale": lambda g, n: (g * n.attrs["k"],),
    "exp": lambda g, n: (g * n.value,),
    "tanh": lambda g, n: (g * (1.0 - n.value * n.value),),
    "identity": lambda g, n: (g,),
    "clip": _adj_clip,
    "transpose": lambda g, n: (g.T,),
    "take_cols": _adj_take_cols,
    "sum_all": lambda g, n: (np.full(n.parents[0].value.shape, g[0, 0]),),
    "mse": _adj_mse,
    "pnorm_pow": _adj_pnorm,
}


def _topo(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node."""
    if root.value.shape != (1, 1):
        raise ShapeMismatch(f"backward needs a scalar (1x1) root, got {root.value.shape}")
    order = _topo(root)
    for n in order:
        n.grad = None
    root.grad = np.ones((1, 1))
    for node in reversed(order):
        if node.grad is None or not node.parents:
            continue
        rule = ADJOINTS.get(node.op)
        if rule is None:
            raise UnregisteredPrimitive(f"no adjoint registered for op {node.op!r}")
        for parent, pg in zip(node.parents, rule(node.grad, node)):
            if not parent.requires_grad:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg


# ---- parameter containers -------------------------------------------------

@dataclass
class Param:
    value: np.ndarray
    tag: str


class ParamSet(Mapping[str, np.ndarray]):
    """Ordered, uniquely named matrices, each tagged with a regularization group."""

    def __init__(self):
        self._items: OrderedDict[str, Param] = OrderedDict()

    def add(self, name: str, value, tag: str) -> None:
        if name in self._items:
            raise ValueError(f"duplicate parameter name {name!r}")
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r}")
        v = np.array(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        self._items[name] = Param(v, tag)

    def __getitem__(self, name):
        return self._items[name].value

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def tag(self, name: str) -> str:
        return self._items[name].tag

    def names(self, tag: str | None = None) -> list[str]:
        return [k for k, p in self._items.items() if tag is None or p.tag == tag]

    def values(self, tag: str | None = None) -> list[np.ndarray]:
        return [self._items[k].value for k in self.names(tag)]

    def replace(self, new_values: Mapping[str, np.ndarray]) -> "ParamSet":
        out = ParamSet()
        for k, p in self._items.items():
            v = new_values.get(k, p.value)
            if v.shape != p.value.shape:
                raise ShapeMismatch(f"{k}: {v.shape} != {p.value.shape}")
            out.add(k, v, p.tag)
        return out

    def copy(self) -> "ParamSet":
        return self.replace({})

    def flat(self, tag: str | None = None) -> np.ndarray:
        vals = self.values(tag)
        return np.concatenate([v.ravel() for v in vals]) if vals else np.zeros(0)


LossFn = Callable[[Mapping[str, Node]], Node]


def evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    nodes = {k: const(np.asarray(v, dtype=np.float64)) for k, v in params.items()}
    return float(loss_fn(nodes).value[0, 0])


def grad_of(loss_fn: LossFn, params: ParamSet, *, return_loss: bool = False):
    """Exact reverse-mode gradient of a scalar loss w.r.t. every parameter."""
    leaves = {k: leaf(params[k], name=k) for k in params}
    out = loss_fn(leaves)
    backward(out)
    grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in leaves.items()}
    if return_loss:
        return grads, float(out.value[0, 0])
    return grads


def finite_diff(loss_fn, params: Mapping[str, np.ndarray], epsilon: float = 1e-5, *,
                arrays: bool = False) -> dict[str, np.ndarray]:
    """Central differences, one coordinate at a time.

    ``loss_fn`` is a graph loss by default; with ``arrays=True`` it is a plain
    function of the parameter arrays returning a float (no graph involved).
    """
    if not 1e-8 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-8, 1e-3]")
    if arrays:
        def evaluate(f, values):
            return float(f(values))
    else:
        evaluate = globals()["evaluate"]
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for k, v in base.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            orig = v[idx]
            v[idx] = orig + epsilon
            fp = evaluate(loss_fn, base)
            v[idx] = orig - epsilon
            fm = evaluate(loss_fn, base)
            v[idx] = orig
            g[idx] = (fp - fm) / (2.0 * epsilon)
        grads[k] = g
    return grads


def relative_error(analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray], floor: float = 1e-6,
                   *, scaled: bool = False):
    """Worst entrywise ``|a - n| / max(|a|, |n|, floor)`` and the parameter it occurs in.

    ``floor`` keeps gradients that vanish analytically (noise-level finite
    differences) from dominating the ratio. With ``scaled=True`` the floor is
    multiplied by ``max(1, largest |gradient entry|)``: central-difference
    round-off grows with the loss scale, so entries far below the largest
    component cannot be resolved at a fixed step.
    """
    if scaled:
        top = max((float(np.max(np.abs(v))) for v in analytic.values() if np.size(v)), default=0.0)
        floor = floor * max(1.0, top)
    worst, worst_name = 0.0, None
    for k in analytic:
        a, n = np.asarray(analytic[k]), np.asarray(numeric[k])
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
        if err > worst or worst_name is None:
            worst, worst_name = err, k
    return worst, worst_name
