"""A small reverse-mode computation graph with CT operators as nodes.

Projector nodes register their counterpart as the gradient: the gradient of
a forward projection is the back projection of the upstream gradient, and
vice versa. Because the pair is unmatched this is an approximation of the
true gradient, used on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .filtering import apply_filter, filter_weight_gradient
from .projector import backproject, forward_project


class DivergenceError(FloatingPointError):
    """Raised when a loss or gradient becomes NaN or infinite."""


def tv_loss(image) -> float:
    """Anisotropic total variation: summed absolute neighbour differences along every axis."""
    x = np.asarray(image, dtype=float)
    return float(sum(np.abs(np.diff(x, axis=a)).sum() for a in range(x.ndim)))


def tv_gradient(image) -> np.ndarray:
    """Subgradient of :func:`tv_loss`, taking ``sign(0) = 0``."""
    x = np.asarray(image, dtype=float)
    grad = np.zeros_like(x)
    for a in range(x.ndim):
        s = np.sign(np.diff(x, axis=a))
        lead = [slice(None)] * x.ndim
        trail = [slice(None)] * x.ndim
        lead[a] = slice(None, -1)
        trail[a] = slice(1, None)
        grad[tuple(lead)] -= s
        grad[tuple(trail)] += s
    return grad


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting by summing over the broadcast axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


@dataclass(eq=False)
class Node:
    id: str
    op: str
    inputs: tuple[str, ...] = ()
    attrs: dict = field(default_factory=dict)
    value: np.ndarray | None = None
    grad: np.ndarray | None = None
    trainable: bool = False

    def __repr__(self):
        return f"Node({self.id!r}, op={self.op!r}, inputs={self.inputs})"


NodeRef = Node | str


class Graph:
    """Directed acyclic graph built by appending nodes.

    A node can only consume nodes that already exist, so insertion order is a
    valid topological order.

    >>> g = Graph()
    >>> x = g.input("x")
    >>> w = g.parameter("w", np.array([2.0]))
    >>> y = g.multiply_weights(x, w)
    >>> g.forward({"x": np.array([3.0])})[y.id]
    array([6.])
    """

    def __init__(self):
        self.nodes: dict[str, Node] = {}

    def _id(self, ref: NodeRef) -> str:
        node_id = ref.id if isinstance(ref, Node) else ref
        if node_id not in self.nodes:
            raise KeyError(f"unknown node {node_id!r}")
        return node_id

    def _add(self, op: str, inputs=(), name: str | None = None, **attrs) -> Node:
        name = name or f"{op}_{len(self.nodes)}"
        if name in self.nodes:
            raise ValueError(f"duplicate node id {name!r}")
        node = Node(name, op, tuple(self._id(i) for i in inputs), attrs)
        self.nodes[name] = node
        return node

    def __getitem__(self, node_id: str) -> Node:
        return self.nodes[node_id]

    @property
    def order(self) -> list[Node]:
        return list(self.nodes.values())

    @property
    def parameters(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.op == "parameter"]

    # -- node constructors -------------------------------------------------

    def input(self, name: str) -> Node:
        return self._add("input", name=name)

    def parameter(self, name: str, value, trainable: bool = True) -> Node:
        value = np.array(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        node = self._add("parameter", name=name)
        node.value = value
        node.trainable = trainable
        return node

    def forward_project(self, x: NodeRef, geometry, name=None) -> Node:
        return self._add("forward_project", (x,), name, geometry=geometry)

    def backproject(self, x: NodeRef, geometry, name=None) -> Node:
        return self._add("backproject", (x,), name, geometry=geometry)

    def multiply_weights(self, x: NodeRef, weights: NodeRef, name=None) -> Node:
        return self._add("multiply_weights", (x, weights), name)

    def fourier_filter(self, x: NodeRef, filter_weights: NodeRef, name=None) -> Node:
        return self._add("fourier_filter", (x, filter_weights), name)

    def add(self, a: NodeRef, b: NodeRef, name=None) -> Node:
        return self._add("add", (a, b), name)

    def scale(self, x: NodeRef, factor: float, name=None) -> Node:
        return self._add("scale", (x,), name, factor=float(factor))

    def l2_loss(self, a: NodeRef, b: NodeRef, name=None) -> Node:
        return self._add("l2_loss", (a, b), name)

    def tv_loss(self, x: NodeRef, name=None) -> Node:
        return self._add("tv_loss", (x,), name)

    # -- execution ---------------------------------------------------------

    def _evaluate(self, node: Node, args: list[np.ndarray]) -> np.ndarray:
        op = node.op
        if op == "forward_project":
            return forward_project(args[0], node.attrs["geometry"])
        if op == "backproject":
            return backproject(args[0], node.attrs["geometry"])
        if op == "multiply_weights":
            return args[0] * args[1]
        if op == "fourier_filter":
            return apply_filter(args[0], args[1])
        if op == "add":
            return args[0] + args[1]
        if op == "scale":
            return node.attrs["factor"] * args[0]
        if op == "l2_loss":
            if args[0].shape != args[1].shape:
                raise ValueError(f"l2_loss operands differ in shape: {args[0].shape} vs {args[1].shape}")
            return np.asarray(np.sum((args[0] - args[1]) ** 2))
        if op == "tv_loss":
            return np.asarray(tv_loss(args[0]))
        raise ValueError(f"unknown op {op!r}")

    def forward(self, feeds: dict) -> dict[str, np.ndarray]:
        """Evaluate every node in order; ``feeds`` maps input ids to arrays."""
        values = {}
        for node in self.order:
            if node.op == "input":
                if node.id not in feeds:
                    raise ValueError(f"missing feed for input {node.id!r}")
                node.value = np.array(feeds[node.id], dtype=float)
            elif node.op != "parameter":
                args = [self.nodes[i].value for i in node.inputs]
                try:
                    # overflow shows up as inf/nan and is reported by train()
                    with np.errstate(over="ignore", invalid="ignore"):
                        node.value = self._evaluate(node, args)
                except ValueError as exc:
                    raise ValueError(f"node {node.id!r} ({node.op}): {exc}") from exc
            values[node.id] = node.value
        return values

    def backward(self, loss: NodeRef) -> dict[str, np.ndarray]:
        """Accumulate gradients of a scalar ``loss`` into every node's ``grad``.

        Call :meth:`forward` first. Returns the gradients of the parameter nodes.
        """
        loss_id = self._id(loss)
        loss_node = self.nodes[loss_id]
        if loss_node.value is None:
            raise RuntimeError("run forward() before backward()")
        if np.size(loss_node.value) != 1:
            raise ValueError(f"loss node {loss_id!r} is not scalar")
        for node in self.order:
            node.grad = None
        loss_node.grad = np.ones_like(loss_node.value, dtype=float)

        for node in reversed(self.order):
            if node.grad is None or not node.inputs:
                continue
            if not np.all(np.isfinite(node.grad)):
                raise DivergenceError(f"non-finite gradient at node {node.id!r}")
            for input_id, g in zip(node.inputs, self._input_grads(node)):
                if g is None:
                    continue
                target = self.nodes[input_id]
                target.grad = g if target.grad is None else target.grad + g

        grads = {}
        for p in self.parameters:
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for parameter {p.id!r}")
            grads[p.id] = g
        return grads

    def _input_grads(self, node: Node) -> list[np.ndarray | None]:
        g = node.grad
        args = [self.nodes[i].value for i in node.inputs]
        op = node.op
        if op == "forward_project":
            return [backproject(g, node.attrs["geometry"])]
        if op == "backproject":
            return [forward_project(g, node.attrs["geometry"])]
        if op == "multiply_weights":
            x, w = args
            return [_sum_to_shape(g * w, x.shape), _sum_to_shape(g * x, w.shape)]
        if op == "fourier_filter":
            x, k = args
            return [apply_filter(g, k), filter_weight_gradient(x, g, len(k))]
        if op == "add":
            return [_sum_to_shape(g, args[0].shape), _sum_to_shape(g, args[1].shape)]
        if op == "scale":
            return [node.attrs["factor"] * g]
        if op == "l2_loss":
            r = 2.0 * (args[0] - args[1]) * g
            return [r, -r]
        if op == "tv_loss":
            return [g * tv_gradient(args[0])]
        raise ValueError(f"no gradient rule for op {op!r}")


def gradient_descent_step(params, grads: dict, learning_rate: float) -> dict[str, np.ndarray]:
    """``p <- p - lr * g`` for every trainable parameter node, in place."""
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    updated = {}
    for p in params:
        if not p.trainable:
            continue
        g = grads.get(p.id)
        if g is None:
            continue
        if np.shape(g) != p.value.shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.id!r} {p.value.shape}")
        p.value = p.value - learning_rate * g
        updated[p.id] = p.value
    return updated


def train(
    graph: Graph,
    loss: NodeRef,
    feeds: dict,
    learning_rate: float,
    iterations: int,
    metric: Callable[[Graph], float] | None = None,
) -> list[tuple]:
    """Plain gradient descent. Returns ``(iteration, loss[, metric])`` rows.

    Row ``i`` holds the loss evaluated before update ``i``; the final row is the
    loss after the last update.
    """
    log = []
    loss_id = graph._id(loss)
    for it in range(iterations + 1):
        value = float(graph.forward(feeds)[loss_id])
        if not math.isfinite(value):
            raise DivergenceError(f"loss became {value} at iteration {it}")
        log.append((it, value) if metric is None else (it, value, float(metric(graph))))
        if it == iterations:
            break
        grads = graph.backward(loss_id)
        gradient_descent_step(graph.parameters, grads, learning_rate)
    return log
