"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that consumes a gradient-tracked input records a ``Node``
holding its inputs and a vector-Jacobian closure. Node ids come from one
process-wide counter, so an input's node always has a smaller id than the
node of any tensor computed from it. ``backward`` collects the nodes
reachable from the loss into a ``GradGraph`` in id order and walks it once
in reverse.

Gradients accumulate across ``backward`` calls; callers reset them with
``Tensor.zero_grad``.
"""
from __future__ import annotations

import contextlib
import contextvars
import itertools
import weakref
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from app.core.errors import ShapeError, ToolkitError

VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_node_ids = itertools.count()
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


@dataclass(eq=False)
class Node:
    id: int
    op: str
    inputs: tuple["Tensor", ...]
    vjp: VJP
    output: "weakref.ref[Tensor] | None" = None


class Tensor:
    """An n-dimensional float64 array that may take part in a gradient graph.

    ``data`` is read-only once constructed; only ``grad`` changes, plus
    ``assign`` which optimizers use to write new parameter values between
    steps.
    """

    def __init__(self, data, requires_grad: bool = False, node: Node | None = None):
        array = np.array(data, dtype=np.float64)
        array.flags.writeable = False
        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
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
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def assign(self, data) -> None:
        array = np.array(data, dtype=np.float64)
        if array.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {array.shape} to tensor of shape {self.shape}")
        array.flags.writeable = False
        self.data = array

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class GradGraph:
    """Append-only list of nodes in topological (id) order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._ids: set[int] = set()

    def append(self, node: Node) -> None:
        if self.nodes and node.id <= self.nodes[-1].id:
            raise ToolkitError(f"node {node.id} appended out of order")
        for parent in node.inputs:
            if parent.node is not None and parent.node.id >= node.id:
                raise ToolkitError(f"node {node.id} consumes a later node {parent.node.id}")
        self.nodes.append(node)
        self._ids.add(node.id)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._ids

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_output(cls, output: Tensor) -> "GradGraph":
        found: dict[int, Node] = {}
        stack = [output.node] if output.node is not None else []
        while stack:
            node = stack.pop()
            if node.id in found:
                continue
            found[node.id] = node
            stack.extend(t.node for t in node.inputs if t.node is not None and t.node.id not in found)
        graph = cls()
        for node_id in sorted(found):
            graph.append(found[node_id])
        return graph


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def make_result(data: np.ndarray, op: str, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wrap an op output, recording a node when any input is tracked."""
    tracked = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        node = Node(id=next(_node_ids), op=op, inputs=tuple(inputs), vjp=vjp)
        node.output = weakref.ref(out)
        out.node = node
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ToolkitError("loss does not depend on any gradient-tracked tensor")
    seed = np.ones_like(loss.data)
    if loss.node is None:
        loss.accumulate_grad(seed)
        return

    graph = GradGraph.from_output(loss)
    pending: dict[int, np.ndarray] = {loss.node.id: seed}
    for node in reversed(graph.nodes):
        upstream = pending.pop(node.id, None)
        if upstream is None:
            continue
        out = node.output() if node.output is not None else None
        if out is not None:
            out.accumulate_grad(upstream)
        for parent, grad in zip(node.inputs, node.vjp(upstream)):
            if grad is None or not parent.requires_grad:
                continue
            if parent.node is None:
                parent.accumulate_grad(grad)
            elif parent.node.id in pending:
                pending[parent.node.id] = pending[parent.node.id] + grad
            else:
                pending[parent.node.id] = grad
