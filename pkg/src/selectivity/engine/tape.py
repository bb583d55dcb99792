"""Single-pass recording of a layer graph and reverse replay for gradients.

A tape is recorded once per input and consumed by at most one backward pass:
ReLU gating changes what the backward rules compute, so reusing intermediate
gradients across gate modes would silently mix semantics.
"""

from __future__ import annotations

import numpy as np

from ..errors import GraphError
from ..layers import INPUT_NODE, LayerKind, LayerSpec
from .ops import GateMode, layer_forward


class ComputationTape:
    """Recorded activations plus per-layer backward closures.

    Node 0 is the network input; node ``i + 1`` is the output of layer ``i``.
    """

    def __init__(self, layers: tuple[LayerSpec, ...]):
        self.layers = layers
        self.node_values: list[np.ndarray] = []
        self._vjps: list = []
        self._input_nodes: list[tuple[int, ...]] = []
        self._node_of = {INPUT_NODE: 0}
        for i, spec in enumerate(layers):
            self._node_of[spec.name] = i + 1
        self._node_grads: dict[int, np.ndarray] | None = None

    # -- recording ---------------------------------------------------------

    @classmethod
    def record(
        cls,
        layers: tuple[LayerSpec, ...],
        params: dict[str, dict[str, np.ndarray]],
        x: np.ndarray,
    ) -> "ComputationTape":
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        tape = cls(layers)
        tape.node_values.append(np.asarray(x, dtype=np.float64))
        for i, spec in enumerate(layers):
            src = tape._node_of[spec.input] if spec.input is not None else i
            nodes = (src,)
            if spec.kind is LayerKind.ADD:
                nodes = (src, tape._node_of[spec.source])
            inputs = tuple(tape.node_values[n] for n in nodes)
            y, vjp = layer_forward(spec, params.get(spec.name, {}), inputs)
            if not np.all(np.isfinite(y)):
                raise GraphError(f"layer '{spec.name}' produced non-finite values")
            tape.node_values.append(y)
            tape._vjps.append(vjp)
            tape._input_nodes.append(nodes)
        return tape

    @property
    def output(self) -> np.ndarray:
        return self.node_values[-1]

    # -- replay ------------------------------------------------------------

    def backward(
        self, seed: np.ndarray, gate: str = GateMode.STANDARD, node: int | None = None
    ) -> np.ndarray:
        """Propagate ``seed`` (gradient at node ``node``, default the final
        node) back to the input.

        Returns the input gradient and retains per-node gradients for
        ``gradient_at``. A tape can only be replayed once.
        """
        if self._node_grads is not None:
            raise RuntimeError("tape already consumed; record a new forward pass")
        if gate not in GateMode.ALL:
            raise ValueError(f"unknown gate mode {gate!r}")
        if node is None:
            node = len(self.node_values) - 1
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.node_values[node].shape:
            raise ValueError(
                f"seed shape {seed.shape} != node shape {self.node_values[node].shape}"
            )

        grads: dict[int, np.ndarray] = {node: seed}
        for i in range(node - 1, -1, -1):
            gy = grads.get(i + 1)
            if gy is None:
                # node never feeds anything the seed depends on
                gy = np.zeros_like(self.node_values[i + 1])
                grads[i + 1] = gy
            for src, gx in zip(self._input_nodes[i], self._vjps[i](gy, gate)):
                if src in grads:
                    grads[src] = grads[src] + gx
                else:
                    grads[src] = gx
        if 0 not in grads:
            grads[0] = np.zeros_like(self.node_values[0])
        self._node_grads = grads
        return grads[0]

    def value_at(self, layer_name: str) -> np.ndarray:
        return self.node_values[self._node_index(layer_name)]

    def gradient_at(self, layer_name: str) -> np.ndarray:
        if self._node_grads is None:
            raise RuntimeError("backward has not run on this tape")
        node = self._node_index(layer_name)
        grad = self._node_grads.get(node)
        if grad is None:
            grad = np.zeros_like(self.node_values[node])
        return grad

    def _node_index(self, layer_name: str) -> int:
        try:
            return self._node_of[layer_name]
        except KeyError:
            raise GraphError(f"no layer named '{layer_name}' in graph") from None
