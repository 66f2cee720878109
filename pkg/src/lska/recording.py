"""Per-call recording objects: a reverse-mode tape and a cost counter.

Both are plain accumulators handed to forward functions through keyword
arguments (``tape=``, ``counter=``).  Nothing here is global.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class RecordingError(RuntimeError):
    """Raised when a backward pass is requested for something never recorded."""


@dataclass
class Record:
    name: str
    inputs: tuple
    output: np.ndarray
    backward: Callable


class Gradients:
    """Result of :meth:`Tape.backward`.

    Input gradients are looked up by the array object that was fed forward;
    parameter gradients by ``(record name, parameter name)``.
    """

    def __init__(self, by_id, params):
        self._by_id = by_id
        self.params = params

    def wrt(self, x):
        try:
            return self._by_id[id(x)]
        except KeyError:
            raise RecordingError("array did not take part in the recorded graph") from None

    def __contains__(self, x):
        return id(x) in self._by_id


class Tape:
    """Linear record of forward ops, replayed backwards by :meth:`backward`.

    Every op appends ``(inputs, output, backward)`` where ``backward(g)``
    returns ``(input_grads, param_grads)``.  The tape keeps references to all
    arrays it saw so that ``id()`` keys stay valid for its lifetime.
    """

    def __init__(self):
        self.records: list[Record] = []
        self._outputs: set[int] = set()

    def record(self, name, inputs, output, backward):
        if id(output) in self._outputs or any(id(output) == id(x) for x in inputs):
            raise RecordingError(f"op {name!r} must return a fresh array")
        self.records.append(Record(name, tuple(inputs), output, backward))
        self._outputs.add(id(output))

    def __len__(self):
        return len(self.records)

    def backward(self, output, grad) -> Gradients:
        if id(output) not in self._outputs:
            raise RecordingError("output was not produced by a recorded op")
        grad = np.asarray(grad, dtype=output.dtype)
        if grad.shape != output.shape:
            raise ValueError(f"upstream gradient {grad.shape} does not match output {output.shape}")

        pending = {id(output): grad}
        done = {}
        params = {}
        for rec in reversed(self.records):
            g = pending.pop(id(rec.output), None)
            if g is None:
                continue
            done[id(rec.output)] = g
            in_grads, p_grads = rec.backward(g)
            for key, value in p_grads.items():
                params[(rec.name, key)] = value
            for x, gx in zip(rec.inputs, in_grads):
                if gx is None:
                    continue
                if id(x) in pending:
                    pending[id(x)] = pending[id(x)] + gx
                else:
                    pending[id(x)] = gx
        # whatever is left over are the leaves (inputs to the graph)
        done.update(pending)
        return Gradients(done, params)


@dataclass(frozen=True)
class LayerCost:
    layer_id: str
    params: int
    macs: int
    aux_ops: int = 0


@dataclass
class MacCounter:
    """Accumulates parameters, multiply-accumulates and auxiliary
    elementwise operations per layer as a forward pass executes."""

    entries: list[LayerCost] = field(default_factory=list)

    def add(self, layer_id, params=0, macs=0, aux_ops=0):
        self.entries.append(LayerCost(layer_id, int(params), int(macs), int(aux_ops)))

    @property
    def macs(self):
        return sum(e.macs for e in self.entries)

    @property
    def params(self):
        return sum(e.params for e in self.entries)
