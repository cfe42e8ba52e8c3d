"""Named parameter collections and the Adam update rule."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


class Parameters:
    """Map from unique names to trainable tensors, iterated lexicographically."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        if not tensor.requires_grad:
            raise ValueError(f"parameter {name} must require grad")
        self._tensors[name] = tensor
        return tensor

    def merge(self, prefix: str, other: "Parameters"):
        for name, t in other.items():
            self.add(f"{prefix}.{name}", t)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._tensors[name]

    def tensors(self) -> Iterator[Tensor]:
        for _, t in self.items():
            yield t

    def __iter__(self) -> Iterator[Tensor]:
        return self.tensors()

    def zero_grads(self):
        for t in self.tensors():
            t.zero_grad()

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Copies of the raw values, for snapshots and checkpoints."""
        return {name: t.data.copy() for name, t in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name, t in self.items():
            src = arrays.get(name)
            if src is None:
                raise KeyError(f"missing parameter in snapshot: {name}")
            if src.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {src.shape} vs {t.data.shape}")
            t.data = src.astype(t.data.dtype, copy=True)


class AdamState:
    """First/second moment accumulators plus the shared step count."""

    def __init__(self, params: Parameters):
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.step = 0


def adam_step(params: Parameters, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; requires grads to be populated."""
    for name, t in params.items():
        if t.grad is None:
            raise ValueError(f"parameter {name} has no gradient; run backward first")
    state.step += 1
    t_ = state.step
    c1 = 1.0 - beta1 ** t_
    c2 = 1.0 - beta2 ** t_
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
