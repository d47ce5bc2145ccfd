"""Named trainable tensors with paired gradient buffers."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

#: Scale of the uniform weight initialization.
INIT_RANGE = 0.08


class Param:
    """One trainable tensor and its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Param({self.name}, shape={self.value.shape})"


class Parameters:
    """Ordered registry of all parameters of a model."""

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        p = Param(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Param]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def n_scalars(self) -> int:
        return sum(p.value.size for p in self)

    def zero_grads(self) -> None:
        for p in self:
            p.grad[...] = 0.0

    def scale_grads(self, factor: float) -> None:
        for p in self:
            p.grad *= factor

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.value)) for p in self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"checkpoint tensors do not match the model "
                f"(missing: {sorted(missing)[:3]}, extra: {sorted(extra)[:3]})"
            )
        for name, value in state.items():
            p = self._params[name]
            if p.value.shape != value.shape:
                raise ValueError(
                    f"tensor {name!r} has shape {value.shape}, expected {p.value.shape}"
                )
            p.value[...] = value


class Initializer:
    """Weight-drawing policy used while the network registers its tensors."""

    def __init__(self, rng: np.random.Generator | None, zeros: bool = False):
        self._rng = rng
        self._zeros = zeros

    def weight(self, *shape: int) -> np.ndarray:
        if self._zeros or self._rng is None:
            return np.zeros(shape)
        return self._rng.uniform(-INIT_RANGE, INIT_RANGE, shape)

    def bias(self, *shape: int) -> np.ndarray:
        return np.zeros(shape)

    def gain(self, *shape: int) -> np.ndarray:
        # LayerNorm gains start at identity; a near-zero uniform draw would
        # collapse the signal at initialization.
        return np.zeros(shape) if self._zeros else np.ones(shape)

    def scalar(self, value: float) -> np.ndarray:
        return np.zeros(()) if self._zeros else np.array(value)
