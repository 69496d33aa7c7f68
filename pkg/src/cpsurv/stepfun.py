from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant path.

    ``values[i]`` is the value on ``[jump_times[i], jump_times[i+1])``; before the
    first jump the function equals ``origin_value``. Values may be vectors
    (shape ``(m, ...)``), in which case ``origin_value`` must broadcast to one row.
    """

    jump_times: np.ndarray
    values: np.ndarray
    origin_value: np.ndarray | float = 0.0
    _origin: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1:
            raise ValueError("jump_times must be one-dimensional")
        if values.shape[:1] != times.shape:
            raise ValueError("values must have one row per jump time")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("jump_times must be strictly increasing")
        origin = np.broadcast_to(np.asarray(self.origin_value, dtype=float), values.shape[1:]).copy()
        times.setflags(write=False)
        values.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_origin", origin)

    def __len__(self) -> int:
        return self.jump_times.size

    @property
    def origin(self) -> np.ndarray:
        return self._origin

    def _lookup(self, t, side: str):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side=side) - 1
        table = np.concatenate([self._origin[None, ...], self.values], axis=0)
        out = table[idx + 1]
        if out.ndim == 0:
            return float(out)
        return out

    def __call__(self, t):
        """Value at ``t``: that of the last jump at or before ``t``."""
        return self._lookup(t, "right")

    def left_limit(self, t):
        """Value just before ``t``."""
        return self._lookup(t, "left")

    @property
    def jumps(self) -> np.ndarray:
        prev = np.concatenate([self._origin[None, ...], self.values[:-1]], axis=0)
        return self.values - prev

    def restrict(self, upper: float) -> "StepFunction":
        """Drop jumps after ``upper``."""
        keep = self.jump_times <= upper
        return StepFunction(self.jump_times[keep], self.values[keep], self._origin)

    def map(self, fn) -> "StepFunction":
        return StepFunction(self.jump_times, fn(self.values), fn(self._origin))
