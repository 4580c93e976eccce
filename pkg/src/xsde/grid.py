from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * dt`` for ``i = 0 .. steps - 1`` on ``[0, tau)``."""

    dt: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ConfigError(f"grid.dt must be a positive number, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"grid.steps must be an integer >= 1, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_tau(cls, tau, dt):
        steps = int(round(tau / dt))
        if abs(steps * dt - tau) > 1e-9 * max(tau, 1.0):
            raise ConfigError(f"tau={tau} is not a multiple of dt={dt}")
        return cls(dt, steps)

    @property
    def tau(self):
        return self.dt * self.steps

    @property
    def times(self):
        return np.arange(self.steps) * self.dt

    def refine(self, factor):
        return TimeGrid(self.dt / factor, self.steps * factor)
