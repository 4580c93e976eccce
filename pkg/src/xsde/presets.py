"""Ready-made problems: the periodic stochastic heat equation and a scalar OU process."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import TimeGrid
from .kernels import DelayKernel, HistoryFunction
from .solver import ExpansionConfig, Problem
from .spectral import SpaceOperator


@dataclass(frozen=True)
class HeatPreset:
    """Finite-difference heat equation on a ring of ``n`` nodes.

    ``dv = (Laplacian v + delta_{x0}) dt + sigma dB`` with a point source at
    the middle node. The discrete Dirac is ``1/dx`` at that node and
    space-time white noise becomes ``sigma / sqrt(dx)`` per node. The default
    shift ``l = 2/dx^2`` centres the convergence ball on the spectrum, which
    lies in ``[-4/dx^2, 0]``.
    """

    n: int = 100
    dx: float = None
    sigma: float = 0.1
    l: float = None

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError("heat preset needs n >= 3")
        dx = 1.0 / self.n if self.dx is None else float(self.dx)
        if dx <= 0:
            raise ConfigError("dx must be > 0")
        object.__setattr__(self, "dx", dx)
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.l is None:
            object.__setattr__(self, "l", 2.0 / dx**2)

    @property
    def source_node(self):
        return self.n // 2

    def operator(self):
        row = np.zeros(self.n)
        row[0] = -2.0 / self.dx**2
        row[1] = row[-1] = 1.0 / self.dx**2
        return SpaceOperator.from_circulant(row)

    def source(self):
        v = np.zeros(self.n)
        v[self.source_node] = 1.0 / self.dx
        return v

    def problem(self, grid):
        return Problem(
            A=self.operator(),
            g=DelayKernel.dirac(),
            grid=grid,
            sigma=self.sigma / np.sqrt(self.dx),
            input=self.source(),
            history=HistoryFunction.zeros(self.n, grid.dt),
        )

    def expansion_config(self, k_max=2000, term_tol=1e-8):
        # the contraction ratio is exactly 1 here (constant mode), so the
        # spectral gate is overridden and the divergence detector takes over
        return ExpansionConfig(l=self.l, k_max=k_max, term_tol=term_tol, allow_infeasible=True)


def ou_problem(a=1.0, x0=1.0, dt=1e-3, tau=5.0, sigma=0.0):
    """Scalar ``dX = -a X dt + sigma dB`` started at ``x0``."""
    grid = TimeGrid.from_tau(tau, dt)
    return Problem(
        A=np.array([[-a]]),
        g=DelayKernel.dirac(),
        grid=grid,
        sigma=sigma,
        history=HistoryFunction(np.zeros((1, 0)), [x0], dt),
    )
