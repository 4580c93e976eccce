"""Equilibrium connectivity of a slowly learning linear Hebbian network.

Model, with ``tau``-periodic input:

    eps dV/dt = -l V + W V + I(t),     dW/dt = -kappa W + V V'.

When ``eps -> 0`` the connectivity sees the period average of ``V V'`` over
the periodic solution ``V_W``, so an equilibrium solves

    W = Phi(W) = (1 / kappa) <V_W V_W'>,    V_W = sum_k W^k (h^{*(k+1)} * I),

with ``h(t) = exp(-l t) H(t)`` periodized over the input period.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.fft import irfft, rfft

from .errors import ConfigError, DivergenceError
from .grid import TimeGrid


@dataclass(frozen=True)
class LearningProblem:
    """``n x T`` samples of one input period together with the rates.

    ``input_matrix[:, j]`` is held constant on ``[j dt, (j+1) dt)``.
    """

    input_matrix: np.ndarray
    l: float
    kappa: float
    grid: TimeGrid
    epsilon: float = 1e-3

    def __post_init__(self):
        inp = np.atleast_2d(np.asarray(self.input_matrix, dtype=float))
        if inp.shape[1] != self.grid.steps:
            raise ConfigError(f"input has {inp.shape[1]} samples, grid has {self.grid.steps}")
        if not np.all(np.isfinite(inp)):
            raise ConfigError("input samples must be finite")
        for name in ("l", "kappa", "epsilon"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0, got {v}")
        inp.setflags(write=False)
        object.__setattr__(self, "input_matrix", inp)

    @property
    def n(self):
        return self.input_matrix.shape[0]

    @property
    def input_sup(self):
        """``sup_t ||I(t)||_2``."""
        return float(np.linalg.norm(self.input_matrix, axis=0).max())


@dataclass
class ConnectivityMatrix:
    w: np.ndarray
    iterations: int
    residual: float
    order_norms: list = field(default_factory=list)
    history: list = field(default_factory=list)


def periodic_bins(l, grid):
    """Bin masses of the periodized ``exp(-l t)`` over ``[i dt, (i+1) dt)``; they sum to ``1/l``."""
    i = np.arange(grid.steps)
    dt = grid.dt
    return np.exp(-l * i * dt) * -np.expm1(-l * dt) / (l * -np.expm1(-l * grid.tau))


def _periodic_smooth(col_hat, y):
    """Circular convolution with the bin kernel, as values at the left edge of each bin."""
    out = irfft(rfft(y, axis=1) * col_hat, n=y.shape[1], axis=1)
    return np.roll(out, 1, axis=1)


def periodic_response(p, w, k_max):
    """Series for the periodic ``V_W``; returns the ``k_max + 1`` terms ``W^k (h^{*(k+1)} * I)``."""
    col_hat = rfft(periodic_bins(p.l, p.grid))
    terms = [_periodic_smooth(col_hat, p.input_matrix)]
    for _ in range(k_max):
        terms.append(w @ _periodic_smooth(col_hat, terms[-1]))
    return terms


def fixed_point_map(p, w, orders):
    """``Phi(W)`` with the double series truncated at ``orders = (k_max, q_max)``; also returns term norms."""
    k_max, q_max = orders
    terms = periodic_response(p, w, max(k_max, q_max))
    vk = np.sum(terms[: k_max + 1], axis=0)
    vq = np.sum(terms[: q_max + 1], axis=0)
    return vk @ vq.T / (p.kappa * p.grid.steps), [float(np.linalg.norm(z)) for z in terms]


def _rel_residual(p, w, orders):
    phi, _ = fixed_point_map(p, w, orders)
    nw = np.linalg.norm(w)
    return float(np.linalg.norm(w - phi) / nw) if nw > 0 else float(np.linalg.norm(phi))


def equilibrium_fixed_point(p, orders=(32, 32), max_iter=500, tol=1e-13):
    """Picard iteration ``W <- Phi(W)`` from ``W = 0``.

    Raises:
        DivergenceError: the update grew three times in a row or ``||W||``
            reached ``l`` (outside the weakly coupled regime).
    """
    w = np.zeros((p.n, p.n))
    updates = []
    growth = 0
    norms = []
    it = 0
    for it in range(1, max_iter + 1):
        new, norms = fixed_point_map(p, w, orders)
        if not np.all(np.isfinite(new)):
            raise DivergenceError("fixed-point iterate is not finite")
        step = float(np.linalg.norm(new - w))
        w = new
        updates.append(step)
        nw = np.linalg.norm(w)
        if np.linalg.norm(w, 2) >= p.l:
            raise DivergenceError(
                f"||W|| = {np.linalg.norm(w, 2):.4g} reached l = {p.l:g}: not weakly coupled", ratio=None
            )
        if nw == 0 or step <= tol * nw:
            break
        if len(updates) > 1 and step > updates[-2]:
            growth += 1
            if growth >= 3:
                raise DivergenceError("fixed-point updates grew 3 times in a row", ratio=step / updates[-2])
        else:
            growth = 0
    return ConnectivityMatrix(w, it, _rel_residual(p, w, orders), norms, updates)


def leading_order(p):
    """Lowest term of the double series: ``(1 / (kappa T)) (h * I)(h * I)'``."""
    w, norms = fixed_point_map(p, np.zeros((p.n, p.n)), (0, 0))
    return ConnectivityMatrix(w, 0, _rel_residual(p, w, (32, 32)), norms)


def scalar_equilibrium(c, l, kappa):
    """Weak-coupling root of ``W = c^2 / (kappa (l - W)^2)`` by bisection (constant scalar input)."""
    if c == 0:
        return 0.0

    def f(w):
        return w * (l - w) ** 2 - c * c / kappa

    # f rises on [0, l/3] and falls back to -c^2/kappa at l: the stable root lies below l/3
    wmax = l / 3.0
    if f(wmax) < 0:
        raise DivergenceError("no weakly coupled equilibrium: input too strong for this l and kappa")
    return float(optimize.bisect(f, 0.0, wmax, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def simulate_coupled(p, t_end=None, dt_fast=None, w0=None, tol=1e-9):
    """Explicit Euler for the coupled system in the fast time ``s = t / eps``.

    In fast time the neurons follow ``dV/ds = -l V + W V + I(s)`` with the
    input period unchanged and ``dW/ds = eps (-kappa W + V V')``. Integration
    stops at ``t_end`` (fast time) or once the period average of ``W`` moves
    by less than ``tol`` relative. Returns the average over the last period.
    """
    dt = p.grid.dt
    T = p.grid.steps
    if dt_fast is None:
        sub = int(np.ceil(dt / (0.01 / p.l)))
    else:
        if dt_fast > 0.1 / p.l * (1 + 1e-12):
            raise ConfigError(f"dt_fast={dt_fast} exceeds the fast-equation limit 0.1/l={0.1 / p.l:g}")
        sub = max(1, int(round(dt / dt_fast)))
    h = dt / sub
    rate = p.epsilon * p.kappa
    if t_end is None:
        t_end = 20.0 / rate
    periods = max(1, int(np.ceil(t_end / p.grid.tau)))
    w = np.zeros((p.n, p.n)) if w0 is None else np.array(w0, dtype=float)
    v = np.zeros(p.n)
    inp = p.input_matrix
    prev = None
    avg = w
    done = 0
    for done in range(1, periods + 1):
        acc = np.zeros_like(w)
        for j in range(T):
            drive = inp[:, j]
            for _ in range(sub):
                v, w = v + h * (-p.l * v + w @ v + drive), w + h * p.epsilon * (np.outer(v, v) - p.kappa * w)
                acc += w
        avg = acc / (T * sub)
        if not (np.all(np.isfinite(avg)) and np.all(np.abs(v) < 1e12)):
            raise DivergenceError(f"coupled simulation blew up in period {done}")
        if prev is not None:
            scale = max(np.linalg.norm(avg), np.finfo(float).tiny)
            if np.linalg.norm(avg - prev) <= tol * scale:
                break
        prev = avg
    res = _rel_residual(p, avg, (32, 32))
    return ConnectivityMatrix(avg, done, res)
