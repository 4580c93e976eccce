"""Series-expansion solver for linear delayed SDEs and the Euler-Maruyama reference.

Problem:

    dX = (A . (X * g) + I) dt + Sigma . dB,     X = zeta_0 on (-inf, 0].

With ``W = l Id + A`` the solution on ``[0, tau]`` is the series

    X = sum_k W^k . (zeta_0(0) delta_0 + I~ + Sigma dB) . U . V^k,
    I~ = I + A . (zeta_0 * g),

and each term is obtained from the previous one by one application of ``V``
and one left multiplication by ``W``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DivergenceError, InfeasibleShiftError, NumericalIntegrityError
from .grid import TimeGrid
from .kernels import DelayKernel, HistoryFunction, convolve_history, snap_lag
from .spectral import SpaceOperator, as_operator, contraction_ratio, dft_frequencies
from .timeops import apply, apply_atomic, build_kernels, delay_one_step


@dataclass(frozen=True)
class Problem:
    """Linear delayed SDE on a fixed time grid.

    ``input`` may be ``None`` (zero), an ``n``-vector (constant), an ``n x T``
    array of per-step values, or a callable mapping an array of times to an
    ``n x len(times)`` array.
    """

    A: SpaceOperator
    g: DelayKernel
    grid: TimeGrid
    sigma: np.ndarray = None
    input: object = None
    history: HistoryFunction = None

    def __post_init__(self):
        a = as_operator(self.A)
        object.__setattr__(self, "A", a)
        n = a.n
        sigma = np.zeros((n, n)) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma * np.eye(n)
        if sigma.shape != (n, n):
            raise ConfigError(f"sigma must be {n} x {n}, got {sigma.shape}")
        object.__setattr__(self, "sigma", sigma)
        hist = self.history
        if hist is None:
            hist = HistoryFunction.zeros(n, self.grid.dt, length=snap_lag(self.g.max_lag, self.grid.dt))
        if hist.n != n:
            raise ConfigError(f"history has dimension {hist.n}, operator has {n}")
        object.__setattr__(self, "history", hist)
        inp = self.input
        if inp is not None and not callable(inp):
            inp = np.asarray(inp, dtype=float)
            if inp.shape not in ((n,), (n, self.grid.steps)):
                raise ConfigError(f"input must be an {n}-vector or {n} x {self.grid.steps} array")
            if not np.all(np.isfinite(inp)):
                raise ConfigError("input samples must be finite")
        object.__setattr__(self, "input", inp)
        # fail early on histories that do not cover the delays
        convolve_history(self.g, hist, TimeGrid(self.grid.dt, 1))

    @property
    def n(self):
        return self.A.n

    def input_samples(self, offset=0.0):
        """Input per step, evaluated at ``t_i + offset * dt`` when callable."""
        T = self.grid.steps
        if self.input is None:
            return np.zeros((self.n, T))
        if callable(self.input):
            t = (np.arange(T) + offset) * self.grid.dt
            out = np.asarray(self.input(t), dtype=float)
            if out.shape != (self.n, T):
                out = np.broadcast_to(out.reshape(self.n, -1), (self.n, T))
            if not np.all(np.isfinite(out)):
                raise ConfigError("input callable returned non-finite values")
            return np.array(out)
        if self.input.ndim == 1:
            return np.repeat(self.input[:, None], T, axis=1)
        return self.input.copy()


@dataclass(frozen=True)
class BrownianPath:
    """Brownian increments ``dB[:, i] = B(t_{i+1}) - B(t_i)``, each ``N(0, dt)``."""

    seed: int
    increments: np.ndarray
    dt: float

    def coarsen(self, factor):
        """Aggregate ``factor`` consecutive increments (same path on a coarser grid)."""
        n, T = self.increments.shape
        if T % factor:
            raise ConfigError(f"{T} steps are not divisible by {factor}")
        inc = self.increments.reshape(n, T // factor, factor).sum(axis=2)
        return BrownianPath(self.seed, inc, self.dt * factor)


def sample_brownian(seed, grid, n):
    if n < 1:
        raise ConfigError("noise dimension must be >= 1")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((n, grid.steps)) * np.sqrt(grid.dt)
    inc.setflags(write=False)
    return BrownianPath(int(seed), inc, grid.dt)


@dataclass(frozen=True)
class ExpansionConfig:
    """Truncation policy of the series.

    ``v_rule`` selects how a sampled field is turned into bin values before a
    ``V`` product: ``"left"`` (left-point, first order, the default) or
    ``"trapezoid"``.
    """

    l: float
    k_max: int = 64
    term_tol: float = 1e-8
    allow_infeasible: bool = False
    v_rule: str = "left"

    def __post_init__(self):
        if not np.isfinite(self.l) or self.l == 0:
            raise ConfigError("expansion shift l must be finite and non-zero")
        if self.k_max < 0 or int(self.k_max) != self.k_max:
            raise ConfigError("k_max must be a non-negative integer")
        if self.term_tol < 0:
            raise ConfigError("term_tol must be >= 0")
        if self.v_rule not in ("left", "trapezoid"):
            raise ConfigError(f"unknown v_rule {self.v_rule!r}")


@dataclass
class ForcingField:
    atomic: np.ndarray
    density: np.ndarray
    increments: np.ndarray


@dataclass
class SolutionField:
    """Samples ``X(t_i)`` (``n x T``) with per-term diagnostics."""

    samples: np.ndarray
    grid: TimeGrid
    term_norms: list = field(default_factory=list)
    k_used: int = 0
    meta: dict = field(default_factory=dict)

    def l2_norm(self):
        return float(np.sqrt(self.grid.dt) * np.linalg.norm(self.samples))


def _l2(y, dt):
    return float(np.sqrt(dt) * np.linalg.norm(y))


def assemble_forcing(p, path=None):
    """Split the drive into the Dirac at 0, the density and the noise increments."""
    density = p.input_samples(offset=0.5)
    hist = convolve_history(p.g, p.history, p.grid)
    if np.any(hist):
        density = density + p.A.matmul(hist)
    if path is None:
        increments = np.zeros((p.n, p.grid.steps))
    else:
        _check_path(p, path)
        increments = p.sigma @ path.increments
    return ForcingField(p.history.value_at_zero.copy(), density, increments)


def _check_path(p, path):
    if path.increments.shape != (p.n, p.grid.steps):
        raise ConfigError(
            f"Brownian path shape {path.increments.shape} does not match ({p.n}, {p.grid.steps})"
        )
    if abs(path.dt - p.grid.dt) > 1e-12 * p.grid.dt:
        raise ConfigError("Brownian path dt does not match the grid")


def expand(p, cfg, path=None, workers=None, kernels=None):
    """Evaluate the truncated series on ``p.grid``.

    Term 0 is ``F . U``: the Dirac part through the point values of ``u`` and
    the density plus ``Sigma dB / dt`` through the bin integrals. Term ``k`` is
    ``W . (term_{k-1} . V)``. Summation stops once a term is below
    ``term_tol`` relative to the running sum, or at ``k_max``.

    Raises:
        InfeasibleShiftError: the spectral condition fails on the DFT grid and
            ``cfg.allow_infeasible`` is False.
        DivergenceError: term norms grew three times in a row.
    """
    grid = p.grid
    dt, T = grid.dt, grid.steps
    if not cfg.allow_infeasible:
        rep = contraction_ratio(p.A, p.g, cfg.l, dft_frequencies(grid))
        if not rep.feasible:
            raise InfeasibleShiftError(
                f"spectral condition fails for l={cfg.l}: lambda={rep.lam:.6g} >= 1", report=rep
            )
    U, V = build_kernels(p.g, cfg.l, grid) if kernels is None else kernels
    F = assemble_forcing(p, path)
    W = p.A.shifted(cfg.l)

    y = apply_atomic(U, F.atomic) + delay_one_step(apply(U, F.density + F.increments / dt, workers))
    x = y.copy()
    norms = [_l2(y, dt)]
    k_used = 0
    growth = 0
    if norms[0] > 0:
        for k in range(1, cfg.k_max + 1):
            y = W.matmul(delay_one_step(apply(V, _bin_values(y, cfg.v_rule), workers)))
            x += y
            nk = _l2(y, dt)
            norms.append(nk)
            k_used = k
            if not np.isfinite(nk):
                raise NumericalIntegrityError(f"term {k} is not finite")
            ratio = nk / norms[-2] if norms[-2] > 0 else 0.0
            growth = growth + 1 if ratio > 1 else 0
            if growth >= 3:
                raise DivergenceError(
                    f"expansion terms grew for 3 consecutive orders (last ratio {ratio:.4g} at k={k})",
                    ratio=ratio,
                )
            if nk <= cfg.term_tol * _l2(x, dt):
                break
    if not np.all(np.isfinite(x)):
        raise NumericalIntegrityError("expansion produced non-finite values")
    meta = {"l": cfg.l, "kernel_tail": max(U.tail, V.tail)}
    return SolutionField(x, grid, norms, k_used, meta)


def _bin_values(y, rule):
    if rule == "left":
        return y
    b = y.copy()
    b[:, :-1] = 0.5 * (y[:, :-1] + y[:, 1:])
    return b


def _delay_plan(g, dt):
    atoms = [(w, snap_lag(lag, dt)) for w, lag in g.atoms]
    exps = [(m, np.exp(-b * dt)) for m, b in g.exp_terms]
    return atoms, exps


def _scale(p):
    vals = [1.0, np.abs(p.history.value_at_zero).max(initial=0.0), np.abs(p.history.samples).max(initial=0.0)]
    vals.append(np.abs(p.input_samples()).max(initial=0.0) * p.grid.tau)
    vals.append(np.linalg.norm(p.sigma) * np.sqrt(p.grid.tau))
    return max(vals)


def euler_maruyama(p, path=None, blowup=1e8):
    """Explicit Euler-Maruyama on the same grid and Brownian path as ``expand``.

    ``X_{i+1} = X_i + (A . (X * g)(t_i) + I(t_i)) dt + Sigma dB_i``, where
    atoms of ``g`` read the solution/history buffer at their snapped lag and
    each exponential term is a recursive filter over the whole past.

    Raises:
        DivergenceError: ``|X|`` exceeded ``blowup`` times the problem scale.
    """
    grid = p.grid
    dt, T, n = grid.dt, grid.steps, p.n
    inp = p.input_samples()
    noise = np.zeros((n, T)) if path is None else (_check_path(p, path) or p.sigma @ path.increments)
    hist = p.history
    H = hist.length
    buf = np.zeros((n, H + T))
    buf[:, :H] = hist.samples
    buf[:, H] = hist.value_at_zero
    atoms, exps = _delay_plan(p.g, dt)
    # E = sum_{j >= 0} q^j X_{i-j}, seeded with the history
    filt = [(m * (1 - q), q, hist.samples[:, ::-1] @ q ** np.arange(H)) for m, q in exps]
    limit = blowup * _scale(p)
    amat = p.A.matrix
    fast = not exps and all(lag == 0 for _, lag in atoms)
    if fast:
        step = np.eye(n) + dt * p.g.weight_at_zero * amat
    for i in range(T - 1):
        x = buf[:, H + i]
        if fast:
            nxt = step @ x + dt * inp[:, i] + noise[:, i]
        else:
            conv = np.zeros(n)
            for w, lag in atoms:
                conv += w * buf[:, H + i - lag] if i - lag >= -H else 0.0
            for j, (coef, q, e) in enumerate(filt):
                e = x + q * e
                filt[j] = (coef, q, e)
                conv += coef * e
            nxt = x + dt * (amat @ conv + inp[:, i]) + noise[:, i]
        if not np.all(np.abs(nxt) <= limit):
            raise DivergenceError(
                f"Euler-Maruyama diverged at step {i + 1} (t={(i + 1) * dt:g}): "
                f"|X| = {np.abs(nxt).max():.3g} exceeds {limit:.3g}"
            )
        buf[:, H + i + 1] = nxt
    x = buf[:, H:].copy()
    return SolutionField(x, grid, [_l2(x, dt)], 0, {"method": "euler_maruyama"})


def delayed_state(p, x):
    """``(X * g)(t_i)`` for a full trajectory, using the Euler-Maruyama conventions."""
    dt, T = p.grid.dt, p.grid.steps
    hist = p.history
    H = hist.length
    buf = np.concatenate([hist.samples, x], axis=1)
    atoms, exps = _delay_plan(p.g, dt)
    conv = np.zeros_like(x)
    for w, lag in atoms:
        if lag <= H:
            conv += w * buf[:, H - lag : H - lag + T]
        else:
            conv[:, lag - H :] += w * buf[:, : T - (lag - H)]
    for m, q in exps:
        e0 = hist.samples[:, ::-1] @ q ** np.arange(H)
        e = lfilter([1.0], [1.0, -q], x, axis=1, zi=(q * e0)[:, None])[0]
        conv += m * (1 - q) * e
    return conv


def residual(p, sol, path=None):
    """Largest one-step defect of the discrete integral equation, relative to ``max |X|``."""
    x = sol.samples
    if x.shape != (p.n, p.grid.steps):
        raise ConfigError("solution does not match the problem grid")
    if x.shape[1] < 2:
        return 0.0
    dt = p.grid.dt
    drift = p.A.matmul(delayed_state(p, x)) + p.input_samples()
    noise = 0.0 if path is None else p.sigma @ path.increments
    r = x[:, 1:] - x[:, :-1] - dt * drift[:, :-1]
    if path is not None:
        r = r - noise[:, :-1]
    scale = np.abs(x).max()
    err = np.abs(r).max()
    if scale == 0:
        return float(err)
    return float(err / scale)
