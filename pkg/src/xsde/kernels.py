"""Causal delay measures and their action on initial histories.

A delay kernel ``g`` is a finite measure on ``[0, inf)`` made of Dirac atoms
``w * delta_theta`` and exponential densities ``m * beta * exp(-beta x) dx``.
Fourier transforms use the ``exp(-2i pi t xi)`` convention throughout the
package, so a delay ``theta`` has transform ``exp(-2i pi xi theta)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientHistoryError, PoleError

# relative tolerance below which |g_hat| is treated as a zero
POLE_TOL = 1e-12


@dataclass(frozen=True)
class DelayKernel:
    """Causal finite measure ``g``.

    Attributes:
        atoms: pairs ``(weight, lag)`` with ``lag >= 0`` in seconds.
        exp_terms: pairs ``(mass, beta)``; each contributes the density
            ``mass * beta * exp(-beta x) H(x)``.
    """

    atoms: tuple = ()
    exp_terms: tuple = field(default=())

    def __post_init__(self):
        atoms = tuple((float(w), float(lag)) for w, lag in self.atoms)
        exp_terms = tuple((float(m), float(b)) for m, b in self.exp_terms)
        for w, lag in atoms:
            if not (np.isfinite(w) and np.isfinite(lag)):
                raise ConfigError(f"atom ({w}, {lag}) is not finite")
            if lag < 0:
                raise ConfigError(f"atom lag {lag} < 0: delay kernels must be causal")
        for m, b in exp_terms:
            if not (np.isfinite(m) and np.isfinite(b)):
                raise ConfigError(f"exponential term ({m}, {b}) is not finite")
            if b <= 0:
                raise ConfigError(f"exponential rate beta={b} must be > 0")
        if not atoms and not exp_terms:
            raise ConfigError("delay kernel needs at least one atom or exponential term")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "exp_terms", exp_terms)

    @classmethod
    def dirac(cls, weight=1.0):
        return cls(atoms=((weight, 0.0),))

    @classmethod
    def single_delay(cls, alpha, theta):
        """``delta_0 + alpha * delta_theta``."""
        return cls(atoms=((1.0, 0.0), (alpha, theta)))

    @classmethod
    def exponential(cls, beta, mass=1.0):
        return cls(exp_terms=((mass, beta),))

    @property
    def total_mass(self):
        return sum(w for w, _ in self.atoms) + sum(m for m, _ in self.exp_terms)

    @property
    def total_variation(self):
        return sum(abs(w) for w, _ in self.atoms) + sum(abs(m) for m, _ in self.exp_terms)

    @property
    def max_lag(self):
        """Largest atom lag. Exponential tails are not counted (unbounded support)."""
        return max((lag for _, lag in self.atoms), default=0.0)

    @property
    def weight_at_zero(self):
        return sum(w for w, lag in self.atoms if lag == 0.0)

    def is_dirac_only(self):
        return not self.exp_terms and all(lag == 0.0 for _, lag in self.atoms)

    def fourier(self, xi):
        return fourier(self, xi)

    def to_json(self):
        return {
            "atoms": [{"weight": w, "lag": lag} for w, lag in self.atoms],
            "exp": [{"mass": m, "beta": b} for m, b in self.exp_terms],
        }

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("delay kernel must be a JSON object with 'atoms' and/or 'exp'")
        unknown = set(obj) - {"atoms", "exp"}
        if unknown:
            raise ConfigError(f"unknown delay kernel fields: {sorted(unknown)}")
        try:
            atoms = [(a["weight"], a["lag"]) for a in obj.get("atoms", [])]
            exp_terms = [(e["mass"], e["beta"]) for e in obj.get("exp", [])]
        except (KeyError, TypeError) as err:
            raise ConfigError(f"malformed delay kernel entry: {err!r}") from None
        return cls(tuple(atoms), tuple(exp_terms))


def fourier(g, xi):
    """Fourier transform ``g_hat(xi) = int exp(-2i pi xi s) dg(s)``.

    Accepts a scalar or an array of frequencies and returns the same shape.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape, dtype=complex)
    for w, lag in g.atoms:
        out += w * np.exp(-2j * np.pi * xi * lag)
    for m, b in g.exp_terms:
        out += m * b / (b + 2j * np.pi * xi)
    return out[()] if out.ndim == 0 else out


def curve(g, xi, tol=POLE_TOL):
    """Evaluate ``2i pi xi / g_hat(xi)``, the locus bounding the convergence balls.

    Raises:
        PoleError: if ``|g_hat(xi)|`` is below ``tol * total_variation``.
    """
    xi = np.asarray(xi, dtype=float)
    gh = fourier(g, xi)
    bad = np.abs(gh) <= tol * g.total_variation
    if np.any(bad):
        where = np.atleast_1d(xi)[np.atleast_1d(bad)][0]
        raise PoleError(f"g_hat vanishes at xi={where:.6g}; curve has a pole there", xi=where)
    return 2j * np.pi * xi / gh


def snap_lag(lag, dt, tol=None):
    """Nearest grid index for ``lag``; raises if the snap moves it by more than ``tol``."""
    tol = 0.5 * dt if tol is None else tol
    idx = int(round(lag / dt))
    if abs(idx * dt - lag) > tol * (1 + 1e-9):
        raise ConfigError(f"lag {lag} is {abs(idx * dt - lag):.3g} away from the grid (dt={dt})")
    return idx


@dataclass(frozen=True)
class HistoryFunction:
    """Initial history ``zeta_0`` on the negative half line.

    ``samples[:, j]`` is the value at ``t = (j - H) * dt`` (oldest first, the
    last column is ``t = -dt``). Before ``-H * dt`` the history is zero.
    """

    samples: np.ndarray
    value_at_zero: np.ndarray
    dt: float

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.value_at_zero, dtype=float))
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(x0.size, -1)
        if samples.ndim != 2 or samples.shape[0] != x0.size:
            raise ConfigError(
                f"history samples must be n x H with n={x0.size}, got shape {samples.shape}"
            )
        if not (np.all(np.isfinite(samples)) and np.all(np.isfinite(x0))):
            raise ConfigError("history contains non-finite values")
        if self.dt <= 0:
            raise ConfigError("history dt must be > 0")
        samples.setflags(write=False)
        x0.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "value_at_zero", x0)

    @classmethod
    def zeros(cls, n, dt, length=0):
        return cls(np.zeros((n, length)), np.zeros(n), dt)

    @classmethod
    def constant(cls, value, dt, length):
        """History equal to ``value`` on ``[-length*dt, 0]`` (including ``t = 0``)."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.repeat(value[:, None], length, axis=1), value, dt)

    @property
    def n(self):
        return self.value_at_zero.size

    @property
    def length(self):
        return self.samples.shape[1]

    def at_index(self, m):
        """Value at ``t = m * dt`` for ``m < 0`` (zero before the window)."""
        if m >= 0:
            raise IndexError("history is defined for negative indices only")
        if m < -self.length:
            return np.zeros(self.n)
        return self.samples[:, self.length + m]


def convolve_history(g, zeta, grid):
    """Return ``(zeta_0 * g)(t_i)`` on the grid, with ``zeta_0`` extended by zero on ``[0, inf)``.

    Atoms are looked up at their snapped lag. Exponential terms use the exact
    mass of each lag bin ``[j dt, (j+1) dt)`` times the history sample at lag
    ``j dt``, which reduces to a geometric factor per output step.
    """
    dt, T = grid.dt, grid.steps
    if abs(zeta.dt - dt) > 1e-12 * dt:
        raise ConfigError(f"history dt={zeta.dt} does not match grid dt={dt}")
    H = zeta.length
    if g.max_lag > H * dt * (1 + 1e-9) + 0.5 * dt:
        raise InsufficientHistoryError(
            f"history covers {H * dt:g}s but the kernel has a delay of {g.max_lag:g}s"
        )
    out = np.zeros((zeta.n, T))
    if H == 0:
        return out
    for w, lag in g.atoms:
        p = snap_lag(lag, dt)
        # output step i sees history index i - p < 0, i.e. i < p
        i = np.arange(min(p, T))
        if i.size:
            out[:, i] += w * zeta.samples[:, H + i - p]
    if g.exp_terms:
        # history at lag m*dt before t=0, m = 1..H
        lagged = zeta.samples[:, ::-1]
        m = np.arange(1, H + 1)
        i = np.arange(T)
        for mass, beta in g.exp_terms:
            q = np.exp(-beta * dt)
            s = mass * (-np.expm1(-beta * dt)) * (lagged @ q**m)
            out += np.outer(s, q**i)
    return out
