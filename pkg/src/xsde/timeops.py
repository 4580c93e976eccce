"""Causal time operators U and V and their Toeplitz discretization.

For a delay kernel ``g`` and shift ``l`` the operators are convolutions with
kernels ``u`` and ``v`` whose transfer functions are

    u_hat = 1 / (l g_hat + 2i pi xi),      v_hat = g_hat * u_hat.

On a grid of step ``dt`` a kernel is stored twice: as bin integrals
``col[i] = int_{i dt}^{(i+1) dt} u`` (for densities, giving lower triangular
Toeplitz products) and as point values ``u(i dt)`` (for Dirac forcing).
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.linalg import toeplitz

from .errors import CausalityError, ConfigError, PoleError
from .grid import TimeGrid

__all__ = [
    "TimeGrid",
    "ToeplitzKernel",
    "uv_fourier",
    "closed_form_ou",
    "closed_form_exp",
    "sample_kernel_ifft",
    "build_kernels",
    "apply",
    "apply_atomic",
    "delay_one_step",
]


@dataclass(frozen=True)
class ToeplitzKernel:
    """First column of a causal (lower triangular) Toeplitz operator.

    Attributes:
        col: bin integrals, length ``T``.
        points: point values ``u(i dt)`` for ``i = 0 .. T`` (right limits at jumps).
        dt: time step.
        label: ``"U"``, ``"V"`` or a free-form name.
        tail: energy fraction of the kernel left beyond the sampled window
            (zero for closed forms).
    """

    col: np.ndarray
    points: np.ndarray
    dt: float
    label: str = "U"
    tail: float = 0.0

    def __post_init__(self):
        col = np.asarray(self.col, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        if col.ndim != 1 or pts.shape != (col.size + 1,):
            raise ConfigError("kernel needs T bin integrals and T + 1 point values")
        col.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "col", col)
        object.__setattr__(self, "points", pts)

    @property
    def steps(self):
        return self.col.size

    def matrix(self):
        """Dense ``T x T`` lower triangular Toeplitz matrix (oracle use only)."""
        return toeplitz(self.col, np.zeros(self.steps))

    def to_rows(self):
        t = np.arange(self.steps + 1) * self.dt
        return t, self.points


def uv_fourier(g, l, xi, tol=1e-12):
    """Transfer functions ``(u_hat, v_hat)`` at frequency ``xi`` (scalar or array)."""
    xi = np.asarray(xi, dtype=float)
    gh = g.fourier(xi)
    den = l * gh + 2j * np.pi * xi
    bad = np.abs(den) <= tol * max(abs(l) * g.total_variation, 1.0)
    if np.any(bad):
        where = float(np.atleast_1d(xi)[np.atleast_1d(bad)][0])
        raise PoleError(f"l*g_hat + 2i pi xi vanishes at xi={where:.6g}", xi=where)
    u = 1.0 / den
    return u, gh * u


def closed_form_ou(l, t):
    """``exp(-l t) H(t)``, with ``H(0) = 1``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 0, np.exp(-l * np.clip(t, 0, None)), 0.0)
    return out[()] if out.ndim == 0 else out


def _exp_rates(beta, l_eff):
    """Roots ``a, b`` of ``s^2 - beta s + l_eff beta`` written as decay rates.

    ``v_hat = m beta / ((a + 2i pi xi)(b + 2i pi xi))`` with ``a + b = beta`` and
    ``a b = l_eff beta``. Returns ``None`` for the repeated-root case ``beta = 4 l_eff``.
    """
    disc = 1.0 - 4.0 * l_eff / beta
    if abs(disc) < 1e-12:
        return None
    if disc > 0:
        delta = np.sqrt(disc)
        # b = beta (1 - delta) / 2 rewritten to avoid cancellation for large beta
        return beta * (1 + delta) / 2, 2 * l_eff / (1 + delta)
    delta = np.sqrt(-disc)
    a = beta / 2 * (1 + 1j * delta)
    return a, np.conj(a)


def closed_form_exp(beta, l, t, mass=1.0):
    """Kernels ``(u, v)`` for ``g = mass * beta * exp(-beta x) H(x)``.

    Equivalent to the hyperbolic forms ``v = (2/D) e^{-beta t/2} sh(beta D t/2)``,
    ``u = (1/D) e^{-beta t/2} (sh(beta D t/2) + D ch(beta D t/2))`` with
    ``D = sqrt(1 - 4 l / beta)`` (trigonometric when ``beta < 4 l``), evaluated
    through the two decay rates so that large ``beta`` does not overflow.
    """
    t = np.asarray(t, dtype=float)
    tt = np.clip(t, 0, None)
    rates = _exp_rates(beta, l * mass)
    if rates is None:
        a = beta / 2
        e = np.exp(-a * tt)
        v = mass * beta * tt * e
        u = (1 + a * tt) * e
    else:
        a, b = rates
        ea, eb = np.exp(-a * tt), np.exp(-b * tt)
        v = np.real(mass * beta * (eb - ea) / (a - b))
        u = np.real((a * eb - b * ea) / (a - b))
    mask = t >= 0
    u, v = np.where(mask, u, 0.0), np.where(mask, v, 0.0)
    if u.ndim == 0:
        return u[()], v[()]
    return u, v


def _exp_bins(rate, t0, dt):
    """``int_{t0}^{t0+dt} exp(-rate t) dt`` for (possibly complex) ``rate``."""
    rate = complex(rate)
    if abs(rate) * dt < 1e-300:
        return np.full(np.shape(t0), dt)
    return np.exp(-rate * t0) * (-np.expm1(-rate * dt)) / rate


def _texp_bins(rate, t0, dt):
    """``int_{t0}^{t0+dt} t exp(-rate t) dt`` for real ``rate > 0``."""
    def prim(t):
        return -np.exp(-rate * t) * (t / rate + 1 / rate**2)

    return prim(t0 + dt) - prim(t0)


def _closed_form_kernels(g, l, grid):
    T, dt = grid.steps, grid.dt
    t_pts = np.arange(T + 1) * dt
    t0 = t_pts[:-1]
    if g.is_dirac_only():
        w = g.weight_at_zero
        rate = l * w
        col_u = np.real(_exp_bins(rate, t0, dt))
        pts_u = np.exp(-rate * t_pts)
        return (
            ToeplitzKernel(col_u, pts_u, dt, "U"),
            ToeplitzKernel(w * col_u, w * pts_u, dt, "V"),
        )
    (mass, beta), = g.exp_terms
    pts_u, pts_v = closed_form_exp(beta, l, t_pts, mass)
    rates = _exp_rates(beta, l * mass)
    if rates is None:
        a = beta / 2
        ea = _exp_bins(a, t0, dt).real
        ta = _texp_bins(a, t0, dt)
        col_v = mass * beta * ta
        col_u = ea + a * ta
    else:
        a, b = rates
        ea, eb = _exp_bins(a, t0, dt), _exp_bins(b, t0, dt)
        col_v = np.real(mass * beta * (eb - ea) / (a - b))
        col_u = np.real((a * eb - b * ea) / (a - b))
    return ToeplitzKernel(col_u, pts_u, dt, "U"), ToeplitzKernel(col_v, pts_v, dt, "V")


def has_closed_form(g):
    return g.is_dirac_only() or (not g.atoms and len(g.exp_terms) == 1)


def _reference_rate(g, l, tau):
    c = l * g.weight_at_zero
    if c > 0:
        return c
    c = l * g.total_mass
    if c > 0:
        return c
    return 4.0 / tau


def _singular_parts(g, c, t_pts, dt):
    """Point values and bin integrals of ``s(t) = e^{-ct} H(t)`` and of ``g * s``."""
    t0 = t_pts[:-1]
    s_pts = np.exp(-c * t_pts)
    s_bins = _exp_bins(c, t0, dt).real
    gs_pts = np.zeros_like(t_pts)
    gs_bins = np.zeros_like(t0)
    eps = 1e-9 * dt
    for w, lag in g.atoms:
        on = t_pts >= lag - eps
        gs_pts += w * np.where(on, np.exp(-c * np.clip(t_pts - lag, 0, None)), 0.0)
        lo = np.clip(t0, lag, None)
        hi = t0 + dt
        width = np.clip(hi - lo, 0, None)
        gs_bins += w * np.where(width > 0, np.exp(-c * (lo - lag)) * (-np.expm1(-c * width)) / c, 0.0)
    for m, b in g.exp_terms:
        if abs(b - c) < 1e-9 * b:
            gs_pts += m * b * t_pts * np.exp(-c * t_pts)
            gs_bins += m * b * _texp_bins(c, t0, dt)
        else:
            gs_pts += m * b * (np.exp(-c * t_pts) - np.exp(-b * t_pts)) / (b - c)
            gs_bins += m * b * (s_bins - _exp_bins(b, t0, dt).real) / (b - c)
    return s_pts, s_bins, gs_pts, gs_bins


def _bin_energy(x, over, dtf):
    nb = x.size // over
    return float(np.sum((x[: nb * over].reshape(nb, over).sum(axis=1) * dtf) ** 2))


def sample_kernel_ifft(g, l, grid, pad=4, oversample=16, causality_tol=1e-6,
                       tail_tol=1e-10, max_doublings=6):
    """Build ``U`` and ``V`` numerically from their transfer functions.

    The jump of ``u`` at 0 (and the jumps of ``v`` at every atom lag) are
    removed analytically by subtracting ``e^{-ct} H(t)`` and ``g * e^{-ct} H``;
    the continuous remainder is sampled on a DFT grid ``oversample`` times finer
    than ``dt`` over a window at least ``pad * tau`` long, inverse transformed
    and bin-integrated with composite Simpson's rule.

    Raises:
        CausalityError: the remainder carries more than ``causality_tol`` of
            the kernel energy at negative times (infeasible ``l`` for this g).
        PoleError: a pole of the transfer function falls on the DFT grid.
    """
    if pad < 4:
        raise ConfigError("zero-padding factor must be >= 4")
    if oversample % 2:
        raise ConfigError("oversample must be even (Simpson's rule)")
    T, dt = grid.steps, grid.dt
    dtf = dt / oversample
    c = _reference_rate(g, l, grid.tau)
    t_pts = np.arange(T + 1) * dt
    s_pts, s_bins, gs_pts, gs_bins = _singular_parts(g, c, t_pts, dt)

    m_total = pad * T * oversample
    for _ in range(max_doublings + 1):
        xi = sfft.rfftfreq(m_total, dtf)
        u_hat, v_hat = uv_fourier(g, l, xi)
        r_u_hat = u_hat - 1.0 / (c + 2j * np.pi * xi)
        # irfft drops the imaginary part of the Nyquist bin: Hermitian symmetrization
        r_u = sfft.irfft(r_u_hat, m_total) / dtf
        r_v = sfft.irfft(g.fourier(xi) * r_u_hat, m_total) / dtf
        half = m_total // 2
        band = slice(half - m_total // 8, half)
        tail = max(_tail_fraction(r_u, band, half), _tail_fraction(r_v, band, half))
        if tail < tail_tol:
            break
        m_total *= 2

    n_fine = T * oversample + 1
    w = np.ones(oversample + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    w *= dtf / 3
    idx = np.arange(T)[:, None] * oversample + np.arange(oversample + 1)[None, :]

    kernels = []
    for label, r, sp, sb in (("U", r_u, s_pts, s_bins), ("V", r_v, gs_pts, gs_bins)):
        col = r[:n_fine][idx] @ w + sb
        pts = r[: n_fine : oversample] + sp
        neg = _bin_energy(r[half:], oversample, dtf)
        pos = float(np.sum(col**2)) + _bin_energy(r[n_fine:half], oversample, dtf)
        if pos == 0 or neg > causality_tol * pos:
            raise CausalityError(
                f"kernel {label} is not causal for l={l}: negative-time energy ratio "
                f"{neg / pos if pos else float('inf'):.3g} (tolerance {causality_tol:g})"
            )
        kernels.append(ToeplitzKernel(col, pts, dt, label, tail=tail))
    return tuple(kernels)


def _tail_fraction(r, band, half):
    total = float(np.sum(r[:half] ** 2))
    return float(np.sum(r[band] ** 2)) / total if total > 0 else 0.0


def build_kernels(g, l, grid, method="auto", **kwargs):
    """``(U, V)`` on ``grid``: analytic bins when a closed form exists, else IFFT sampling."""
    if method not in ("auto", "closed", "ifft"):
        raise ConfigError(f"unknown kernel method {method!r}")
    if method == "closed" or (method == "auto" and has_closed_form(g)):
        if not has_closed_form(g):
            raise ConfigError("no closed form for this delay kernel")
        return _closed_form_kernels(g, l, grid)
    return sample_kernel_ifft(g, l, grid, **kwargs)


# largest real transform (points) kept per row; longer products are split in two
# halves so each FFT stays cache resident
FFT_BUDGET = 2**16


def _conv_direct(col, field, workers):
    T = field.shape[-1]
    n = sfft.next_fast_len(2 * T, real=True)
    ff = sfft.rfft(field, n, axis=-1, workers=workers)
    ff *= sfft.rfft(col, n)
    return sfft.irfft(ff, n, axis=-1, overwrite_x=True, workers=workers)[..., :T]


def _conv_split(col, field, workers):
    # with col = (c0, c1) and field = (f0, f1) in time halves of length h:
    # out[:2h] = c0 * f0 and out[h:] += (c0 * f1 + c1 * f0)[:T - h]
    T = field.shape[-1]
    h = (T + 1) // 2
    n = sfft.next_fast_len(2 * h, real=True)
    c0, c1 = sfft.rfft(col[:h], n), sfft.rfft(col[h:], n)
    f0 = sfft.rfft(field[..., :h], n, axis=-1, workers=workers)
    f1 = sfft.rfft(field[..., h:], n, axis=-1, workers=workers)
    f1 *= c0
    f1 += f0 * c1
    f0 *= c0
    y = sfft.irfft(f0, n, axis=-1, overwrite_x=True, workers=workers)
    y[..., h:T] += sfft.irfft(f1, n, axis=-1, overwrite_x=True, workers=workers)[..., : T - h]
    return y[..., :T]


def _causal_conv(col, field, workers=None):
    field = np.asarray(field, dtype=float)
    T = field.shape[-1]
    n = sfft.next_fast_len(2 * T, real=True)
    conv = _conv_direct if n <= FFT_BUDGET or T < 4 else _conv_split
    if field.ndim == 1:
        return conv(col, field, workers)
    rows = field.reshape(-1, T)
    chunk = max(1, FFT_BUDGET // n)
    if chunk >= rows.shape[0]:
        return conv(col, rows, workers).reshape(field.shape)
    out = np.empty_like(rows)
    for i in range(0, rows.shape[0], chunk):
        out[i : i + chunk] = conv(col, rows[i : i + chunk], workers)
    return out.reshape(field.shape)


def apply(k, field, workers=None):
    """Causal Toeplitz product: ``out[:, i] = sum_{j <= i} col[i - j] field[:, j]``.

    Done by zero-padded real FFTs of length >= 2T, so rows cost O(T log T).
    Long rows are processed in two time halves and in row chunks so that
    each transform fits in cache; the result is the same product.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[-1] != k.steps:
        raise ConfigError(f"field has {field.shape[-1]} time columns, kernel has {k.steps}")
    return _causal_conv(k.col, field, workers)


def apply_atomic(k, atom_coeffs, u_pointvalues=None):
    """Response to a Dirac at ``t = 0``: row ``x`` is ``c_x * u(t_i)``."""
    pts = k.points[: k.steps] if u_pointvalues is None else np.asarray(u_pointvalues, dtype=float)
    return np.outer(np.atleast_1d(atom_coeffs), pts)


def delay_one_step(y):
    """Shift a field one step later in time with zero fill.

    ``apply`` on bin values returns the response at the right edge of each bin;
    shifting aligns it with the grid point ``t_i``.
    """
    out = np.zeros_like(y)
    out[..., 1:] = y[..., :-1]
    return out
