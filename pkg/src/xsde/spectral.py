"""Spectral condition, shift search and convergence-domain scans.

The expansion converges when

    lambda = ||l Id + A|| / inf_xi |l + 2i pi xi / g_hat(xi)| < 1,

i.e. when the spectrum of ``A`` fits in a ball centred at ``-l`` that stays
clear of the curve ``xi -> 2i pi xi / g_hat(xi)``. Infima are taken over a
finite frequency grid; a grid infimum can only overestimate the true one, so
reports keep the grid for later refinement.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, UnsupportedOperatorError
from .kernels import POLE_TOL, fourier


class SpaceOperator:
    """Real ``n x n`` operator acting on the space index.

    A circulant operator is stored with its generating first row
    ``c`` (``M[i, j] = c[(j - i) % n]``) so that spectra and products can use
    FFTs.
    """

    def __init__(self, matrix, circulant_row=None):
        m = np.array(matrix, dtype=float)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(f"space operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConfigError("space operator has non-finite entries")
        self.matrix = m
        self.matrix.setflags(write=False)
        self.circulant_row = None
        if circulant_row is not None:
            row = np.asarray(circulant_row, dtype=float)
            if not np.allclose(_circulant_from_row(row), m, rtol=0, atol=1e-12 * (1 + np.abs(m).max())):
                raise ConfigError("matrix is not the circulant generated by the given row")
            self.circulant_row = row

    @classmethod
    def from_circulant(cls, row):
        row = np.asarray(row, dtype=float)
        return cls(_circulant_from_row(row), circulant_row=row)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def is_circulant(self):
        return self.circulant_row is not None

    def is_symmetric(self):
        m = self.matrix
        return np.allclose(m, m.T, rtol=0, atol=1e-13 * (1 + np.abs(m).max()))

    def is_normal(self):
        m = self.matrix
        scale = 1 + np.abs(m).max() ** 2
        return np.allclose(m @ m.T, m.T @ m, rtol=0, atol=1e-12 * scale)

    def shifted(self, l):
        """Return ``W = l Id + A``."""
        if self.is_circulant:
            row = self.circulant_row.copy()
            row[0] += l
            return SpaceOperator.from_circulant(row)
        return SpaceOperator(self.matrix + l * np.eye(self.n))

    def eigenvalues(self):
        """Eigenvalues; circulant ones are ordered by Fourier mode index."""
        if self.is_circulant:
            return np.fft.ifft(self.circulant_row) * self.n
        if self.is_symmetric():
            return linalg.eigvalsh(self.matrix).astype(complex)
        return linalg.eigvals(self.matrix)

    def matmul(self, x):
        """``A . X`` for ``X`` of shape ``(n,)`` or ``(n, T)``."""
        if self.is_circulant and self.n > 16:
            col = np.roll(self.circulant_row[::-1], 1)
            fx = np.fft.rfft(x, axis=0)
            shape = (-1,) + (1,) * (fx.ndim - 1)
            return np.fft.irfft(np.fft.rfft(col).reshape(shape) * fx, n=self.n, axis=0)
        return self.matrix @ x

    def __repr__(self):
        kind = "circulant" if self.is_circulant else "dense"
        return f"SpaceOperator(n={self.n}, {kind})"


def _circulant_from_row(row):
    n = row.size
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return row[idx]


def as_operator(a):
    return a if isinstance(a, SpaceOperator) else SpaceOperator(a)


def operator_norm(w):
    """Spectral 2-norm (largest singular value)."""
    w = as_operator(w)
    if w.is_circulant:
        return float(np.abs(w.eigenvalues()).max())
    if w.is_symmetric():
        ev = linalg.eigvalsh(w.matrix)
        return float(np.abs(ev).max())
    return float(linalg.norm(w.matrix, 2))


def dft_frequencies(grid):
    """Frequencies ``j / tau`` for ``j in [-T/2, T/2)``: the ones the discrete scheme touches."""
    return np.fft.fftshift(np.fft.fftfreq(grid.steps, grid.dt))


@dataclass
class SpectralReport:
    l: float
    lam: float
    feasible: bool
    w_norm: float
    inf_curve_dist: float
    eigenvalues: np.ndarray
    xi: np.ndarray
    curve: np.ndarray
    argmin_xi: float = float("nan")
    per_mode_ratios: list = None
    warnings: list = field(default_factory=list)

    def to_json(self):
        out = {
            "l": self.l,
            "lambda": self.lam,
            "feasible": bool(self.feasible),
            "w_norm": self.w_norm,
            "inf_curve_dist": self.inf_curve_dist,
            "argmin_xi": self.argmin_xi,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "grid": {"xi_min": float(self.xi.min()), "xi_max": float(self.xi.max()), "points": int(self.xi.size)},
            "warnings": list(self.warnings),
        }
        if self.per_mode_ratios is not None:
            out["per_mode_ratios"] = [[int(k), float(r)] for k, r in self.per_mode_ratios]
        return out


def _curve_distance(g, l, xi):
    """``min_xi |l + 2i pi xi / g_hat(xi)|`` skipping poles; returns (dist, argmin, curve, n_poles)."""
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        raise ConfigError("frequency grid is empty")
    gh = fourier(g, xi)
    pole = np.abs(gh) <= POLE_TOL * g.total_variation
    crv = np.full(xi.shape, np.nan + 1j * np.nan)
    crv[~pole] = 2j * np.pi * xi[~pole] / gh[~pole]
    if np.all(pole):
        return np.inf, float("nan"), crv, int(pole.sum())
    dist = np.abs(l + crv)
    dist[pole] = np.inf
    k = int(np.argmin(dist))
    return float(dist[k]), float(xi[k]), crv, int(pole.sum())


def contraction_ratio(a, g, l, xi_grid):
    """Evaluate the spectral condition for shift ``l`` on a frequency grid."""
    if l == 0:
        raise ConfigError("shift l must be non-zero")
    a = as_operator(a)
    w_norm = operator_norm(a.shifted(l))
    dist, argmin, crv, n_poles = _curve_distance(g, l, xi_grid)
    warnings = []
    if n_poles:
        warnings.append(f"{n_poles} grid frequencies at poles of the curve were excluded")
    lam = w_norm / dist if dist > 0 else np.inf
    return SpectralReport(
        l=float(l),
        lam=float(lam),
        feasible=bool(lam < 1),
        w_norm=w_norm,
        inf_curve_dist=dist,
        eigenvalues=a.eigenvalues(),
        xi=np.asarray(xi_grid, dtype=float),
        curve=crv,
        argmin_xi=argmin,
        warnings=warnings,
    )


def per_mode_ratios(a, g, l, xi_grid):
    """Per-eigenvalue ratios ``|l + a_k| / inf_xi |l + curve|``.

    Shows which spatial modes converge even when the global ratio is >= 1.
    """
    a = as_operator(a)
    if not (a.is_circulant or a.is_symmetric() or a.is_normal()):
        raise UnsupportedOperatorError("per-mode analysis needs a symmetric, circulant or normal operator")
    dist, _, _, _ = _curve_distance(g, l, xi_grid)
    ev = a.eigenvalues()
    return [(k, float(abs(l + z) / dist)) for k, z in enumerate(ev)]


def default_candidates(a, count=64):
    a = as_operator(a)
    scale = float(np.abs(a.eigenvalues()).max()) or 1.0
    mags = np.logspace(-3, 6, count) * scale
    return np.concatenate([-mags[::-1], mags])


def search_l(a, g, candidates=None, xi_grid=None):
    """Return the report with the smallest contraction ratio among ``candidates``.

    The caller decides what to do when ``report.feasible`` is False.
    """
    a = as_operator(a)
    cands = default_candidates(a) if candidates is None else np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ConfigError("no candidate shifts given")
    if np.any(cands == 0):
        raise ConfigError("candidate shifts must be non-zero")
    if xi_grid is None:
        xi_grid = np.linspace(-50, 50, 4001)
    best = None
    for l in cands:
        rep = contraction_ratio(a, g, l, xi_grid)
        if best is None or rep.lam < best.lam:
            best = rep
    return best


def domain_scan(g, l_values, xi_values, radii):
    """Feasibility atlas: ``(l, r)`` is feasible iff ``r < min_xi |l + curve(xi)|``.

    Returns a list of rows ``(l, r, feasible, min_dist)``.
    """
    l_values = np.asarray(l_values, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if l_values.size == 0 or radii.size == 0:
        raise ConfigError("domain scan needs non-empty l and radius grids")
    rows = []
    for l in l_values:
        d, _, _, _ = _curve_distance(g, l, xi_values)
        for r in radii:
            rows.append((float(l), float(r), bool(r < d), d))
    return rows


def feasible_region_is_nonconvex(rows):
    """True if two feasible ``(l, r)`` points of a scan have an infeasible grid midpoint."""
    table = {(l, r): ok for l, r, ok, _ in rows}
    ls = sorted({l for l, _, _, _ in rows})
    rs = sorted({r for _, r, _, _ in rows})
    for r in rs:
        for i in range(len(ls)):
            for j in range(i + 2, len(ls)):
                if (j - i) % 2:
                    continue
                mid = ls[(i + j) // 2]
                if table[(ls[i], r)] and table[(ls[j], r)] and not table[(mid, r)]:
                    return True
    return False
