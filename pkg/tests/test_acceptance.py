"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest

from xsde.cli import main as cli_main
from xsde.errors import CausalityError, DivergenceError
from xsde.grid import TimeGrid
from xsde.kernels import DelayKernel, HistoryFunction
from xsde.learning import LearningProblem, equilibrium_fixed_point, leading_order, scalar_equilibrium
from xsde.presets import HeatPreset, ou_problem
from xsde.solver import ExpansionConfig, Problem, euler_maruyama, expand, sample_brownian
from xsde.spectral import (
    contraction_ratio,
    dft_frequencies,
    domain_scan,
    feasible_region_is_nonconvex,
    per_mode_ratios,
)
from xsde.timeops import ToeplitzKernel, apply, build_kernels, closed_form_exp, sample_kernel_ifft

RESULTS = []

# the acceptance heat runs use the unit-spacing scaling (l = 2), see README
HEAT = HeatPreset(n=100, dx=1.0, sigma=0.1)
HEAT_SEED = 0
A22 = np.array([[-3.0, 0.1], [0.1, -3.0]])


def record(num, ok, detail):
    line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def _heat_solution(dt):
    grid = TimeGrid(dt, 500)
    p = HEAT.problem(grid)
    path = sample_brownian(HEAT_SEED, grid, HEAT.n)
    return p, path, expand(p, HEAT.expansion_config(), path)


def test_criterion_01_ou_exactness():
    t0 = time.perf_counter()
    p = ou_problem(a=1.0, x0=1.0, dt=1e-3, tau=5.0)
    sol = expand(p, ExpansionConfig(l=1.0))
    elapsed = time.perf_counter() - t0
    exact = np.exp(-p.grid.times)
    err = float(np.max(np.abs(sol.samples[0] - exact) / exact))
    higher = max(sol.term_norms[1:], default=0.0)
    ok = err <= 1e-3 and higher <= 1e-12 and elapsed < 1.0
    record(1, ok, f"sup rel err {err:.2e} (<=1e-3), max term k>=1 {higher:.1e} (<=1e-12), {elapsed:.3f}s (<1s)")


def test_criterion_02_identity_collapse():
    r = np.random.default_rng(2)
    grid = TimeGrid(0.01, 400)
    p = Problem(-3.0 * np.eye(5), DelayKernel.dirac(), grid, sigma=r.standard_normal((5, 5)),
                input=r.standard_normal((5, grid.steps)),
                history=HistoryFunction(np.zeros((5, 0)), r.standard_normal(5), grid.dt))
    sol = expand(p, ExpansionConfig(l=3.0), sample_brownian(2, grid, 5))
    worst = max(sol.term_norms[1:], default=0.0) / sol.term_norms[0]
    record(2, worst <= 1e-12, f"max term k>=1 / term 0 = {worst:.1e} (<=1e-12)")


def test_criterion_03_toeplitz_fidelity():
    r = np.random.default_rng(3)
    T = 64
    col = r.standard_normal(T)
    k = ToeplitzKernel(col, np.append(col, 0.0), 0.1)
    field = r.standard_normal((4, T))
    dense = field @ np.tril(k.matrix()).T
    err = float(np.abs(apply(k, field) - dense).max())
    grid = TimeGrid(0.01, T)
    kernels = {
        "dirac": DelayKernel.dirac(),
        "exp 2pi": DelayKernel.exponential(2 * np.pi),
        "delay a=0.3": DelayKernel.single_delay(0.3, 0.2),
        "delay a=2": DelayKernel.single_delay(2.0, 0.1),
        "mixed": DelayKernel(atoms=((1.0, 0.0), (0.4, 0.05)), exp_terms=((0.5, 3.0),)),
    }
    causal = True
    for g in kernels.values():
        try:
            pair = sample_kernel_ifft(g, 1.0, grid)
        except CausalityError:
            causal = False
            continue
        for ker in pair:
            j = 10
            imp = np.zeros((1, T))
            imp[0, j] = 1.0
            resp = apply(ker, imp)[0]
            causal &= bool(np.all(resp[:j] == 0) or np.abs(resp[:j]).max() <= 1e-14)
    ok = err <= 1e-10 and causal
    record(3, ok, f"apply vs dense {err:.1e} (<=1e-10); impulse causality for {len(kernels)} IFFT kernel pairs: {causal}")


def test_criterion_04_exponential_closed_forms():
    beta, l = 2 * np.pi, 1.0
    grid = TimeGrid(0.01, 500)
    g = DelayKernel.exponential(beta)
    Uc, Vc = build_kernels(g, l, grid, method="closed")
    Ui, Vi = build_kernels(g, l, grid, method="ifft")
    errs = [
        rel_l2(Ui.col, Uc.col),
        rel_l2(Vi.col, Vc.col),
        rel_l2(Ui.points, Uc.points),
        rel_l2(Vi.points, Vc.points),
    ]
    # v = u * g by composite Simpson on a fine grid
    h = 1e-4
    t = np.arange(0, 3 + h / 2, h)
    u, v = closed_form_exp(beta, l, t)
    idx = np.arange(0, t.size, 500)
    conv = []
    for i in idx:
        if i == 0:
            conv.append(0.0)
            continue
        s = t[: i + 1]
        f = u[i::-1] * beta * np.exp(-beta * s)
        if i % 2:
            # odd panel count: Simpson on the first i-1 panels plus a trapezoid on the last
            main = h / 3 * (f[0] + 4 * f[1:i - 1:2].sum() + 2 * f[2:i - 1:2].sum() + f[i - 1])
            conv.append(main + h / 2 * (f[i - 1] + f[i]))
        else:
            conv.append(h / 3 * (f[0] + 4 * f[1:i:2].sum() + 2 * f[2:i - 1:2].sum() + f[i]))
    ident = float(np.abs(np.array(conv) - v[idx]).max())
    ok = max(errs) <= 1e-3 and ident <= 1e-6
    record(4, ok, f"closed vs IFFT max rel L2 {max(errs):.1e} (<=1e-3); |v - u*g| {ident:.1e} (<=1e-6)")


def test_criterion_05_heat_reproduction():
    t0 = time.perf_counter()
    p, path, sol = _heat_solution(0.01)
    em = euler_maruyama(p, path)
    elapsed = time.perf_counter() - t0
    err = rel_l2(sol.samples, em.samples)
    sup_err = float(np.abs(sol.samples - em.samples).max())
    sup = float(np.abs(em.samples).max())
    ok = err <= 1e-2 and sup_err <= 1e-2 * sup and elapsed < 30
    record(5, ok, f"rel L2 {err:.2e} (<=1e-2); sup err / sup {sup_err / sup:.2e} (<=1e-2); {elapsed:.2f}s (<30s)")


def test_criterion_06_large_step_stability():
    grid = TimeGrid(1.0, 500)
    p = HEAT.problem(grid)
    path = sample_brownian(HEAT_SEED, grid, HEAT.n)
    try:
        euler_maruyama(p, path)
        em_diverged = False
    except DivergenceError:
        em_diverged = True
    big = expand(p, HEAT.expansion_config(), path)
    small = _heat_solution(0.01)[2]
    ratio = float(np.abs(big.samples).max() / np.abs(small.samples).max())
    ok = em_diverged and np.all(np.isfinite(big.samples)) and ratio <= 10
    record(6, ok, f"EM diverged: {em_diverged}; sup(dt=1)/sup(dt=0.01) = {ratio:.2f} (<=10), {big.k_used} terms")


def test_criterion_07_term_decay(tmp_path):
    cfg = {
        "problem": {"preset": "heat", "n": HEAT.n, "dx": HEAT.dx, "sigma": HEAT.sigma},
        "grid": {"dt": 0.01, "steps": 500},
        "expansion": {"term_tol": 1e-8},
        "seed": HEAT_SEED,
    }
    path = tmp_path / "heat.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = cli_main(["solve", "--config", str(path), "--out", str(out)])
    norms = np.loadtxt(out / "terms.csv", delimiter=",", skiprows=1)[:, 1]
    modes = per_mode_ratios(HEAT.operator(), DelayKernel.dirac(), HEAT.l, dft_frequencies(TimeGrid(0.01, 500)))
    bound = max(r for _, r in modes) + 0.1
    ratios = norms[2:] / norms[1:-1]
    monotone = bool(np.all(np.diff(norms[1:]) <= 0))
    ok = code == 0 and ratios.max() <= bound and monotone
    record(7, ok, f"max term ratio (k>=1) {ratios.max():.3f} (<= {bound:.2f}); terms.csv monotone after k=1: {monotone}")


def test_criterion_08_spectral_geometry():
    grid = TimeGrid(0.01, 500)
    xi = dft_frequencies(grid)
    exact = True
    for l in (0.5, 1.0, 3.0, 20.0):
        rep = contraction_ratio(np.array([[-1.0]]), DelayKernel.dirac(), l, xi)
        exact &= rep.inf_curve_dist == abs(l) and rep.argmin_xi == 0.0
    tables = {}
    for alpha in (2.0, 0.3):
        rows = domain_scan(DelayKernel.single_delay(alpha, 1.0), np.linspace(-10, 10, 201),
                           np.linspace(-5, 5, 2001), np.linspace(0, 10, 51))
        tables[alpha] = (sum(ok for _, _, ok, _ in rows), feasible_region_is_nonconvex(rows))
    shapes = all(n > 0 and nc for n, nc in tables.values())
    detail = ", ".join(f"alpha={a}: {n} feasible, nonconvex={nc}" for a, (n, nc) in tables.items())
    record(8, exact and shapes, f"inf |l + 2i pi xi| = |l| at xi=0: {exact}; {detail}")


def _order_errors(sigma, seeds, dts=(0.04, 0.02, 0.01, 0.005), tau=2.0, dt_fine=1e-5):
    fine = Problem(A22, DelayKernel.dirac(), TimeGrid.from_tau(tau, dt_fine), sigma=sigma, input=[1.0, 0.0])
    errs = np.zeros((len(seeds), len(dts)))
    for s, seed in enumerate(seeds):
        fpath = sample_brownian(seed, fine.grid, 2) if sigma else None
        ref = euler_maruyama(fine, fpath).samples
        for j, dt in enumerate(dts):
            factor = int(round(dt / dt_fine))
            p = Problem(A22, DelayKernel.dirac(), TimeGrid.from_tau(tau, dt), sigma=sigma, input=[1.0, 0.0])
            path = fpath.coarsen(factor) if fpath is not None else None
            x = expand(p, ExpansionConfig(l=3.0), path).samples
            errs[s, j] = rel_l2(x, ref[:, ::factor])
    return np.array(dts), errs.mean(axis=0)


def test_criterion_09_convergence_order():
    dts, det = _order_errors(0.0, [0])
    halving = det[:-1] / det[1:]
    det_ok = bool(np.all((halving >= 1.6) & (halving <= 2.4)))
    _, sto = _order_errors(0.5, list(range(16)))
    order = float(np.polyfit(np.log(dts), np.log(sto), 1)[0])
    sto_ok = abs(order - 0.5) <= 0.2
    record(
        9,
        det_ok and sto_ok,
        f"deterministic halving ratios {np.round(halving, 3).tolist()} (2 +-20%); "
        f"stochastic fitted order {order:.3f} (0.5 +-0.2)",
    )


def test_criterion_10_wcn_equilibrium():
    t0 = time.perf_counter()
    grid = TimeGrid(1 / 32, 32)
    inp = np.random.default_rng(10).standard_normal((2, 32))
    kappas = (1e2, 1e3, 1e4)
    dist, resid = [], []
    for kappa in kappas:
        p = LearningProblem(inp, 1.0, kappa, grid)
        fp = equilibrium_fixed_point(p)
        resid.append(fp.residual)
        dist.append(np.linalg.norm(fp.w - leading_order(p).w) / np.linalg.norm(fp.w))
    shrink = all(dist[i + 1] <= dist[i] * (kappas[i] / kappas[i + 1]) ** 0.8 for i in range(2))
    c, l, kappa = 1.0, 1.0, 10.0
    scalar = equilibrium_fixed_point(LearningProblem(np.full((1, 32), c), l, kappa, grid), orders=(60, 60))
    scalar_err = abs(scalar.w[0, 0] - scalar_equilibrium(c, l, kappa))
    elapsed = time.perf_counter() - t0
    ok = max(resid) <= 1e-10 and shrink and scalar_err <= 1e-6 and elapsed < 10
    record(
        10,
        ok,
        f"max residual {max(resid):.1e} (<=1e-10); distances {[f'{d:.2e}' for d in dist]} "
        f"(each step <= x10^-0.8); scalar vs bisection {scalar_err:.1e} (<=1e-6); {elapsed:.2f}s (<10s)",
    )


def _best_time(k, field, reps=7):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        apply(k, field)
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_11_performance():
    r = np.random.default_rng(11)
    times = {}
    for T in (2**15, 2**16):
        col = r.standard_normal(T)
        k = ToeplitzKernel(col, np.append(col, 0.0), 1e-3)
        field = r.standard_normal((16, T))
        apply(k, field)  # warm-up
        times[T] = _best_time(k, field)
    ratio = times[2**16] / times[2**15]
    record(11, ratio <= 2.5, f"apply T=2^16 / T=2^15 = {ratio:.2f} (<=2.5); {times[2**16] * 1e3:.1f} ms at 2^16")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
