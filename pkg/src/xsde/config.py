"""JSON run configuration to library objects.

Every failure raises ``ConfigError`` naming either the JSON line/column or
the dotted path of the offending field.
"""

import json

import numpy as np

from .errors import ConfigError
from .grid import TimeGrid
from .kernels import DelayKernel, HistoryFunction, snap_lag
from .learning import LearningProblem
from .presets import HeatPreset
from .solver import Problem
from .spectral import SpaceOperator

_MISSING = object()


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return loads(text, source=path)


def loads(text, source="<config>"):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{source}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return obj


def field_value(obj, key, path, kind=None, default=_MISSING):
    where = f"{path}.{key}" if path else key
    if not isinstance(obj, dict):
        raise ConfigError(f"field '{path}': expected an object")
    if key not in obj:
        if default is _MISSING:
            raise ConfigError(f"field '{where}': required")
        return default
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"field '{where}': expected a number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"field '{where}': expected an integer, got {val!r}")
        return val
    if kind is bool and not isinstance(val, bool):
        raise ConfigError(f"field '{where}': expected true/false, got {val!r}")
    if kind is dict and not isinstance(val, dict):
        raise ConfigError(f"field '{where}': expected an object")
    return val


def _array(val, where, ndim=None):
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{where}': expected numbers") from None
    if ndim is not None and arr.ndim != ndim:
        raise ConfigError(f"field '{where}': expected a {ndim}-d array, got shape {arr.shape}")
    return arr


def _wrap(where, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as err:
        raise ConfigError(f"field '{where}': {err}") from None


def parse_grid(obj, path="grid"):
    dt = field_value(obj, "dt", path, float)
    if "steps" in obj:
        return _wrap(path, TimeGrid, dt, field_value(obj, "steps", path, int))
    tau = field_value(obj, "tau", path, float)
    return _wrap(path, TimeGrid.from_tau, tau, dt)


def parse_kernel(obj, path):
    return _wrap(path, DelayKernel.from_json, obj)


def _parse_operator(prob, path):
    if "A" in prob:
        return _wrap(f"{path}.A", SpaceOperator, _array(prob["A"], f"{path}.A", 2))
    if "A_circulant" in prob:
        row = _array(prob["A_circulant"], f"{path}.A_circulant", 1)
        return _wrap(f"{path}.A_circulant", SpaceOperator.from_circulant, row)
    raise ConfigError(f"field '{path}': needs 'A', 'A_circulant' or 'preset'")


def _parse_history(obj, n, g, dt, path):
    need = snap_lag(g.max_lag, dt)
    if obj is None:
        return HistoryFunction.zeros(n, dt, need)
    if "constant" in obj:
        value = _array(obj["constant"], f"{path}.constant", 1)
        length = field_value(obj, "length", path, int, default=need)
        return _wrap(path, HistoryFunction.constant, value, dt, length)
    x0 = _array(field_value(obj, "x0", path), f"{path}.x0", 1)
    samples = _array(obj.get("samples", np.zeros((n, 0))), f"{path}.samples")
    if samples.size == 0:
        samples = np.zeros((x0.size, 0))
    return _wrap(path, HistoryFunction, samples, x0, dt)


def parse_problem(cfg):
    """Return ``(Problem, HeatPreset or None)`` from the ``problem`` and ``grid`` sections."""
    prob = field_value(cfg, "problem", "", dict)
    grid = parse_grid(field_value(cfg, "grid", "", dict))
    preset = prob.get("preset")
    if preset is not None:
        if preset != "heat":
            raise ConfigError(f"field 'problem.preset': unknown preset {preset!r}")
        heat = _wrap(
            "problem",
            HeatPreset,
            n=field_value(prob, "n", "problem", int, default=100),
            dx=field_value(prob, "dx", "problem", float, default=None),
            sigma=field_value(prob, "sigma", "problem", float, default=0.1),
            l=None,
        )
        return heat.problem(grid), heat
    a = _parse_operator(prob, "problem")
    g = parse_kernel(field_value(prob, "g", "problem", default={"atoms": [{"weight": 1.0, "lag": 0.0}]}), "problem.g")
    sigma = prob.get("sigma", 0.0)
    sigma = _array(sigma, "problem.sigma")
    inp = prob.get("input")
    if inp is not None:
        inp = _array(inp, "problem.input")
    hist = _parse_history(prob.get("history"), a.n, g, grid.dt, "problem.history")
    p = _wrap("problem", Problem, A=a, g=g, grid=grid, sigma=sigma, input=inp, history=hist)
    return p, None


def parse_expansion(cfg, heat=None):
    """Return a dict of expansion settings; ``l`` is a float or the string ``"auto"``."""
    exp = field_value(cfg, "expansion", "", dict, default={})
    l = exp.get("l", _MISSING)
    if l is _MISSING:
        if heat is None:
            raise ConfigError("field 'expansion.l': required (number or \"auto\")")
        l = heat.l
    elif l != "auto":
        l = field_value(exp, "l", "expansion", float)
        if l == 0:
            raise ConfigError("field 'expansion.l': must be non-zero")
    return {
        "l": l,
        "k_max": field_value(exp, "k_max", "expansion", int, default=2000 if heat else 64),
        "term_tol": field_value(exp, "term_tol", "expansion", float, default=1e-8),
        "allow_infeasible": field_value(exp, "allow_infeasible", "expansion", bool, default=heat is not None),
        "v_rule": field_value(exp, "v_rule", "expansion", default="left"),
    }


def parse_learning(cfg, seed=0):
    lc = field_value(cfg, "learning", "", dict)
    l = field_value(lc, "l", "learning", float, default=1.0)
    tau = field_value(lc, "tau", "learning", float, default=1.0)
    epsilon = field_value(lc, "epsilon", "learning", float, default=1e-3)
    inp = field_value(lc, "input", "learning")
    if isinstance(inp, dict):
        if "random" in inp:
            rnd = field_value(inp, "random", "learning.input", dict)
            n = field_value(rnd, "n", "learning.input.random", int)
            T = field_value(rnd, "steps", "learning.input.random", int)
            scale = field_value(rnd, "scale", "learning.input.random", float, default=1.0)
            inp = scale * np.random.default_rng(seed).standard_normal((n, T))
        elif "constant" in inp:
            value = _array(inp["constant"], "learning.input.constant", 1)
            T = field_value(inp, "steps", "learning.input", int, default=32)
            inp = np.repeat(value[:, None], T, axis=1)
        else:
            raise ConfigError("field 'learning.input': expected a matrix, {'random': ...} or {'constant': ...}")
    else:
        inp = _array(inp, "learning.input", 2)
    T = inp.shape[1]
    grid = _wrap("learning.tau", TimeGrid, tau / T, T)
    kappas = lc.get("kappa", 1e3)
    kappas = [kappas] if not isinstance(kappas, list) else kappas
    if not kappas:
        raise ConfigError("field 'learning.kappa': empty sweep")
    problems = [
        _wrap("learning", LearningProblem, inp, l, float(k), grid, epsilon) for k in kappas
    ]
    orders = field_value(lc, "orders", "learning", default=[32, 32])
    if not (isinstance(orders, list) and len(orders) == 2 and all(isinstance(o, int) and o >= 0 for o in orders)):
        raise ConfigError("field 'learning.orders': expected [k_max, q_max] non-negative integers")
    return problems, {
        "orders": tuple(orders),
        "simulate": field_value(lc, "simulate", "learning", bool, default=False),
        "max_iter": field_value(lc, "max_iter", "learning", int, default=500),
        "tol": field_value(lc, "tol", "learning", float, default=1e-13),
    }
