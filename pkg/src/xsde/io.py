"""CSV/JSON writers. Output is byte-stable: fixed float format, sorted keys."""

import json
from pathlib import Path

import numpy as np


def write_csv(path, header, columns):
    """Write equal-length columns under a mandatory header row."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def write_field(path, times, samples):
    """Rows are time steps: ``t, x0, x1, ...``."""
    samples = np.atleast_2d(samples)
    header = ["t"] + [f"x{j}" for j in range(samples.shape[0])]
    write_csv(path, header, [times, *samples])


def write_matrix(path, m):
    m = np.atleast_2d(m)
    header = [f"c{j}" for j in range(m.shape[1])]
    write_csv(path, header, list(m.T))


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    # JSON has no NaN/inf
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_default) + "\n")
