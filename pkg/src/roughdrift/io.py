"""CSV and JSON import/export.

Formats (comma separated, one header line, values written with ``%.17g`` so a
write/read cycle is exact):

* level-1 points: ``t,x_1,...,x_d``
* lifted rough paths: ``t,x_1,...,x_d,x2_1_1,x2_1_2,...,x2_d_d`` (level 2 row-major)
* trajectories in R^m: ``t,y_1,...,y_m``
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .drivers import SampledRoughPath
from .errors import ConfigurationError


def _write(path, header, table):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(table), delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    return path


def _read(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ConfigurationError(f"{path}: {data.shape[1]} columns but {len(header)} header fields")
    return header, data


def write_points_csv(path, times, points):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    header = ["t"] + [f"x_{i + 1}" for i in range(x.shape[1])]
    return _write(path, header, np.column_stack([np.asarray(times, dtype=float), x]))


def read_points_csv(path):
    """Returns ``(times, points)`` with points of shape ``(n, d)``."""
    header, data = _read(path)
    if header[0] != "t" or not all(h.startswith("x_") for h in header[1:]):
        raise ConfigurationError(f"{path}: expected header t,x_1..x_d, got {','.join(header)}")
    return data[:, 0], data[:, 1:]


def write_rough_path_csv(path, rp: SampledRoughPath):
    d = rp.dim
    header = ["t"] + [f"x_{i + 1}" for i in range(d)]
    header += [f"x2_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    table = np.column_stack([rp.times, rp.level1, rp.level2.reshape(rp.n_points, d * d)])
    return _write(path, header, table)


def read_rough_path_csv(path, p_hint=2.5) -> SampledRoughPath:
    header, data = _read(path)
    ncol = data.shape[1] - 1
    d = int(round((-1 + np.sqrt(1 + 4 * ncol)) / 2))
    if d < 1 or d + d * d != ncol or header[0] != "t":
        raise ConfigurationError(f"{path}: header does not describe a lifted path")
    return SampledRoughPath(data[:, 0], data[:, 1:1 + d], data[:, 1 + d:].reshape(-1, d, d), p_hint)


def write_trajectory_csv(path, times, values):
    y = np.asarray(values, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    header = ["t"] + [f"y_{i + 1}" for i in range(y.shape[1])]
    return _write(path, header, np.column_stack([np.asarray(times, dtype=float), y]))


def read_trajectory_csv(path):
    header, data = _read(path)
    if header[0] != "t" or not all(h.startswith("y_") for h in header[1:]):
        raise ConfigurationError(f"{path}: expected header t,y_1..y_m")
    return data[:, 0], data[:, 1:]


def write_table_csv(path, columns: dict):
    """Write equal-length named columns."""
    names = list(columns)
    table = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    return _write(path, names, table)


def read_table_csv(path) -> dict:
    header, data = _read(path)
    return {h: data[:, i] for i, h in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_jsonable, allow_nan=True))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
