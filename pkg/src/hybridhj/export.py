"""CSV and JSON writers with lossless 17-significant-digit floats."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .phase import wrap_angles


def fmt(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return fmt(v)
        return v
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def dumps(obj: Any) -> str:
    """JSON text with sorted keys and every float written with 17 significant digits.

    Non-finite floats become the strings ``"nan"``, ``"inf"`` and ``"-inf"``.
    """
    return _dump(_plain(obj), 0)


def _dump(o: Any, level: int) -> str:
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(o[k], level + 1)}" for k in sorted(o)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_dump(v, level + 1) for v in o) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, level + 1) for v in o) + "\n" + end + "]"
    if isinstance(o, float):
        return fmt(o)
    return json.dumps(o)


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def trajectory_rows(traj, angle_indices: Sequence[int] = ()) -> list[list[str]]:
    ts, xs, idx = traj.samples()
    n = traj.n
    q = wrap_angles(xs[:, :n], angle_indices) if angle_indices else xs[:, :n]
    rows = []
    for t, qi, pi, k in zip(ts, q, xs[:, n:], idx):
        rows.append([fmt(t), *map(fmt, qi), *map(fmt, pi), str(int(k))])
    return rows


def write_trajectory_csv(path, traj, angle_indices: Sequence[int] = ()) -> None:
    """One row per stored sample: ``t, q..., p..., segment_index``.

    Angle coordinates are reduced to (-pi, pi] here and nowhere else.
    """
    n = traj.n
    header = ["t", *(f"q{i}" for i in range(n)), *(f"p{i}" for i in range(n)), "segment_index"]
    lines = [",".join(header)] + [",".join(r) for r in trajectory_rows(traj, angle_indices)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:-1], data[:, -1].astype(int)


def events_payload(traj) -> dict:
    return {
        "termination": traj.termination,
        "events": [
            {
                "t": e.t,
                "guard_id": e.guard_id,
                "x_minus": e.x_minus.as_array(),
                "x_plus": e.x_plus.as_array(),
                "cleared": e.cleared,
            }
            for e in traj.events
        ],
    }


def write_events_json(path, traj) -> None:
    write_json(path, events_payload(traj))
