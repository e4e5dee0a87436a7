import json

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hybridhj.export import (
    dumps,
    events_payload,
    fmt,
    read_trajectory_csv,
    write_events_json,
    write_trajectory_csv,
)
from hybridhj.hybrid import simulate_hybrid
from hybridhj.phase import PhasePoint
from hybridhj.scenarios import billiard, rigid_body


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips_exactly(v):
    assert float(fmt(v)) == v


def test_fmt_non_finite():
    assert (fmt(float("nan")), fmt(float("inf")), fmt(-float("inf"))) == ("nan", "inf", "-inf")
    assert fmt(0.1) == "0.10000000000000001"


def test_dumps_sorted_and_lossless():
    text = dumps({"b": np.float64(1 / 3), "a": [np.int64(2), True, float("nan")], "c": np.array([0.5])})
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data["b"] == 1 / 3 and data["a"] == [2, True, "nan"] and data["c"] == [0.5]


def test_trajectory_csv_round_trip(tmp_path):
    sc = billiard.build()
    traj = simulate_hybrid(sc.spec, sc.x0, 3.0)
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(path, traj)
    assert path.read_text().splitlines()[0] == "t,q0,q1,p0,p1,segment_index"
    t, x, idx = read_trajectory_csv(path)
    ts, xs, ids = traj.samples()
    assert np.array_equal(t, ts) and np.array_equal(x, xs) and np.array_equal(idx, ids)


def test_angles_wrapped_only_on_output(tmp_path):
    sc = rigid_body.build(eps=1.0)
    x0 = PhasePoint([3.0, 0.1, 3.1], sc.family(0, None, [4.0, 1.0]))
    traj = simulate_hybrid(sc.spec, x0, 2.0)
    _, xs, _ = traj.samples()
    assert np.max(np.abs(xs[:, :3])) > np.pi  # internal state is unwrapped
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(path, traj, sc.model.angle_indices)
    _, x, _ = read_trajectory_csv(path)
    assert np.all(np.abs(x[:, :3]) <= np.pi)
    assert np.allclose(np.cos(x[:, :3]), np.cos(xs[:, :3]), atol=1e-12)
    assert np.array_equal(x[:, 3:], xs[:, 3:])


def test_events_json(tmp_path):
    sc = billiard.build()
    traj = simulate_hybrid(sc.spec, PhasePoint([0, 0], [1, 0]), 3.5)
    path = tmp_path / "events.json"
    write_events_json(path, traj)
    data = json.loads(path.read_text())
    assert data["termination"] == "horizon_reached"
    assert [e["guard_id"] for e in data["events"]] == [0, 0]
    assert data == json.loads(dumps(events_payload(traj)))
    assert np.allclose(data["events"][0]["x_plus"], [1, 0, -1, 0], atol=1e-9)
