import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roughdrift.drivers import lift_piecewise_linear
from roughdrift.errors import ConfigurationError
from roughdrift.io import (read_json, read_points_csv, read_rough_path_csv, read_table_csv, read_trajectory_csv,
                           write_json, write_points_csv, write_rough_path_csv, write_table_csv,
                           write_trajectory_csv)

values = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
point_sets = st.integers(2, 12).flatmap(lambda n: st.integers(1, 3).flatmap(
    lambda d: arrays(np.float64, (n, d), elements=values)))


@given(point_sets)
def test_points_roundtrip(tmp_path_factory, pts):
    f = tmp_path_factory.mktemp("io") / "pts.csv"
    t = np.cumsum(np.ones(len(pts))) / 3.0
    write_points_csv(f, t, pts)
    t2, p2 = read_points_csv(f)
    assert t2.tobytes() == t.tobytes() and p2.tobytes() == np.ascontiguousarray(pts).tobytes()


@given(point_sets)
def test_rough_path_roundtrip(tmp_path_factory, pts):
    f = tmp_path_factory.mktemp("io") / "rp.csv"
    x = lift_piecewise_linear(pts, p_hint=2.2)
    write_rough_path_csv(f, x)
    y = read_rough_path_csv(f, p_hint=2.2)
    assert np.array_equal(x.times, y.times) and np.array_equal(x.level1, y.level1)
    assert np.array_equal(x.level2, y.level2)


def test_rough_path_header(tmp_path):
    x = lift_piecewise_linear(np.eye(3))
    f = write_rough_path_csv(tmp_path / "rp.csv", x)
    header = f.read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "x_1", "x_2", "x_3"] and header[4:7] == ["x2_1_1", "x2_1_2", "x2_1_3"]
    assert len(header) == 1 + 3 + 9


def test_trajectory_and_table_roundtrip(tmp_path):
    t = np.linspace(0, 1, 5)
    y = np.random.default_rng(0).normal(size=(5, 2))
    write_trajectory_csv(tmp_path / "y.csv", t, y)
    t2, y2 = read_trajectory_csv(tmp_path / "y.csv")
    assert np.array_equal(t, t2) and np.array_equal(y, y2)
    cols = {"eps": [0.5, 0.4], "q": [np.inf, 0.3]}
    write_table_csv(tmp_path / "tab.csv", cols)
    back = read_table_csv(tmp_path / "tab.csv")
    assert back["q"][0] == np.inf and back["eps"].tolist() == [0.5, 0.4]


def test_json_handles_numpy(tmp_path):
    write_json(tmp_path / "a.json", {"x": np.arange(3), "y": np.float64(1.5), "ok": np.bool_(True), "q": float("inf")})
    back = read_json(tmp_path / "a.json")
    assert back == {"x": [0, 1, 2], "y": 1.5, "ok": True, "q": float("inf")}


def test_wrong_headers_rejected(tmp_path):
    write_trajectory_csv(tmp_path / "y.csv", [0, 1], [[1.0], [2.0]])
    with pytest.raises(ConfigurationError):
        read_points_csv(tmp_path / "y.csv")
    with pytest.raises(ConfigurationError):
        read_rough_path_csv(tmp_path / "y.csv")
