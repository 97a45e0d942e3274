import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarodom.errors import InvalidInputError, ParseError
from lidarodom.lidar_model import (
    HDL64E,
    VLP16,
    PointCloud,
    SensorModel,
    cell_indices,
    grid_components,
    load_sensor,
    neighbor_vertical_angle,
    project,
    sensor_from_dict,
    vertical_angle,
)


def beam_point(elev_deg, az_deg, r):
    e, a = math.radians(elev_deg), math.radians(az_deg)
    return [r * math.cos(e) * math.cos(a), r * math.cos(e) * math.sin(a), r * math.sin(e)]


@pytest.mark.parametrize("p, expected", [((1, 0, 0), 0.0), ((0, 1, 1), 45.0), ((3, 4, 5), 45.0)])
def test_vertical_angle_examples(p, expected):
    assert vertical_angle(p) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "a, b, expected",
    [((1, 0, 0), (2, 0, 0), 0.0), ((1, 0, 0), (1, 0, 1), 90.0), ((1, 0, 0), (2, 0, 0.1), 5.710593137499643)],
)
def test_neighbor_vertical_angle_examples(a, b, expected):
    assert neighbor_vertical_angle(a, b) == pytest.approx(expected, abs=1e-9)


def test_coincident_points_rejected():
    with pytest.raises(InvalidInputError):
        neighbor_vertical_angle((1, 2, 3), (1, 2, 3))
    with pytest.raises(InvalidInputError):
        vertical_angle((0, 0, 0))


def test_vlp16_fov_edges_map_to_first_and_last_row():
    img = project(PointCloud([beam_point(-15, 10, 5), beam_point(15, 20, 5)]), VLP16)
    rows, _ = np.nonzero(img.valid)
    assert sorted(rows) == [0, 15]


def test_collision_keeps_nearer_point():
    img = project(PointCloud([beam_point(1, 30.05, 6.0), beam_point(1, 30.05, 4.0)]), VLP16)
    assert img.valid.sum() == 1
    assert img.range[img.valid][0] == pytest.approx(4.0)
    assert img.index[img.valid][0] == 1


def test_out_of_range_points_dropped():
    img = project(PointCloud([beam_point(0, 0, 0.1), beam_point(0, 90, 500.0)]), VLP16)
    assert not img.valid.any()


def test_ring_index_overrides_elevation():
    img = project(PointCloud([beam_point(0, 45, 3.0)], ring=[2]), VLP16)
    assert img.valid[2].sum() == 1


def test_empty_cloud_rejected():
    with pytest.raises(InvalidInputError):
        project(PointCloud(np.zeros((0, 3))), VLP16)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_invariants(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(2000, 3)) * [20, 20, 3]
    cloud = PointCloud(pts)
    img = project(cloud, VLP16)
    v = img.valid
    np.testing.assert_array_equal(img.points[v], pts[img.index[v]])
    np.testing.assert_allclose(img.range[v], np.linalg.norm(img.points[v], axis=-1), atol=1e-6)
    assert np.all((img.range[v] >= VLP16.min_range_m) & (img.range[v] <= VLP16.max_range_m))


def test_row_index_monotone_in_elevation():
    elev = np.linspace(-20, 20, 401)
    pts = np.array([beam_point(e, 0.1, 10.0) for e in elev])
    rows, _ = cell_indices(pts, VLP16)
    assert np.all(np.diff(rows) >= 0)
    az = np.linspace(0, 359.99, 1000)
    _, cols = cell_indices(np.array([beam_point(0, a, 10.0) for a in az]), VLP16)
    assert np.all(np.diff(cols) >= 0)


def test_beam_directions_project_to_their_cells():
    for sensor in (VLP16, HDL64E):
        d = sensor.beam_directions().reshape(-1, 3) * 5.0
        rows, cols = cell_indices(d, sensor)
        np.testing.assert_array_equal(rows * sensor.n_cols + cols, np.arange(len(d)))


def test_sensor_validation():
    with pytest.raises(InvalidInputError):
        SensorModel(1, 1800, -15, 15, 0.4, 100, 1)
    with pytest.raises(InvalidInputError):
        SensorModel(16, 1800, 15, -15, 0.4, 100, 4)


def test_sensor_config_round_trip(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("preset: vlp16\nmax_range_m: 50\n")
    s = load_sensor(p)
    assert s.max_range_m == 50 and s.n_rows == 16
    assert sensor_from_dict(VLP16.to_dict()) == VLP16
    assert load_sensor("HDL64E") == HDL64E


def test_sensor_config_unknown_key(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("preset: vlp16\nrings: 32\n")
    with pytest.raises(ParseError, match="rings"):
        load_sensor(p)


def test_grid_components_wraps_azimuth():
    up = np.zeros((1, 6), dtype=bool)
    right = np.zeros((2, 6), dtype=bool)
    right[0, 5] = True  # (0,5)-(0,0)
    up[0, 0] = True  # (0,0)-(1,0)
    lab = grid_components(up, right)
    assert lab[0, 5] == lab[0, 0] == lab[1, 0]
    assert len(np.unique(lab)) == 12 - 2
