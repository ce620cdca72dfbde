import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oneshot.pointset import (
    Box, DimensionError, DomainError, PointSet, PointSetParseError,
    read_pointset, scale, unscale, write_pointset,
)


def unit_set(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return PointSet(points, Box.unit(points.shape[1]))


def test_scale_midpoint_maps_to_origin():
    ps = scale(unit_set([[0.5] * 4]), Box.cube(4, -5, 5))
    assert ps.points.tolist() == [[0.0, 0.0, 0.0, 0.0]]


def test_scale_endpoints_map_to_bounds():
    ps = scale(unit_set([[0.0, 1.0]]), Box.cube(2, -5, 5))
    assert ps.points.tolist() == [[-5.0, 5.0]]


def test_scale_quarter_point():
    ps = scale(unit_set([[0.25]]), Box.cube(1, 2, 6))
    assert ps.points[0, 0] == 3.0


def test_scale_keeps_provenance_and_id():
    src = PointSet([[0.1, 0.2]], Box.unit(2), "kind=lhs", seed=4)
    out = scale(src, Box.cube(2, -5, 5))
    assert (out.provenance, out.seed, out.id) == (src.provenance, src.seed, src.id)
    assert out.domain == Box.cube(2, -5, 5)


def test_scale_dimension_mismatch():
    with pytest.raises(DimensionError):
        scale(unit_set([[0.1, 0.2]]), Box.cube(3, -5, 5))


def test_box_requires_strict_bounds():
    with pytest.raises(DomainError):
        Box([0.0, 1.0], [1.0, 1.0])


def test_points_outside_domain_rejected():
    with pytest.raises(DomainError):
        unit_set([[0.2, 1.5]])


def test_pointset_is_read_only():
    ps = unit_set([[0.1, 0.2]])
    with pytest.raises(ValueError):
        ps.points[0, 0] = 0.5


def test_round_trip_3x2(tmp_path):
    ps = PointSet([[0.1, 0.2], [1 / 3, 2 / 3], [0.0, 1.0]], Box.unit(2), "hand", seed=3)
    write_pointset(ps, tmp_path / "a.pts")
    back = read_pointset(tmp_path / "a.pts")
    assert back == ps
    assert back.id == ps.id


def test_ragged_file_names_line(tmp_path):
    path = tmp_path / "bad.pts"
    path.write_text("0.1 0.2 0.3 0.4\n0.1 0.2 0.3 0.4 0.5\n")
    with pytest.raises(PointSetParseError, match="line 2"):
        read_pointset(path)


def test_out_of_domain_coordinate_names_line(tmp_path):
    path = tmp_path / "bad.pts"
    path.write_text("# lower: 0\n# upper: 1\n0.5\n1.5\n")
    with pytest.raises(PointSetParseError, match="line 4") as err:
        read_pointset(path)
    assert err.value.line == 4


def test_malformed_number(tmp_path):
    path = tmp_path / "bad.pts"
    path.write_text("0.1 zero\n")
    with pytest.raises(PointSetParseError, match="line 1"):
        read_pointset(path)


def test_header_free_file_is_unit_cube(tmp_path):
    path = tmp_path / "plain.pts"
    path.write_text("0.25 0.75\n0.5 0.5\n")
    ps = read_pointset(path)
    assert ps.domain.is_unit() and ps.n == 2


unit_arrays = st.integers(1, 12).flatmap(
    lambda n: st.integers(1, 5).flatmap(
        lambda d: arrays(np.float64, (n, d), elements=st.floats(0, 1, allow_subnormal=False))
    )
)


@given(unit_arrays, st.floats(-100, 100), st.floats(0.01, 100))
def test_scale_unscale_round_trip(points, lo, width):
    d = points.shape[1]
    ps = unit_set(points)
    back = unscale(scale(ps, Box.cube(d, lo, lo + width)))
    assert np.max(np.abs(back.points - points)) <= 1e-12 * max(1.0, abs(lo) / width + 1)


@given(unit_arrays, st.floats(-1e6, 1e6), st.floats(1e-3, 1e6))
def test_file_round_trip_exact(tmp_path_factory, points, lo, width):
    d = points.shape[1]
    ps = scale(unit_set(points), Box.cube(d, lo, lo + width))
    path = tmp_path_factory.mktemp("rt") / "p.pts"
    write_pointset(ps, path)
    back = read_pointset(path)
    assert np.array_equal(back.points, ps.points)
    assert back.domain == ps.domain
