#!/usr/bin/env python3
"""
Tests for curve_geometry: construction checks, lengths and intrinsic
distances, the bi-Lipschitz ratio, arclength resampling and the tangent
seminorm against a quadrature reference.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.spatial.transform import Rotation

from curve_geometry import (
    ClosedCurve,
    CurveValidationError,
    arclength_regularity,
    arclength_resample,
    bilipschitz_ratio,
    chord_matrix,
    curve_stats,
    intrinsic_distance,
    intrinsic_distance_matrix,
    polyline_length,
    sobolev_seminorm,
)
from torus_knots import regular_polygon


UNIT_SQUARE = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]


def warped_circle(n, warp=0.3):
    t = 2 * np.pi * np.arange(n) / n
    s = t + warp * np.sin(t)
    return ClosedCurve(np.column_stack((np.cos(s), np.sin(s), 0.1 * np.sin(2 * s))))


def thin_rectangle(gap):
    bottom = [[i / 10, 0.0, 0.0] for i in range(10)]
    top = [[1.0 - i / 10, gap, 0.0] for i in range(10)]
    return ClosedCurve(bottom + [[1.0, 0.0, 0.0]] + top + [[0.0, gap, 0.0]])


# -- construction -------------------------------------------------------------


def test_rejects_too_few_samples():
    with pytest.raises(CurveValidationError):
        ClosedCurve(UNIT_SQUARE[:3])


def test_rejects_wrong_shape():
    with pytest.raises(CurveValidationError):
        ClosedCurve(np.zeros((5, 2)))


def test_rejects_non_finite_and_names_index():
    pts = np.array(UNIT_SQUARE + [[0.5, 0.5, 1.0]], dtype=float)
    pts[2, 1] = np.nan
    with pytest.raises(CurveValidationError) as exc:
        ClosedCurve(pts)
    assert exc.value.index == 2


def test_repeated_consecutive_points_name_index():
    pts = [[0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    with pytest.raises(CurveValidationError) as exc:
        ClosedCurve(pts)
    assert exc.value.index == 1
    assert "index 1" in str(exc.value)


def test_wraparound_repeat_is_detected():
    pts = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 0, 0]]
    with pytest.raises(CurveValidationError) as exc:
        ClosedCurve(pts)
    assert exc.value.index == 3


def test_curve_is_immutable():
    curve = ClosedCurve(UNIT_SQUARE)
    with pytest.raises(ValueError):
        curve.points[0, 0] = 5.0


# -- lengths and distances ---------------------------------------------------


def test_unit_square_length_and_distances():
    curve = ClosedCurve(UNIT_SQUARE)
    assert polyline_length(curve) == 4.0
    assert intrinsic_distance(curve, 0, 1) == 1.0
    assert intrinsic_distance(curve, 0, 2) == 2.0
    assert intrinsic_distance(curve, 0, 3) == 1.0
    assert intrinsic_distance(curve, 1, 1) == 0.0


def test_cumulative_arclength_table():
    curve = warped_circle(64)
    cum = curve.cumulative_arclength
    assert cum.shape == (65,)
    assert cum[0] == 0.0
    assert np.all(np.diff(cum) > 0)
    assert cum[-1] == curve.length


def test_intrinsic_distance_symmetric_and_bounded():
    curve = warped_circle(40)
    dist = intrinsic_distance_matrix(curve)
    np.testing.assert_allclose(dist, dist.T, atol=1e-15)
    assert np.all(dist <= curve.length / 2 + 1e-15)
    assert intrinsic_distance(curve, 3, 17) == pytest.approx(dist[3, 17], abs=1e-15)


def test_intrinsic_distance_index_out_of_range():
    curve = ClosedCurve(UNIT_SQUARE)
    with pytest.raises(IndexError):
        intrinsic_distance(curve, 0, 4)
    with pytest.raises(IndexError):
        intrinsic_distance(curve, -1, 2)


def test_vertex_weights_sum_to_length():
    curve = warped_circle(50)
    assert curve.vertex_weights.sum() == pytest.approx(curve.length, rel=1e-14)


def test_scaling_and_transforms_preserve_shape():
    curve = warped_circle(30)
    assert curve.scaled(2.5).length == pytest.approx(2.5 * curve.length, rel=1e-14)
    assert curve.rescaled_to_length(1.0).length == pytest.approx(1.0, rel=1e-14)
    assert curve.reversed().length == pytest.approx(curve.length, rel=1e-14)
    np.testing.assert_array_equal(curve.reversed().points[0], curve.points[0])
    np.testing.assert_array_equal(curve.shifted(7).points[0], curve.points[7])
    np.testing.assert_allclose(curve.centered().centroid, 0.0, atol=1e-15)


def random_polygon(n, seed):
    return ClosedCurve(np.random.default_rng(seed).normal(size=(n, 3)))


@pytest.mark.parametrize("n", [4, 5, 8, 13, 17, 31, 32])
def test_intrinsic_distance_obeys_triangle_inequality(n):
    for curve in (random_polygon(n, n), warped_circle(n)):
        dist = intrinsic_distance_matrix(curve)
        # [i, j, k]: d(i, k) <= d(i, j) + d(j, k)
        via = dist[:, :, None] + dist[None, :, :]
        assert np.all(dist[:, None, :] <= via + 1e-14 * curve.length)


@pytest.mark.parametrize("n", [4, 6, 9, 16, 25, 33, 48, 64])
def test_chord_never_exceeds_intrinsic_distance(n):
    for curve in (random_polygon(n, 100 + n), warped_circle(n), regular_polygon(n)):
        chord = chord_matrix(curve)
        dist = intrinsic_distance_matrix(curve)
        assert np.all(chord <= dist * (1.0 + 1e-14) + 1e-15)


def test_length_and_bilip_ignore_rigid_motion_and_scale():
    curve = warped_circle(40)
    rotation = Rotation.random(random_state=7).as_matrix()
    moved = curve.transformed(rotation, [0.3, -1.2, 5.0])
    assert polyline_length(moved) == pytest.approx(polyline_length(curve), rel=1e-13)
    assert bilipschitz_ratio(moved) == pytest.approx(bilipschitz_ratio(curve), rel=1e-12)
    scaled = curve.scaled(3.7)
    assert polyline_length(scaled) == pytest.approx(3.7 * polyline_length(curve), rel=1e-13)
    assert bilipschitz_ratio(scaled) == pytest.approx(bilipschitz_ratio(curve), rel=1e-12)


# -- bi-Lipschitz ratio ------------------------------------------------------


def test_bilip_matches_pairwise_scan():
    curve = warped_circle(36)
    n = curve.n
    expected = min(
        np.linalg.norm(curve.points[i] - curve.points[j]) / intrinsic_distance(curve, i, j)
        for i in range(n) for j in range(n) if i != j
    )
    assert bilipschitz_ratio(curve) == pytest.approx(expected, rel=1e-14)


def test_bilip_of_two_close_strands():
    gap = 0.01
    curve = thin_rectangle(gap)
    assert bilipschitz_ratio(curve) == pytest.approx(gap / (1.0 + gap), rel=1e-12)


def test_bilip_is_zero_on_self_intersection():
    touching = ClosedCurve([[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0], [1, 0, 0], [1, -1, 0]])
    assert bilipschitz_ratio(touching) == 0.0


def test_regular_polygon_bilip_is_antipodal_ratio():
    n = 48
    curve = regular_polygon(n)
    chord = chord_matrix(curve)
    assert bilipschitz_ratio(curve) == pytest.approx(chord[0, n // 2] / (curve.length / 2), rel=1e-12)


def test_curve_stats_and_regularity_of_polygon():
    curve = regular_polygon(60).rescaled_to_length(1.0)
    stats = curve_stats(curve)
    assert stats.length == pytest.approx(1.0, rel=1e-14)
    assert stats.min_edge == pytest.approx(stats.max_edge, rel=1e-12)
    regularity = arclength_regularity(curve)
    assert regularity.min_speed == pytest.approx(1.0, rel=1e-12)
    assert regularity.max_speed == pytest.approx(1.0, rel=1e-12)
    assert regularity.bilip_constant == pytest.approx(1.0 / stats.bilip_ratio)


# -- resampling --------------------------------------------------------------


def test_resample_equalizes_spacing():
    curve = warped_circle(512)
    out = arclength_resample(curve, 240)
    assert out.n == 240
    assert out.edge_spread() < 1e-9
    np.testing.assert_array_equal(out.points[0], curve.points[0])
    assert out.length == pytest.approx(curve.length, rel=1e-3)


def test_resample_gaps_follow_input_arclength():
    curve = warped_circle(512)
    n_out = 120
    out = arclength_resample(curve, n_out)
    cum = curve.cumulative_arclength
    # arclength position of every output point on the input polyline
    positions = []
    for p in out.points:
        seg = curve.points - p
        edges = curve.edges
        t = np.clip(-np.einsum("ij,ij->i", seg, edges) / curve.edge_lengths**2, 0.0, 1.0)
        gaps = np.linalg.norm(seg + t[:, None] * edges, axis=1)
        e = int(np.argmin(gaps))
        positions.append(cum[e] + t[e] * curve.edge_lengths[e])
    spacing = np.diff(positions)
    np.testing.assert_allclose(spacing, curve.length / n_out, rtol=1e-3)


def test_resample_is_idempotent():
    once = arclength_resample(warped_circle(300), 150)
    twice = arclength_resample(once, 150)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-12)


def test_resample_rejects_tiny_output():
    with pytest.raises(CurveValidationError):
        arclength_resample(warped_circle(32), 3)


def test_coarse_downsampling_converges():
    out = arclength_resample(warped_circle(64), 32)
    assert out.n == 32
    assert out.edge_spread() < 1e-9


# -- tangent seminorm --------------------------------------------------------


def circle_seminorm_squared(s):
    # 2 ∫_0^{1/2} 4 sin²(πw) / w^(1+2s) dw with the algebraic factor split off
    value, _ = quad(lambda w: 4 * np.pi**2 * np.sinc(w) ** 2, 0.0, 0.5, weight="alg", wvar=(1.0 - 2.0 * s, 0.0))
    return 2.0 * value


def test_circle_seminorm_matches_quadrature():
    curve = regular_polygon(512).rescaled_to_length(1.0)
    value = sobolev_seminorm(curve, 0.75, diagonal_correction=True)
    assert value**2 == pytest.approx(circle_seminorm_squared(0.75), rel=1e-3)


def test_uncorrected_seminorm_converges_from_below():
    reference = circle_seminorm_squared(0.75)
    errors = []
    for n in (64, 128, 256, 512):
        value = sobolev_seminorm(regular_polygon(n).rescaled_to_length(1.0), 0.75)
        errors.append(reference - value**2)
    assert all(err > 0 for err in errors)
    assert errors == sorted(errors, reverse=True)


def test_seminorm_requires_uniform_spacing():
    with pytest.raises(CurveValidationError, match="resample"):
        sobolev_seminorm(warped_circle(128), 0.75)


def test_seminorm_rejects_bad_exponent():
    with pytest.raises(ValueError):
        sobolev_seminorm(regular_polygon(32), 1.0)


def test_seminorm_ignores_rotation_and_index_shift():
    curve = arclength_resample(warped_circle(512), 128)
    reference = sobolev_seminorm(curve, 0.75)
    rotation = Rotation.random(random_state=11).as_matrix()
    assert sobolev_seminorm(curve.transformed(rotation, [1.0, 2.0, -0.5]), 0.75) == pytest.approx(reference, rel=1e-12)
    for shift in (1, 37, 127):
        assert sobolev_seminorm(curve.shifted(shift), 0.75) == pytest.approx(reference, rel=1e-12)
