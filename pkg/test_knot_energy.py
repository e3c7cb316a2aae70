#!/usr/bin/env python3
"""
Tests for knot_energy: circle and torus reference values, exact gradients
against finite differences, invariances, thread determinism and the a priori
bounds.
"""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from curve_geometry import ClosedCurve, arclength_resample, forward_arc_matrix
from curve_symmetry import RigidMotion
from knot_energy import (
    EnergyParams,
    SingularityError,
    apriori_bilip_bound,
    apriori_check,
    circle_energy_oracle,
    elementary_power_bound,
    energy_gradient,
    ohara_energy,
    pair_terms,
    scaled_energy,
    seminorm_energy_check,
)
from torus_knots import TorusKnotSpec, regular_polygon, torus_knot_at, torus_knot_curve


def unit_circle(n):
    return regular_polygon(n).rescaled_to_length(1.0)


def random_polygon(rng, n=64, noise=0.03):
    """Perturbed regular n-gon with no pair near the arc tie L/2."""
    while True:
        base = regular_polygon(n).points
        curve = ClosedCurve(base + rng.normal(scale=noise, size=base.shape))
        arcs = forward_arc_matrix(curve)
        if np.min(np.abs(arcs - curve.length / 2)) > 1e-5 * curve.length:
            return curve


@pytest.fixture
def params():
    return EnergyParams(alpha=2.5)


# -- parameter checks ----------------------------------------------------------


@pytest.mark.parametrize("alpha", [2.0, 3.0, 1.5, float("nan")])
def test_params_reject_alpha_outside_range(alpha):
    with pytest.raises(ValueError):
        EnergyParams(alpha=alpha)


def test_mobius_exponent_only_for_the_oracle():
    params = EnergyParams(alpha=2.0, mobius_allowed=True)
    with pytest.raises(ValueError, match="oracle"):
        ohara_energy(unit_circle(32), params)


def test_params_reject_zero_exclusion():
    with pytest.raises(ValueError):
        EnergyParams(alpha=2.5, neighbor_exclusion=0)


# -- circle reference ------------------------------------------------------------


def test_oracle_mobius_circle_is_four():
    assert circle_energy_oracle(EnergyParams(alpha=2.0, mobius_allowed=True)) == pytest.approx(4.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [2.2, 2.5, 2.8])
def test_oracle_is_stable_under_refinement(alpha):
    coarse = circle_energy_oracle(EnergyParams(alpha=alpha, oracle_quad_points=2048))
    fine = circle_energy_oracle(EnergyParams(alpha=alpha, oracle_quad_points=4096))
    assert abs(fine - coarse) <= 1e-8 * abs(fine)


def test_oracle_value_at_two_and_a_half():
    # hand quadrature of 2 ∫ [(sin πw / π)^-2.5 - w^-2.5] dw
    assert circle_energy_oracle(EnergyParams(alpha=2.5)) == pytest.approx(13.51, rel=5e-3)


@pytest.mark.parametrize("alpha", [2.2, 2.5, 2.8])
def test_corrected_circle_energy_matches_oracle(alpha):
    params = EnergyParams(alpha=alpha, diagonal_correction=True)
    value = ohara_energy(unit_circle(512), params)
    assert value == pytest.approx(circle_energy_oracle(params), rel=1e-3)


def test_raw_circle_energy_error_shrinks_with_resolution(params):
    target = circle_energy_oracle(params)
    errors = [abs(ohara_energy(unit_circle(n), params) - target) for n in (64, 128, 256, 512)]
    assert errors == sorted(errors, reverse=True)
    assert errors[-1] < errors[0]


def test_circle_energy_is_nonnegative(params):
    assert ohara_energy(unit_circle(128), params) > 0.0
    assert np.all(pair_terms(unit_circle(64), params) >= -1e-12)


# -- torus knot reference ----------------------------------------------------------


def _torus_derivatives(a, b, rho, t):
    around, tube = 2 * np.pi * a * t, 2 * np.pi * b * t
    wa, wb = 2 * np.pi * a, 2 * np.pi * b
    radial = 1 + rho * np.cos(tube)
    d_radial = -wb * rho * np.sin(tube)
    dd_radial = -wb**2 * rho * np.cos(tube)
    d1 = np.stack((
        d_radial * np.cos(around) - wa * radial * np.sin(around),
        d_radial * np.sin(around) + wa * radial * np.cos(around),
        wb * rho * np.cos(tube),
    ), axis=-1)
    d2 = np.stack((
        dd_radial * np.cos(around) - 2 * wa * d_radial * np.sin(around) - wa**2 * radial * np.cos(around),
        dd_radial * np.sin(around) + 2 * wa * d_radial * np.cos(around) - wa**2 * radial * np.sin(around),
        -wb**2 * rho * np.sin(tube),
    ), axis=-1)
    return d1, d2


def torus_energy_reference(a, b, rho, alpha, outer=160, cutoff=1e-3, panels=24):
    """
    Dense quadrature of E_α on the analytic torus knot.

    Outer variable: periodic trapezoid in s. Inner offset |w| in [cutoff, 1/2]
    on a logarithmic grid; the strip |w| < cutoff uses the local expansion
    (α κ² / 24) d^(2-α) of the integrand in arclength offset d.
    """
    nodes, weights = leggauss(8)
    speed = lambda t: np.linalg.norm(_torus_derivatives(a, b, rho, t)[0], axis=-1)
    total_length = speed(np.arange(4096) / 4096).mean()

    span = np.log(0.5 / cutoff)
    v_edges = np.linspace(0.0, 1.0, panels + 1)
    v = (0.5 * (v_edges[1:] + v_edges[:-1])[:, None] + 0.5 * np.diff(v_edges)[:, None] * nodes).ravel()
    v_weights = (0.5 * np.diff(v_edges)[:, None] * weights).ravel()
    offsets = cutoff * np.exp(span * v)
    offset_weights = v_weights * offsets * span

    arc_nodes, arc_weights = leggauss(16)
    value = 0.0
    for s in np.arange(outer) / outer:
        d1, d2 = _torus_derivatives(a, b, rho, np.array(s))
        v0 = np.linalg.norm(d1)
        kappa = np.linalg.norm(np.cross(d1, d2)) / v0**3
        strip = 2 * v0**2 * (alpha * kappa**2 / 24) * v0 ** (2 - alpha) * cutoff ** (3 - alpha) / (3 - alpha)
        row = strip
        for sign in (1.0, -1.0):
            t = s + sign * offsets
            lo, hi = np.minimum(s, t), np.maximum(s, t)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            arc = (speed(mid[:, None] + half[:, None] * arc_nodes) @ arc_weights) * half
            dist = np.minimum(arc, total_length - arc)
            chord = np.linalg.norm(torus_knot_at(a, b, rho, t) - torus_knot_at(a, b, rho, [s])[0], axis=1)
            integrand = (chord**-alpha - dist**-alpha) * v0 * speed(t)
            row += float(integrand @ offset_weights)
        value += row / outer
    return value


def test_torus_knot_energy_matches_dense_quadrature():
    alpha = 2.5
    fine = torus_knot_curve(TorusKnotSpec(2, 3, 0.4), 4800)
    curve = arclength_resample(fine, 480)
    discrete = ohara_energy(curve, EnergyParams(alpha=alpha, diagonal_correction=True))
    reference = torus_energy_reference(2, 3, 0.4, alpha)
    assert discrete == pytest.approx(reference, rel=1e-2)


# -- gradient ------------------------------------------------------------------------


def central_differences(curve, fn, step):
    pts = curve.points
    grad = np.zeros_like(pts)
    for i in range(pts.shape[0]):
        for c in range(3):
            plus = pts.copy()
            minus = pts.copy()
            plus[i, c] += step
            minus[i, c] -= step
            grad[i, c] = (fn(ClosedCurve(plus)) - fn(ClosedCurve(minus))) / (2 * step)
    return grad


def test_gradient_matches_finite_differences(params):
    rng = np.random.default_rng(20240611)
    for _ in range(20):
        curve = random_polygon(rng)
        step = 1e-6 * curve.diameter
        field = energy_gradient(curve, params)
        fd_e = central_differences(curve, lambda c: ohara_energy(c, params), step)
        assert np.max(np.abs(fd_e - field.dE)) <= 1e-6 * np.max(np.abs(field.dE))


def test_scaled_gradient_matches_finite_differences(params):
    rng = np.random.default_rng(7)
    for _ in range(3):
        curve = random_polygon(rng, n=48)
        step = 1e-6 * curve.diameter
        field = energy_gradient(curve, params)
        fd_s = central_differences(curve, lambda c: scaled_energy(c, params), step)
        assert np.max(np.abs(fd_s - field.dS)) <= 1e-6 * np.max(np.abs(field.dS))


def test_gradient_reports_matching_energy(params):
    curve = random_polygon(np.random.default_rng(3))
    field = energy_gradient(curve, params)
    assert field.energy == ohara_energy(curve, params)
    assert field.scaled_energy == scaled_energy(curve, params)
    assert field.length == curve.length


def test_gradient_is_translation_invariant(params):
    field = energy_gradient(random_polygon(np.random.default_rng(11)), params)
    scale = np.max(np.abs(field.dE))
    np.testing.assert_allclose(field.dE.sum(axis=0), 0.0, atol=1e-11 * scale * field.n)
    np.testing.assert_allclose(field.dS.sum(axis=0), 0.0, atol=1e-11 * scale * field.n)


def test_regular_polygon_gradient_is_radial(params):
    curve = unit_circle(96)
    field = energy_gradient(curve, params)
    radial = curve.points / np.linalg.norm(curve.points, axis=1)[:, None]
    tangential = field.dE - np.einsum("ij,ij->i", field.dE, radial)[:, None] * radial
    assert np.max(np.linalg.norm(tangential, axis=1)) <= 1e-10 * np.max(np.linalg.norm(field.dE, axis=1))
    # scale invariance leaves no radial force on S
    assert np.max(np.abs(field.dS)) <= 1e-9 * np.max(np.abs(field.dE))


def test_antipodal_ties_keep_gradient_shift_equivariant(params):
    curve = unit_circle(64)
    field = energy_gradient(curve, params)
    scale = np.max(np.abs(field.dE))
    for shift in (1, 5, 32):
        moved = energy_gradient(curve.shifted(shift), params)
        np.testing.assert_allclose(moved.dE, np.roll(field.dE, -shift, axis=0), atol=1e-12 * scale)
    norms = np.linalg.norm(field.dE, axis=1)
    np.testing.assert_allclose(norms, norms[0], rtol=1e-12)


def test_gradient_rejects_diagonal_correction():
    with pytest.raises(ValueError):
        energy_gradient(unit_circle(32), EnergyParams(alpha=2.5, diagonal_correction=True))


# -- invariances ---------------------------------------------------------------------


def test_energy_invariant_under_rigid_motion(params):
    rng = np.random.default_rng(5)
    curve = torus_knot_curve(TorusKnotSpec(2, 3), 120)
    base = ohara_energy(curve, params)
    motion = RigidMotion.random(rng)
    assert ohara_energy(motion.apply_curve(curve), params) == pytest.approx(base, rel=1e-12)
    field = energy_gradient(curve, params)
    moved = energy_gradient(motion.apply_curve(curve), params)
    np.testing.assert_allclose(moved.dE, field.dE @ motion.rotation.T, atol=1e-10 * np.max(np.abs(field.dE)))


def test_energy_invariant_under_shift_and_reversal(params):
    curve = torus_knot_curve(TorusKnotSpec(2, 3), 120)
    base = ohara_energy(curve, params)
    assert ohara_energy(curve.shifted(17), params) == pytest.approx(base, rel=1e-12)
    assert ohara_energy(curve.reversed(), params) == pytest.approx(base, rel=1e-12)


def test_energy_scaling_law(params):
    curve = torus_knot_curve(TorusKnotSpec(2, 3), 96)
    lam = 1.7
    assert ohara_energy(curve.scaled(lam), params) == pytest.approx(
        lam ** (2 - params.alpha) * ohara_energy(curve, params), rel=1e-12
    )
    assert scaled_energy(curve.scaled(lam), params) == pytest.approx(scaled_energy(curve, params), rel=1e-12)


def test_thread_count_does_not_change_results(params, monkeypatch):
    curve = torus_knot_curve(TorusKnotSpec(2, 3), 300)
    monkeypatch.setenv("SYMKNOT_THREADS", "1")
    serial = energy_gradient(curve, params)
    monkeypatch.setenv("SYMKNOT_THREADS", "4")
    threaded = energy_gradient(curve, params)
    assert threaded.energy == serial.energy
    np.testing.assert_array_equal(threaded.dS, serial.dS)


def test_invalid_thread_setting(params, monkeypatch):
    monkeypatch.setenv("SYMKNOT_THREADS", "zero")
    with pytest.raises(ValueError, match="SYMKNOT_THREADS"):
        ohara_energy(unit_circle(16), params)


# -- singularities -------------------------------------------------------------------


def test_coincident_samples_raise_singularity(params):
    pts = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0], [1, 0, 0], [1, -1, 0]]
    with pytest.raises(SingularityError) as exc:
        ohara_energy(ClosedCurve(pts), params)
    assert set(exc.value.pair) == {1, 4}


def test_larger_exclusion_skips_near_pairs():
    curve = unit_circle(64)
    wide = ohara_energy(curve, EnergyParams(alpha=2.5, neighbor_exclusion=3))
    narrow = ohara_energy(curve, EnergyParams(alpha=2.5, neighbor_exclusion=1))
    assert wide < narrow


def test_pair_terms_sum_to_energy(params):
    curve = random_polygon(np.random.default_rng(2), n=70)
    terms = pair_terms(curve, params)
    assert terms.shape == (70, 70)
    np.testing.assert_allclose(terms, terms.T, atol=1e-14)
    assert terms.sum() == pytest.approx(ohara_energy(curve, params), rel=1e-13)


# -- a priori bounds ----------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [2.0, 2.2, 2.5, 2.8, 2.99])
def test_elementary_power_inequality(alpha):
    assert elementary_power_bound(np.linspace(0.0, 1.0, 10_000), alpha)


def test_apriori_bound_shape(params):
    assert apriori_bilip_bound(0.0, params) == 1 / 16
    assert apriori_bilip_bound(50.0, params) < apriori_bilip_bound(10.0, params)
    with pytest.raises(ValueError):
        apriori_bilip_bound(-1.0, params)


def test_apriori_bound_holds_on_circle_and_torus(params):
    assert apriori_check(unit_circle(128), params).holds
    report = apriori_check(torus_knot_curve(TorusKnotSpec(2, 3), 240), params)
    assert report.holds
    assert report.bound <= 0.25


@pytest.mark.parametrize("alpha,expected", [(2.2, True), (2.5, True), (2.8, False)])
def test_seminorm_bound_on_circle(alpha, expected):
    params = EnergyParams(alpha=alpha, diagonal_correction=True)
    report = seminorm_energy_check(unit_circle(512), params)
    assert report.passed is expected


@pytest.fixture(scope="module")
def uniform_torus_knots():
    return {
        (a, b): arclength_resample(torus_knot_curve(TorusKnotSpec(a, b, rho), 2400), 480)
        for a, b, rho in ((2, 3, 0.4), (2, 5, 0.35))
    }


@pytest.mark.parametrize("knot", [(2, 3), (2, 5)])
@pytest.mark.parametrize("alpha", [2.2, 2.5, 2.8])
def test_seminorm_bound_on_resampled_torus_knots(uniform_torus_knots, knot, alpha):
    report = seminorm_energy_check(uniform_torus_knots[knot], EnergyParams(alpha=alpha))
    assert report.passed
    assert report.ratio < 0.5
