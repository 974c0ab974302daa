import numpy as np
import pytest
from scipy.optimize import brentq

from common_utils.errors import UsageError
from geometry.collar import CollarParams, collar_chart, half_length_Y
from geometry.moebius import DiffeoParams
from geometry.tensors import TensorField
from solver.diagnostics import (
    energy_lower_bound,
    extract_discs,
    lie_derivative,
    probe_fields,
    stationarity_residual,
)
from solver.hopf import MetricState
from surface.curves import coaxial_circles
from surface.mesh import Grid, SurfaceMap, area, energy, initial_map

HALF_SEPARATION = 0.4


def catenoid_neck():
    """Stable root c of c cosh(0.4 / c) = 1."""
    return brentq(lambda c: c * np.cosh(HALF_SEPARATION / c) - 1.0, 0.5, 1.0)


def catenoid_on_grid(n_x, n_theta):
    """
    The catenoid spanning the unit circles at z = ±0.4, in the collar whose
    half-length matches its conformal modulus.
    """
    c = catenoid_neck()
    t_end = HALF_SEPARATION / c
    ell = brentq(lambda value: half_length_Y(CollarParams(1.0, value)) - t_end, 1e-3, 100.0)
    collar = CollarParams(1.0, ell)
    grid = Grid(n_x, n_theta)
    x, theta = grid.node_coords
    t = collar_chart(collar).s_of_x(x)
    values = np.column_stack([c * np.cosh(t) * np.cos(theta), c * np.cosh(t) * np.sin(theta), c * t])
    lift = grid.theta_nodes.copy()
    curves = coaxial_circles(1.0, 2.0 * HALF_SEPARATION)
    u = SurfaceMap(grid, values, lift, lift.copy()).with_boundary(curves, lift, lift.copy())
    return u, MetricState(collar, DiffeoParams(), grid), curves


def test_energy_lower_bound_at_identity_chart():
    grid = Grid(8, 24)
    state = MetricState.initial(grid)
    bound = energy_lower_bound(0.8, state)
    assert bound == pytest.approx(0.5 * np.pi * 0.64, rel=1e-9)
    u = initial_map(grid, coaxial_circles(1.0, 0.8))
    assert energy(u, state.metric) >= bound


def test_probe_fields_and_their_derivatives():
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.9, 0.9, 25)
    theta = rng.uniform(0.0, 2.0 * np.pi, 25)
    eps = 1e-6
    fields = probe_fields(x, theta)
    assert len(fields) == 12
    shifted_x = [probe_fields(x + s, theta) for s in (eps, -eps)]
    shifted_t = [probe_fields(x, theta + s) for s in (eps, -eps)]
    for k, (X_x, X_t, dXx_x, dXx_t, dXt_x, dXt_t) in enumerate(fields):
        up_x, down_x = shifted_x[0][k], shifted_x[1][k]
        up_t, down_t = shifted_t[0][k], shifted_t[1][k]
        np.testing.assert_allclose(dXx_x, (up_x[0] - down_x[0]) / (2 * eps), atol=1e-7)
        np.testing.assert_allclose(dXt_x, (up_x[1] - down_x[1]) / (2 * eps), atol=1e-7)
        np.testing.assert_allclose(dXx_t, (up_t[0] - down_t[0]) / (2 * eps), atol=1e-7)
        np.testing.assert_allclose(dXt_t, (up_t[1] - down_t[1]) / (2 * eps), atol=1e-7)


def test_probe_fields_respect_the_boundary():
    theta = np.linspace(0.0, 2.0 * np.pi, 13)
    for x in (-1.0, 1.0):
        for X_x, *_ in probe_fields(np.full_like(theta, x), theta)[:6]:
            np.testing.assert_allclose(X_x, 0.0, atol=1e-15)
    anchors = 2.0 * np.pi * np.arange(3) / 3.0
    for _, X_t, *_ in probe_fields(np.full(3, 0.3), anchors)[6:]:
        np.testing.assert_allclose(X_t, 0.0, atol=1e-14)


def test_lie_derivative_of_flat_metric():
    n = 5
    flat = TensorField.diagonal(np.ones(n), np.ones(n))
    zero = TensorField.zeros(n)
    ones, zeros = np.ones(n), np.zeros(n)
    rotation = (zeros, ones, zeros, zeros, zeros, zeros)
    rotated = lie_derivative(flat, zero, zero, rotation)
    for component in (rotated.xx, rotated.xt, rotated.tt):
        np.testing.assert_array_equal(component, 0.0)
    x = np.linspace(-1.0, 1.0, n)
    dilation = (x, zeros, ones, zeros, zeros, zeros)
    dilated = lie_derivative(flat, zero, zero, dilation)
    np.testing.assert_allclose(dilated.xx, 2.0)
    np.testing.assert_allclose(dilated.tt, 0.0)


def test_catenoid_residual_decreases_under_refinement():
    residuals = [stationarity_residual(*catenoid_on_grid(n, 3 * n)[:2]) for n in (8, 16, 32)]
    assert residuals[0] > residuals[1] > residuals[2]


def test_catenoid_is_more_stationary_than_a_perturbed_map():
    u, state, _ = catenoid_on_grid(16, 48)
    rng = np.random.default_rng(3)
    values = u.values.copy()
    values[u.grid.interior_nodes] += 0.05 * rng.normal(size=(len(u.grid.interior_nodes), 3))
    assert stationarity_residual(u, state) < stationarity_residual(u.with_values(values), state)


def test_side_residuals_are_finite():
    u, state, _ = catenoid_on_grid(16, 48)
    for side in ("plus", "minus"):
        value = stationarity_residual(u, state, side=side)
        assert np.isfinite(value) and value >= 0


def test_extract_discs_needs_a_degenerate_run():
    u, state, curves = catenoid_on_grid(8, 24)
    with pytest.raises(UsageError):
        extract_discs(u, state, curves, "ConvergedCylinder")


def test_extract_discs_splits_at_the_central_circle():
    u, state, curves = catenoid_on_grid(16, 48)
    plus, minus = extract_discs(u, state, curves, "DegenerateTwoDiscs")
    assert (plus.side, minus.side) == ("plus", "minus")
    assert plus.area + minus.area == pytest.approx(area(u), rel=1e-12)
    assert plus.area == pytest.approx(minus.area, rel=1e-2)
    assert plus.energy + minus.energy == pytest.approx(energy(u, state.metric), rel=1e-12)
    assert plus.boundary_span == pytest.approx(2.0 * np.pi)
    assert plus.monotonicity_violation == 0.0 and minus.monotonicity_violation == 0.0
    assert plus.trace_error < 1e-12 and minus.trace_error < 1e-12
    assert plus.conformality_relative < 0.1


def test_extract_discs_flags_a_lift_running_backwards():
    u, state, curves = catenoid_on_grid(8, 24)
    lift = u.boundary_plus.copy()
    lift[[3, 4]] = lift[[4, 3]]
    folded = u.with_boundary(curves, lift, u.boundary_minus)
    plus, minus = extract_discs(folded, state, curves, "DegenerateTwoDiscs")
    step = u.boundary_plus[4] - u.boundary_plus[3]
    assert plus.monotonicity_violation == pytest.approx(step)
    assert plus.boundary_span == pytest.approx(2.0 * np.pi + 2.0 * step)
    assert minus.monotonicity_violation == 0.0
    assert plus.trace_error < 1e-12
