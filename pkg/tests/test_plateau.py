import numpy as np
import pytest

from common_utils.errors import ParameterError
from runner.verification import _brute_force_isotonic
from solver.plateau import (
    StepOptions,
    _clamp,
    boundary_gradient,
    isotonic_project,
    minimize_step,
    objective,
    project_lift,
)
from surface.curves import coaxial_circles, offset_circles
from surface.mesh import Grid, TensorField, admissibility_violations, assemble_operators, energy, initial_map, l2_norm

TWO_PI = 2.0 * np.pi


def flat_metric(grid):
    return TensorField.diagonal(np.ones(grid.n_triangles), np.ones(grid.n_triangles))


def noisy_map(grid, curves, scale=0.05, seed=0):
    rng = np.random.default_rng(seed)
    u = initial_map(grid, curves)
    values = u.values.copy()
    values[grid.interior_nodes] += scale * rng.normal(size=(len(grid.interior_nodes), u.dim))
    return u.with_values(values)


def test_isotonic_projection_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        y = rng.normal(size=int(rng.integers(1, 9)))
        np.testing.assert_allclose(isotonic_project(y), _brute_force_isotonic(y), atol=1e-10)


def test_isotonic_projection_keeps_sorted_input():
    y = np.array([-1.0, 0.0, 0.0, 2.5])
    np.testing.assert_array_equal(isotonic_project(y), y)


def test_isotonic_projection_with_anchors():
    pooled = isotonic_project([0.0, 5.0, 1.0, 2.0], anchors=[(0, 0.0)])
    np.testing.assert_allclose(pooled, [0.0, 8.0 / 3.0, 8.0 / 3.0, 8.0 / 3.0])
    clipped = isotonic_project([0.0, -1.0, 3.0, 1.0], anchors=[(0, 0.0), (3, 1.0)])
    np.testing.assert_allclose(clipped, [0.0, 0.0, 1.0, 1.0])


@pytest.mark.parametrize("anchors", [[(0, 1.0), (2, 0.0)], [(1, 0.0), (1, 0.5)], [(7, 0.0)]])
def test_isotonic_projection_rejects_bad_anchors(anchors):
    with pytest.raises(ParameterError):
        isotonic_project(np.zeros(4), anchors=anchors)


def test_project_lift_keeps_anchors_and_degree():
    grid = Grid(8, 24)
    rng = np.random.default_rng(2)
    phi = grid.theta_nodes + 0.8 * rng.normal(size=grid.n_theta)
    lifted = project_lift(phi, grid.anchor_indices, grid.anchor_values)
    assert np.all(np.diff(lifted) >= 0)
    assert lifted[-1] <= TWO_PI
    assert lifted[grid.anchor_indices].tolist() == grid.anchor_values.tolist()


def test_step_satisfies_energy_inequality():
    grid = Grid(12, 24)
    curves = offset_circles(1.0, 0.8, 0.2)
    g = flat_metric(grid)
    mass = assemble_operators(g, grid).mass
    rng = np.random.default_rng(4)
    for seed in range(5):
        v = noisy_map(grid, curves, seed=seed)
        h = float(rng.uniform(1e-3, 1e-1))
        w, report = minimize_step(v, g, h, curves)
        e_v = energy(v, g)
        lhs = energy(w, g) + 0.5 / h * l2_norm(w.values - v.values, mass) ** 2
        assert lhs <= e_v * (1.0 + 1e-11)
        assert report.objective_after <= report.objective_before
        assert admissibility_violations(w, curves) == []


def test_step_moves_boundary_towards_lower_energy():
    grid = Grid(12, 24)
    curves = offset_circles(1.0, 0.8, 0.4)
    g = flat_metric(grid)
    v = initial_map(grid, curves)
    w, report = minimize_step(v, g, 1.0, curves, StepOptions(max_inner=50))
    assert report.objective_after < report.objective_before
    assert not np.array_equal(w.boundary_plus, v.boundary_plus)
    assert admissibility_violations(w, curves) == []


def test_frozen_boundary_keeps_trace():
    grid = Grid(10, 24)
    curves = coaxial_circles(1.0, 0.8)
    v = noisy_map(grid, curves)
    w, report = minimize_step(v, flat_metric(grid), 0.05, curves, StepOptions(freeze_boundary=True))
    plus, minus = grid.boundary_rows
    np.testing.assert_array_equal(w.values[plus], v.values[plus])
    np.testing.assert_array_equal(w.values[minus], v.values[minus])
    assert report.iterations == 1
    assert report.interior_residual <= 1e-9


def test_infinite_time_step_gives_harmonic_interior():
    grid = Grid(10, 24)
    curves = coaxial_circles(1.0, 0.8)
    g = flat_metric(grid)
    v = noisy_map(grid, curves)
    w, _ = minimize_step(v, g, np.inf, curves, StepOptions(freeze_boundary=True))
    stiffness = assemble_operators(g, grid).stiffness
    residual = (stiffness @ w.values)[grid.interior_nodes]
    assert np.max(np.abs(residual)) < 1e-8 * np.max(np.abs(stiffness @ v.values))


def test_step_rejects_nonpositive_time_step():
    grid = Grid(8, 12)
    curves = coaxial_circles(1.0, 0.8)
    with pytest.raises(ParameterError):
        minimize_step(initial_map(grid, curves), flat_metric(grid), 0.0, curves)


def test_boundary_gradient_matches_finite_differences():
    grid = Grid(10, 24)
    curves = offset_circles(1.0, 0.8, 0.3)
    g = flat_metric(grid)
    v = initial_map(grid, curves)
    w = noisy_map(grid, curves, scale=0.03, seed=9)
    h = 0.05
    grad_plus, grad_minus = boundary_gradient(w, v, g, h, curves)
    direction = np.sin(3.0 * grid.theta_nodes)
    eps = 1e-6

    def shifted(t):
        moved = w.with_boundary(curves, w.boundary_plus + t * direction, w.boundary_minus - t * direction)
        return objective(v, moved, g, h)

    numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps)
    analytic = float(grad_plus @ direction - grad_minus @ direction)
    assert numeric == pytest.approx(analytic, rel=1e-5)


def test_clamp_scales_interior_only():
    values = np.array([[3.0, 4.0], [0.3, 0.4], [6.0, 8.0]])
    clamped = _clamp(values, 1.0, np.array([0, 1]))
    np.testing.assert_allclose(clamped, [[0.6, 0.8], [0.3, 0.4], [6.0, 8.0]])


def test_clamped_step_stays_in_the_ball_of_the_previous_map():
    grid = Grid(10, 30)
    curves = coaxial_circles(1.0, 0.8)
    v = initial_map(grid, curves)
    node = int(grid.interior_nodes[len(grid.interior_nodes) // 2])
    for coupling in (0.8, -0.8):
        ones = np.ones(grid.n_triangles)
        g = TensorField(ones, coupling * ones, ones)
        row = assemble_operators(g, grid).stiffness.tocsr()[node].toarray().ravel()
        row[node] = 0.0
        if np.any(row > 1e-12):
            break
    assert np.any(row > 1e-12)
    # neighbours across obtuse angles pull the node away from the others
    values = v.values.copy()
    values[grid.interior_nodes] = 0.0
    neighbours = np.flatnonzero(row)
    values[neighbours, 2] = np.where(row[neighbours] > 0, -5.0, 5.0)
    values[node, 2] = 5.0
    values[grid.boundary_rows[0]] = v.values[grid.boundary_rows[0]]
    values[grid.boundary_rows[1]] = v.values[grid.boundary_rows[1]]
    start = v.with_values(values)
    options = StepOptions(freeze_boundary=True)

    free, _ = minimize_step(start, g, 1e-4, curves, options)
    assert abs(free.values[node, 2]) > 5.0

    w, report = minimize_step(start, g, 1e-4, curves, StepOptions(freeze_boundary=True, clamp=True))
    assert report.clamp_applied
    assert np.max(np.linalg.norm(w.values[grid.interior_nodes], axis=1)) <= 5.0 + 1e-12
    assert report.objective_after <= report.objective_before
