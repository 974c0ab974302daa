from types import SimpleNamespace

import numpy as np
import pytest

from common_utils.errors import ParameterError
from surface.curves import coaxial_circles
from surface.mesh import (
    Grid,
    SurfaceMap,
    TensorField,
    admissibility_violations,
    area,
    area_by_mask,
    assemble_operators,
    energy,
    energy_density,
    export_obj,
    gradients,
    hopf_components,
    hopf_tensor,
    initial_map,
    tensor_l1_norm,
    tensor_l2_pairing,
)

TWO_PI = 2.0 * np.pi


def flat_metric(grid):
    return TensorField.diagonal(np.ones(grid.n_triangles), np.ones(grid.n_triangles))


def straight_cylinder(grid, slope=1.0):
    """u(x, θ) = (cos θ, sin θ, slope x); linear in x, a chord polygon in θ."""
    x, theta = grid.node_coords
    values = np.column_stack([np.cos(theta), np.sin(theta), slope * x])
    lift = grid.theta_nodes.copy()
    return SurfaceMap(grid, values, lift, lift.copy())


def chord_ratio(grid):
    return 2.0 * np.sin(0.5 * grid.dtheta) / grid.dtheta


@pytest.mark.parametrize("n_x, n_theta", [(4, 24), (16, 10), (16, 13)])
def test_grid_rejects_bad_sizes(n_x, n_theta):
    with pytest.raises(ParameterError):
        Grid(n_x, n_theta)


def test_grid_counts_and_anchors():
    grid = Grid(8, 12)
    assert grid.n_nodes == 9 * 12
    assert grid.n_triangles == 2 * 8 * 12
    assert grid.triangles.shape == (grid.n_triangles, 3)
    assert grid.theta_nodes[grid.anchor_indices].tolist() == (TWO_PI * np.arange(3) / 3.0).tolist()
    plus, minus = grid.boundary_rows
    x, _ = grid.node_coords
    np.testing.assert_array_equal(x[plus], 1.0)
    np.testing.assert_array_equal(x[minus], -1.0)
    assert len(grid.interior_nodes) == 7 * 12


def test_gradients_of_linear_functions():
    grid = Grid(8, 12)
    x, theta = grid.node_coords
    u = SurfaceMap(grid, np.column_stack([3.0 * x, np.zeros_like(x)]), grid.theta_nodes, grid.theta_nodes)
    u_x, u_t = gradients(u)
    np.testing.assert_allclose(u_x[:, 0], 3.0, rtol=1e-12)
    np.testing.assert_allclose(u_t, 0.0, atol=1e-12)


def test_surface_map_checks_shape():
    grid = Grid(8, 12)
    with pytest.raises(ParameterError):
        SurfaceMap(grid, np.zeros((5, 3)), grid.theta_nodes, grid.theta_nodes)


def test_energy_of_straight_cylinder():
    grid = Grid(8, 24)
    u = straight_cylinder(grid, slope=0.7)
    expected = 0.5 * 2.0 * TWO_PI * (0.49 + chord_ratio(grid) ** 2)
    assert energy(u, flat_metric(grid)) == pytest.approx(expected, rel=1e-12)


def test_energy_density_integrates_to_energy():
    grid = Grid(8, 24)
    u = straight_cylinder(grid)
    g = TensorField.diagonal(np.full(grid.n_triangles, 2.0), np.full(grid.n_triangles, 0.5))
    total = np.sum(energy_density(u, g) * g.sqrt_det() * grid.triangle_area)
    assert total == pytest.approx(energy(u, g), rel=1e-12)


def test_energy_is_conformally_invariant():
    grid = Grid(10, 24)
    rng = np.random.default_rng(3)
    u = straight_cylinder(grid).with_values(straight_cylinder(grid).values + 0.01 * rng.normal(size=(grid.n_nodes, 3)))
    g = TensorField(
        1.0 + rng.uniform(0.0, 1.0, grid.n_triangles),
        0.2 * rng.uniform(-1.0, 1.0, grid.n_triangles),
        1.0 + rng.uniform(0.0, 1.0, grid.n_triangles),
    )
    factor = rng.uniform(0.1, 10.0, grid.n_triangles)
    assert energy(u, g * factor) == pytest.approx(energy(u, g), rel=1e-13)


def test_stiffness_reproduces_energy_and_mass_is_area():
    grid = Grid(8, 24)
    u = straight_cylinder(grid, slope=0.4)
    g = flat_metric(grid)
    ops = assemble_operators(g, grid)
    quadratic = 0.5 * np.sum(u.values * (ops.stiffness @ u.values))
    assert quadratic == pytest.approx(energy(u, g), rel=1e-12)
    assert ops.total_mass == pytest.approx(2.0 * TWO_PI, rel=1e-12)
    np.testing.assert_allclose(ops.stiffness @ np.ones(grid.n_nodes), 0.0, atol=1e-10)


def test_area_of_straight_cylinder_is_prism_area():
    grid = Grid(8, 24)
    u = straight_cylinder(grid, slope=0.5)
    perimeter = grid.n_theta * 2.0 * np.sin(np.pi / grid.n_theta)
    assert area(u) == pytest.approx(2.0 * 0.5 * perimeter, rel=1e-12)
    upper = grid.triangle_mask(lambda x: x > 0)
    assert area_by_mask(u, upper) == pytest.approx(0.5 * area(u), rel=1e-12)


def test_hopf_tensor_is_trace_free():
    grid = Grid(8, 24)
    rng = np.random.default_rng(5)
    u = straight_cylinder(grid).with_values(rng.normal(size=(grid.n_nodes, 3)))
    g = TensorField(
        1.0 + rng.uniform(0.0, 1.0, grid.n_triangles),
        0.3 * rng.uniform(-1.0, 1.0, grid.n_triangles),
        1.0 + rng.uniform(0.0, 1.0, grid.n_triangles),
    )
    np.testing.assert_allclose(hopf_tensor(u, g).trace_with(g), 0.0, atol=1e-10)


def test_hopf_tensor_of_straight_cylinder():
    grid = Grid(8, 24)
    u = straight_cylinder(grid)
    c2 = chord_ratio(grid) ** 2
    re_phi = hopf_tensor(u, flat_metric(grid))
    np.testing.assert_allclose(re_phi.xx, 1.0 - c2, atol=1e-12)
    np.testing.assert_allclose(re_phi.tt, c2 - 1.0, atol=1e-12)
    np.testing.assert_allclose(re_phi.xt, 0.0, atol=1e-12)


def test_hopf_components_in_identity_chart():
    grid = Grid(8, 24)
    rng = np.random.default_rng(7)
    u = straight_cylinder(grid).with_values(rng.normal(size=(grid.n_nodes, 3)))
    n = grid.n_triangles
    state = SimpleNamespace(chart_jacobian=(np.ones(n), np.zeros(n), np.ones(n)), metric=flat_metric(grid))
    components = hopf_components(u, state)
    transported = components.transported(state.chart_jacobian)
    np.testing.assert_allclose(transported.xx, components.re_phi.xx, atol=1e-10)
    np.testing.assert_allclose(transported.xt, components.re_phi.xt, atol=1e-10)
    np.testing.assert_allclose(transported.tt, components.re_phi.tt, atol=1e-10)


def test_tensor_norms_on_flat_metric():
    grid = Grid(8, 12)
    g = flat_metric(grid)
    n = grid.n_triangles
    a = TensorField(np.ones(n), np.zeros(n), -np.ones(n))
    assert tensor_l1_norm(a, g, grid) == pytest.approx(np.sqrt(2.0) * 2.0 * TWO_PI, rel=1e-12)
    assert tensor_l2_pairing(a, a, g, grid) == pytest.approx(2.0 * 2.0 * TWO_PI, rel=1e-12)
    assert tensor_l1_norm(TensorField.zeros(n), g, grid) == 0.0


def test_initial_map_is_admissible():
    grid = Grid(8, 24)
    curves = coaxial_circles(1.0, 0.8)
    u = initial_map(grid, curves)
    assert admissibility_violations(u, curves) == []
    x, _ = grid.node_coords
    middle = np.isclose(x, 0.0)
    np.testing.assert_allclose(u.values[middle, 2], 0.0, atol=1e-12)


def test_admissibility_detects_broken_boundary():
    grid = Grid(8, 24)
    curves = coaxial_circles(1.0, 0.8)
    u = initial_map(grid, curves)
    lift = u.boundary_plus.copy()
    lift[1], lift[2] = lift[2], lift[1]
    broken = u.with_boundary(curves, lift, u.boundary_minus)
    assert any("monotone" in v for v in admissibility_violations(broken, curves))
    moved = u.boundary_minus.copy()
    moved[0] += 0.01
    shifted = u.with_boundary(curves, u.boundary_plus, moved)
    assert any("anchors" in v for v in admissibility_violations(shifted, curves))
    off = u.with_values(u.values + 1e-6)
    assert any("trace" in v for v in admissibility_violations(off, curves))


def test_export_obj_writes_vertices_and_faces(tmp_path):
    grid = Grid(8, 12)
    path = export_obj(straight_cylinder(grid), tmp_path / "meshes" / "cyl.obj")
    lines = path.read_text().splitlines()
    assert sum(line.startswith("v ") for line in lines) == grid.n_nodes
    assert sum(line.startswith("f ") for line in lines) == grid.n_triangles
    assert all(line.split()[0] in ("v", "f") for line in lines)
