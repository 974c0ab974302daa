"""
Mesh module for the discrete fixed cylinder C0 = [-1, 1] x S^1.

Maps are piecewise linear on a tensor grid whose quads are split into two
triangles along a fixed diagonal; metrics are sampled once per triangle.
With piecewise-constant gradients and metrics the Dirichlet energy

    E(u, g) = 1/2 Σ_T |T| √det g g^{ij} ∂_i u · ∂_j u

is exactly invariant under per-triangle conformal rescaling of g.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from common_utils.errors import NumericalFailure, ParameterError
from geometry.tensors import TensorField
from surface.curves import BoundaryCurve, delta_gamma

TWO_PI = 2.0 * np.pi

__all__ = [
    "BoundaryCurve",
    "Grid",
    "HopfComponents",
    "SurfaceMap",
    "TensorField",
    "area",
    "assemble_operators",
    "delta_gamma",
    "energy",
    "hopf_components",
    "hopf_tensor",
]


@dataclass(frozen=True)
class Grid:
    """
    Tensor grid with n_x cells over [-1, 1] and n_theta periodic cells.

    Node k = i * n_theta + j sits at (x_i, θ_j); row i = 0 is the boundary
    circle x = -1 (Γ^-) and row i = n_x is x = +1 (Γ^+).
    """

    n_x: int
    n_theta: int

    def __post_init__(self):
        if self.n_x < 8:
            raise ParameterError(f"n_x must be at least 8, got {self.n_x}")
        if self.n_theta < 12 or self.n_theta % 3 != 0:
            raise ParameterError(f"n_theta must be >= 12 and divisible by 3, got {self.n_theta}")

    @property
    def dx(self) -> float:
        return 2.0 / self.n_x

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def n_nodes(self) -> int:
        return (self.n_x + 1) * self.n_theta

    @property
    def n_triangles(self) -> int:
        return 2 * self.n_x * self.n_theta

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_x + 1)

    @cached_property
    def theta_nodes(self) -> np.ndarray:
        theta = TWO_PI * np.arange(self.n_theta) / self.n_theta
        # anchors bit-identical to 2πk/3
        theta[np.arange(3) * (self.n_theta // 3)] = TWO_PI * np.arange(3) / 3.0
        return theta

    @cached_property
    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        xx, tt = np.meshgrid(self.x_nodes, self.theta_nodes, indexing="ij")
        return xx.ravel(), tt.ravel()

    def node(self, i, j):
        return np.asarray(i) * self.n_theta + np.mod(j, self.n_theta)

    @cached_property
    def triangles(self) -> np.ndarray:
        """(n_triangles, 3) node indices; cell (i, j) gives (a, b, c) and (a, c, d)."""
        i, j = np.meshgrid(np.arange(self.n_x), np.arange(self.n_theta), indexing="ij")
        i, j = i.ravel(), j.ravel()
        a, b = self.node(i, j), self.node(i + 1, j)
        c, d = self.node(i + 1, j + 1), self.node(i, j + 1)
        lower = np.column_stack([a, b, c])
        upper = np.column_stack([a, c, d])
        return np.vstack([lower, upper])

    @cached_property
    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = np.meshgrid(np.arange(self.n_x), np.arange(self.n_theta), indexing="ij")
        x0 = self.x_nodes[i.ravel()]
        t0 = self.theta_nodes[j.ravel()]
        x = np.concatenate([x0 + 2.0 * self.dx / 3.0, x0 + self.dx / 3.0])
        theta = np.concatenate([t0 + self.dtheta / 3.0, t0 + 2.0 * self.dtheta / 3.0])
        return x, theta

    @property
    def triangle_area(self) -> float:
        return 0.5 * self.dx * self.dtheta

    @cached_property
    def gradient_operators(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Sparse (Dx, Dθ) with ∂_x u = Dx @ u and ∂_θ u = Dθ @ u per triangle."""
        tri = self.triangles
        half = self.n_x * self.n_theta
        rows = np.arange(self.n_triangles)
        lower, upper = rows[:half], rows[half:]
        # lower (a, b, c): u_x = (u_b - u_a)/dx, u_θ = (u_c - u_b)/dθ
        # upper (a, c, d): u_x = (u_c - u_d)/dx, u_θ = (u_d - u_a)/dθ
        dx_rows = np.concatenate([lower, lower, upper, upper])
        dx_cols = np.concatenate([tri[lower, 1], tri[lower, 0], tri[upper, 1], tri[upper, 2]])
        dx_vals = np.concatenate([np.ones(half), -np.ones(half), np.ones(half), -np.ones(half)]) / self.dx
        dt_rows = dx_rows
        dt_cols = np.concatenate([tri[lower, 2], tri[lower, 1], tri[upper, 2], tri[upper, 0]])
        dt_vals = dx_vals * self.dx / self.dtheta
        shape = (self.n_triangles, self.n_nodes)
        d_x = sp.csr_matrix((dx_vals, (dx_rows, dx_cols)), shape=shape)
        d_t = sp.csr_matrix((dt_vals, (dt_rows, dt_cols)), shape=shape)
        return d_x, d_t

    @cached_property
    def boundary_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Node indices of (Γ^+ row x = +1, Γ^- row x = -1)."""
        j = np.arange(self.n_theta)
        return self.node(self.n_x, j), self.node(0, j)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(self.n_theta, self.n_x * self.n_theta)

    @cached_property
    def anchor_indices(self) -> np.ndarray:
        """Positions j of the three anchors θ_k = 2πk/3 on a boundary row."""
        return np.arange(3) * (self.n_theta // 3)

    @cached_property
    def anchor_values(self) -> np.ndarray:
        return TWO_PI * np.arange(3) / 3.0

    def triangle_mask(self, predicate) -> np.ndarray:
        """Boolean mask over triangles selected by predicate(x_centroid)."""
        x, _ = self.centroids
        return np.asarray(predicate(x), dtype=bool)


@dataclass(frozen=True, eq=False)
class SurfaceMap:
    """
    A discrete map u: C0 -> R^n with Plateau boundary data.

    boundary_plus / boundary_minus hold the monotone lifts φ^± at the boundary
    nodes θ_j, so that u(±1, θ_j) = α^±(φ^±(θ_j)).
    """

    grid: Grid
    values: np.ndarray
    boundary_plus: np.ndarray
    boundary_minus: np.ndarray
    _meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.n_nodes:
            raise ParameterError(f"values must have shape ({self.grid.n_nodes}, n)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "boundary_plus", np.asarray(self.boundary_plus, dtype=float))
        object.__setattr__(self, "boundary_minus", np.asarray(self.boundary_minus, dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "SurfaceMap":
        return replace(self, values=np.array(values, dtype=float))

    def with_boundary(self, curves: tuple[BoundaryCurve, BoundaryCurve], phi_plus, phi_minus) -> "SurfaceMap":
        """New map with boundary lifts replaced and the trace re-evaluated on the curves."""
        values = self.values.copy()
        plus_nodes, minus_nodes = self.grid.boundary_rows
        values[plus_nodes] = curves[0](phi_plus)
        values[minus_nodes] = curves[1](phi_minus)
        return replace(self, values=values, boundary_plus=np.array(phi_plus), boundary_minus=np.array(phi_minus))

    def copy(self) -> "SurfaceMap":
        return replace(
            self,
            values=self.values.copy(),
            boundary_plus=self.boundary_plus.copy(),
            boundary_minus=self.boundary_minus.copy(),
        )


def initial_map(grid: Grid, curves: tuple[BoundaryCurve, BoundaryCurve]) -> SurfaceMap:
    """u0(x, θ) = (1 - x)/2 α^-(θ) + (1 + x)/2 α^+(θ) with φ^± = id."""
    alpha_plus, alpha_minus = curves
    if alpha_plus.dim != alpha_minus.dim:
        raise ParameterError("boundary curves live in different dimensions")
    x, theta = grid.node_coords
    weight = 0.5 * (1.0 + x)[:, None]
    values = (1.0 - weight) * alpha_minus(theta) + weight * alpha_plus(theta)
    lift = grid.theta_nodes.copy()
    return SurfaceMap(grid, values, lift, lift.copy()).with_boundary(curves, lift, lift.copy())


def admissibility_violations(u: SurfaceMap, curves: tuple[BoundaryCurve, BoundaryCurve], tol: float = 1e-12) -> list[str]:
    """Names of the SurfaceMap invariants u breaks (empty when admissible)."""
    grid = u.grid
    found = []
    plus_nodes, minus_nodes = grid.boundary_rows
    for label, lift, nodes, curve in (
        ("plus", u.boundary_plus, plus_nodes, curves[0]),
        ("minus", u.boundary_minus, minus_nodes, curves[1]),
    ):
        if np.any(lift[grid.anchor_indices] != grid.anchor_values):
            found.append(f"{label}: three-point anchors moved")
        if np.any(np.diff(lift) < 0) or lift[-1] > lift[0] + TWO_PI:
            found.append(f"{label}: boundary lift not monotone")
        if np.max(np.abs(u.values[nodes] - curve(lift))) > tol:
            found.append(f"{label}: trace off the boundary curve")
    return found


def _metric_weights(g: TensorField, grid: Grid):
    if len(g) != grid.n_triangles:
        raise ParameterError("metric must be sampled once per triangle")
    if np.any(g.det() <= 0) or np.any(g.xx <= 0):
        raise NumericalFailure("metric not positive definite")
    root = g.sqrt_det()
    inv = g.inverse()
    scale = grid.triangle_area * root
    return scale * inv.xx, scale * inv.xt, scale * inv.tt, scale


def gradients(u: SurfaceMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle (∂_x u, ∂_θ u), each of shape (n_triangles, n)."""
    d_x, d_t = u.grid.gradient_operators
    return d_x @ u.values, d_t @ u.values


def energy_density(u: SurfaceMap, g: TensorField) -> np.ndarray:
    """e(u, g) = 1/2 |du|^2_g per triangle."""
    u_x, u_t = gradients(u)
    inv = g.inverse()
    return 0.5 * (
        inv.xx * np.sum(u_x * u_x, axis=1) + 2.0 * inv.xt * np.sum(u_x * u_t, axis=1) + inv.tt * np.sum(u_t * u_t, axis=1)
    )


def energy(u: SurfaceMap, g: TensorField) -> float:
    """Dirichlet energy E(u, g) with piecewise-constant gradients."""
    w_xx, w_xt, w_tt, _ = _metric_weights(g, u.grid)
    u_x, u_t = gradients(u)
    dens = w_xx * np.sum(u_x * u_x, axis=1) + 2.0 * w_xt * np.sum(u_x * u_t, axis=1) + w_tt * np.sum(u_t * u_t, axis=1)
    return float(0.5 * np.sum(dens))


@dataclass(frozen=True, eq=False)
class Operators:
    """Stiffness S (E = 1/2 u^T S u) and lumped mass diagonal M for one metric."""

    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.mass))


def assemble_operators(g: TensorField, grid: Grid) -> Operators:
    """Assemble S and the lumped mass matrix; both deterministic in summation order."""
    w_xx, w_xt, w_tt, scale = _metric_weights(g, grid)
    d_x, d_t = grid.gradient_operators
    cross = d_x.T @ sp.diags(w_xt) @ d_t
    stiffness = d_x.T @ sp.diags(w_xx) @ d_x + d_t.T @ sp.diags(w_tt) @ d_t + cross + cross.T
    mass = np.zeros(grid.n_nodes)
    share = np.repeat(scale / 3.0, 3)
    np.add.at(mass, grid.triangles.ravel(), share)
    return Operators(stiffness=sp.csr_matrix(stiffness), mass=mass)


def l2_norm(values: np.ndarray, mass: np.ndarray) -> float:
    """‖v‖_{L^2(C0, g)} with the lumped mass of g."""
    values = np.atleast_2d(np.asarray(values).T).T
    return float(np.sqrt(np.sum(mass[:, None] * values**2)))


def linf_norm(values: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(np.atleast_2d(np.asarray(values).T).T, axis=1)))


def area(u: SurfaceMap) -> float:
    """Area of the image, Σ_T |T| √(|u_x|^2 |u_θ|^2 - ⟨u_x, u_θ⟩^2)."""
    u_x, u_t = gradients(u)
    gram = np.sum(u_x * u_x, axis=1) * np.sum(u_t * u_t, axis=1) - np.sum(u_x * u_t, axis=1) ** 2
    return float(u.grid.triangle_area * np.sum(np.sqrt(np.maximum(gram, 0.0))))


def area_by_mask(u: SurfaceMap, mask: np.ndarray) -> float:
    u_x, u_t = gradients(u)
    gram = np.sum(u_x * u_x, axis=1) * np.sum(u_t * u_t, axis=1) - np.sum(u_x * u_t, axis=1) ** 2
    return float(u.grid.triangle_area * np.sum(np.sqrt(np.maximum(gram[mask], 0.0))))


def hopf_tensor(u: SurfaceMap, g: TensorField) -> TensorField:
    """Re Φ = 2 u^*g_{R^n} - |du|^2_g g in the coordinates (x, θ)."""
    u_x, u_t = gradients(u)
    pulled = TensorField(
        np.sum(u_x * u_x, axis=1),
        np.sum(u_x * u_t, axis=1),
        np.sum(u_t * u_t, axis=1),
    )
    return pulled * 2.0 - g * pulled.trace_with(g)


@dataclass(frozen=True)
class HopfComponents:
    """Per-triangle φ1 = |u_s|^2 - |u_θ|^2, φ2 = -2⟨u_s, u_θ⟩ and the tensor Re Φ."""

    phi1: np.ndarray
    phi2: np.ndarray
    re_phi: TensorField

    def transported(self, chart_jacobian) -> TensorField:
        """φ1 (ds^2 - dθ^2) - 2 φ2 ds dθ pulled back to (x, θ) by the collar chart."""
        s_x, theta_x, theta_theta = chart_jacobian
        collar = TensorField(self.phi1, -self.phi2, -self.phi1)
        return collar.congruence(s_x, np.zeros_like(s_x), theta_x, theta_theta)


def hopf_components(u: SurfaceMap, metric_state) -> HopfComponents:
    """
    Hopf differential of u with respect to metric_state.metric.

    metric_state supplies the per-triangle Jacobian (s', ∂θ'/∂x, ∂θ'/∂θ) of the
    composite chart F = f_ℓ ∘ h_{b,φ}, in whose coordinates g = ρ^2 (ds^2 + dθ^2).
    """
    s_x, theta_x, theta_theta = metric_state.chart_jacobian
    det = s_x * theta_theta
    if np.any(np.abs(det) <= 0):
        raise NumericalFailure("singular chart Jacobian")
    u_x, u_t = gradients(u)
    u_theta = u_t / theta_theta[:, None]
    u_s = (u_x - theta_x[:, None] * u_theta) / s_x[:, None]
    phi1 = np.sum(u_s * u_s, axis=1) - np.sum(u_theta * u_theta, axis=1)
    phi2 = -2.0 * np.sum(u_s * u_theta, axis=1)
    return HopfComponents(phi1=phi1, phi2=phi2, re_phi=hopf_tensor(u, metric_state.metric))


def tensor_l1_norm(tensor: TensorField, g: TensorField, grid: Grid, mask: np.ndarray | None = None) -> float:
    """‖A‖_{L^1(g)} = Σ_T |T| √det g |A|_g."""
    density = np.sqrt(np.maximum(tensor.norm_sq(g), 0.0)) * g.sqrt_det() * grid.triangle_area
    if mask is not None:
        density = density[mask]
    return float(np.sum(density))


def tensor_l2_pairing(first: TensorField, second: TensorField, g: TensorField, grid: Grid) -> float:
    return float(np.sum(first.pairing(second, g) * g.sqrt_det()) * grid.triangle_area)


def export_obj(u: SurfaceMap, path: str | Path) -> Path:
    """Write the image of u as a Wavefront OBJ with v/f lines only."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = u.values
    if points.shape[1] < 3:
        points = np.hstack([points, np.zeros((points.shape[0], 3 - points.shape[1]))])
    with open(path, "w") as f:
        for p in points:
            f.write(f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}\n")
        for a, b, c in u.grid.triangles + 1:
            f.write(f"f {a} {b} {c}\n")
    logging.debug(f"Exported mesh with {len(points)} vertices to {path}")
    return path
