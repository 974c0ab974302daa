"""
Diagnostics module for flow runs.

Stationarity residual against a fixed family of probe vector fields, the
two-disc report of a degenerated cylinder and the a-priori bounds coupling
energy, δ_Γ and ℓ.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from common_utils.errors import UsageError
from geometry.collar import half_length_Y
from geometry.moebius import dsmoothstep, pullback_metric, smoothstep
from geometry.tensors import TensorField
from schemas.flow import DiscReport
from solver.hopf import MetricState
from surface.mesh import (
    SurfaceMap,
    area_by_mask,
    assemble_operators,
    energy_density,
    gradients,
    hopf_tensor,
    tensor_l1_norm,
)

TWO_PI = 2.0 * np.pi
COLLAR_MARGIN = 0.1
METRIC_FD_STEP = 1e-6


def energy_lower_bound(delta: float, state: MetricState) -> float:
    """(π/2) δ_Γ^2 / Y(ℓ): every θ-line joins the two curves."""
    return 0.5 * np.pi * delta**2 / half_length_Y(state.collar)


def probe_fields(x, theta):
    """
    The twelve probe fields as (X^x, X^θ, ∂_x X^x, ∂_θ X^x, ∂_x X^θ, ∂_θ X^θ).

    Six fields (1 - x^2) x^k {cos θ, sin θ} ∂_x vanish on ∂C0, six fields
    x^k {sin 3θ, 1 - cos 3θ} ∂_θ are tangent to ∂C0 and vanish at the
    anchors θ = 2πk/3.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    zero = np.zeros_like(x)
    fields = []
    for k in range(3):
        poly, dpoly = x**k, k * x ** max(k - 1, 0) if k else zero
        bump, dbump = 1.0 - x**2, -2.0 * x
        radial, dradial = bump * poly, dbump * poly + bump * dpoly
        for f, df in ((np.cos(theta), -np.sin(theta)), (np.sin(theta), np.cos(theta))):
            fields.append((radial * f, zero, dradial * f, radial * df, zero, zero))
    for k in range(3):
        poly, dpoly = x**k, k * x ** max(k - 1, 0) if k else zero
        for f, df in ((np.sin(3 * theta), 3 * np.cos(3 * theta)), (1 - np.cos(3 * theta), 3 * np.sin(3 * theta))):
            fields.append((zero, poly * f, zero, zero, dpoly * f, poly * df))
    return fields


def _metric_gradient(state: MetricState) -> tuple[TensorField, TensorField]:
    x, theta = state.grid.centroids

    def at(dx, dt):
        return pullback_metric(state.collar, state.diffeo, state.cutoffs, x + dx, theta + dt)

    # one-sided at the ends of [-1, 1], where the chart is clipped
    up_x = np.minimum(x + METRIC_FD_STEP, 1.0) - x
    down_x = x - np.maximum(x - METRIC_FD_STEP, -1.0)
    d_x = (at(up_x, 0.0) - at(-down_x, 0.0)) / (up_x + down_x)
    d_t = (at(0.0, METRIC_FD_STEP) - at(0.0, -METRIC_FD_STEP)) / (2.0 * METRIC_FD_STEP)
    return d_x, d_t


def lie_derivative(g: TensorField, dg_x: TensorField, dg_t: TensorField, probe) -> TensorField:
    """(L_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k."""
    X_x, X_t, dXx_x, dXx_t, dXt_x, dXt_t = probe
    transport = dg_x * X_x + dg_t * X_t
    xx = 2.0 * (g.xx * dXx_x + g.xt * dXt_x)
    xt = g.xx * dXx_t + g.xt * dXt_t + g.xt * dXx_x + g.tt * dXt_x
    tt = 2.0 * (g.xt * dXx_t + g.tt * dXt_t)
    return transport + TensorField(xx, xt, tt)


def _nodal_average(grid) -> sp.csr_matrix:
    tri = grid.triangles
    rows = tri.ravel()
    cols = np.repeat(np.arange(grid.n_triangles), 3)
    incidence = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(grid.n_nodes, grid.n_triangles))
    counts = np.asarray(incidence.sum(axis=1)).ravel()
    return sp.diags(1.0 / counts) @ incidence


def _side_weight(x, side: str | None):
    if side is None:
        return np.ones_like(np.asarray(x, dtype=float))
    signed = np.asarray(x, dtype=float) if side == "plus" else -np.asarray(x, dtype=float)
    return smoothstep((signed - COLLAR_MARGIN) / (2.0 * COLLAR_MARGIN))


def stationarity_residual(u: SurfaceMap, state: MetricState, side: str | None = None) -> float:
    """
    max over probes X of |1/4 ∫ Re Φ · L_X g dv_g + ∫ Du(X) · Δ_g u dv_g| / E.

    With side = "plus" or "minus" the probes are cut off smoothly outside
    the corresponding half, away from the central circle.
    """
    grid = u.grid
    g = state.metric
    x_c, t_c = grid.centroids
    x_n, t_n = grid.node_coords
    density = energy_density(u, g)
    dv = g.sqrt_det() * grid.triangle_area
    weight_c = _side_weight(x_c, side)
    total = float(np.sum(density * dv * (weight_c if side else 1.0)))
    if total <= 1e-300:
        return 0.0

    re_phi = hopf_tensor(u, g)
    dg_x, dg_t = _metric_gradient(state)
    ops = assemble_operators(g, grid)
    laplace = np.zeros_like(u.values)
    interior = grid.interior_nodes
    laplace[interior] = -(ops.stiffness @ u.values)[interior] / ops.mass[interior, None]
    u_x, u_t = gradients(u)
    average = _nodal_average(grid)
    nodal_x, nodal_t = average @ u_x, average @ u_t

    worst = 0.0
    weight_n = _side_weight(x_n, side)
    for probe_c, probe_n in zip(probe_fields(x_c, t_c), probe_fields(x_n, t_n)):
        if side is not None:
            probe_c = _cut_off(probe_c, x_c, side)
            probe_n = tuple(component * weight_n for component in probe_n)
        metric_term = 0.25 * float(np.sum(re_phi.pairing(lie_derivative(g, dg_x, dg_t, probe_c), g) * dv))
        du_x = nodal_x * probe_n[0][:, None] + nodal_t * probe_n[1][:, None]
        map_term = float(np.sum(ops.mass[:, None] * du_x * laplace))
        worst = max(worst, abs(metric_term + map_term))
    return worst / total


def _cut_off(probe, x, side):
    """Multiply a probe by the side weight χ(x), with the product rule in ∂_x."""
    chi = _side_weight(x, side)
    signed = np.asarray(x) if side == "plus" else -np.asarray(x)
    dchi = dsmoothstep((signed - COLLAR_MARGIN) / (2.0 * COLLAR_MARGIN)) / (2.0 * COLLAR_MARGIN)
    dchi = dchi if side == "plus" else -dchi
    X_x, X_t, dXx_x, dXx_t, dXt_x, dXt_t = probe
    return (
        chi * X_x,
        chi * X_t,
        chi * dXx_x + dchi * X_x,
        chi * dXx_t,
        chi * dXt_x + dchi * X_t,
        chi * dXt_t,
    )


def extract_discs(u: SurfaceMap, state: MetricState, curves, classification: str) -> tuple[DiscReport, DiscReport]:
    """
    Split a degenerated cylinder at x = 0 into the halves C^+ and C^- and
    report the area, conformality and boundary covering of each.
    """
    if classification != "DegenerateTwoDiscs":
        raise UsageError(f"extract_discs needs a DegenerateTwoDiscs run, got {classification}")
    grid = u.grid
    g = state.metric
    x_c, _ = grid.centroids
    re_phi = hopf_tensor(u, g)
    density = energy_density(u, g) * g.sqrt_det() * grid.triangle_area
    plus_nodes, minus_nodes = grid.boundary_rows
    reports = []
    for side, sign, lift, nodes, curve in (
        ("plus", 1.0, u.boundary_plus, plus_nodes, curves[0]),
        ("minus", -1.0, u.boundary_minus, minus_nodes, curves[1]),
    ):
        half = sign * x_c > 0
        outer = sign * x_c >= COLLAR_MARGIN
        l1 = tensor_l1_norm(re_phi, g, grid, mask=outer)
        half_energy = float(np.sum(density[half]))
        steps = np.diff(np.append(lift, lift[0] + TWO_PI))
        backward = float(max(0.0, -np.min(steps)))
        if backward > 0:
            logging.warning(f"Boundary lift of the {side} disc runs backwards by {backward:.3e}")
        reports.append(
            DiscReport(
                side=side,
                area=area_by_mask(u, half),
                energy=half_energy,
                conformality_l1=l1,
                conformality_relative=l1 / half_energy if half_energy > 0 else 0.0,
                boundary_span=float(np.sum(np.abs(steps))),
                monotonicity_violation=backward,
                trace_error=float(np.max(np.linalg.norm(u.values[nodes] - curve(lift), axis=1))),
                stationarity=stationarity_residual(u, state, side=side),
            )
        )
    return reports[0], reports[1]
