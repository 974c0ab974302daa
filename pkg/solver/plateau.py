"""
Plateau step module: one map update of the time-discretisation scheme.

For a frozen metric g and the previous map v, minimise

    F(w) = E(w, g) + 1/(2h) ‖w - v‖^2_{L^2(C0, g)}

over discrete maps with Plateau boundary data. Interior values and the
boundary reparametrisations φ^± are updated alternately: a Jacobi
preconditioned CG solve for the interior, then one projected-gradient
Armijo step for φ^± onto the monotone, three-point anchored lifts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import isotonic_regression
from scipy.sparse.linalg import cg

from common_utils.errors import MinimizerError, NumericalFailure, ParameterError
from geometry.tensors import TensorField
from surface.curves import BoundaryCurve
from surface.mesh import Operators, SurfaceMap, assemble_operators, linf_norm

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class StepOptions:
    tol_lin: float = 1e-10
    tol_kkt: float = 1e-8
    max_inner: int = 200
    rel_decrease: float = 1e-11
    clamp: bool = False
    freeze_boundary: bool = False
    armijo: float = 1e-4


@dataclass(frozen=True)
class StepReport:
    objective_before: float
    objective_after: float
    iterations: int
    interior_residual: float
    kkt_residual: float
    clamp_applied: bool
    converged: bool


def isotonic_project(y, anchors=()) -> np.ndarray:
    """
    Euclidean projection of y onto nondecreasing sequences with y[i] = value
    at each anchor (i, value).

    Each free run between anchors is solved by pool-adjacent-violators and
    clamped into the interval spanned by its neighbouring anchor values.
    """
    y = np.asarray(y, dtype=float)
    anchors = sorted((int(i), float(v)) for i, v in anchors)
    indices = [i for i, _ in anchors]
    values = [v for _, v in anchors]
    if len(set(indices)) != len(indices) or any(i < 0 or i >= len(y) for i in indices):
        raise ParameterError("anchor indices must be distinct and inside the vector")
    if np.any(np.diff(values) < 0):
        raise ParameterError("anchor values must be nondecreasing")

    out = y.copy()
    for k in range(len(anchors) + 1):
        start = indices[k - 1] + 1 if k > 0 else 0
        stop = indices[k] if k < len(anchors) else len(y)
        if stop <= start:
            continue
        lower = values[k - 1] if k > 0 else -np.inf
        upper = values[k] if k < len(anchors) else np.inf
        out[start:stop] = np.clip(isotonic_regression(y[start:stop]).x, lower, upper)
    for i, v in anchors:
        out[i] = v
    return out


def project_lift(phi: np.ndarray, anchor_idx: np.ndarray, anchor_val: np.ndarray) -> np.ndarray:
    """Project a boundary lift onto monotone lifts of degree one through the anchors."""
    n = len(phi)
    extended = np.append(phi, TWO_PI)
    anchors = list(zip(anchor_idx, anchor_val)) + [(n, TWO_PI)]
    return isotonic_project(extended, anchors)[:n]


class _Objective:
    """F(w) and its nodal gradient for fixed (g, v, h)."""

    def __init__(self, ops: Operators, v: np.ndarray, h: float):
        self.ops = ops
        self.v = v
        self.inv_h = 0.0 if np.isinf(h) else 1.0 / h
        self.system = sp.csr_matrix(ops.stiffness + sp.diags(ops.mass * self.inv_h))

    def value(self, w: np.ndarray) -> float:
        diff = w - self.v
        quad = np.sum(w * (self.ops.stiffness @ w))
        mass = np.sum(self.ops.mass[:, None] * diff**2)
        return float(0.5 * quad + 0.5 * self.inv_h * mass)

    def residual(self, w: np.ndarray) -> np.ndarray:
        """∂F/∂w per node: (S + M/h) w - (M/h) v."""
        return self.system @ w - (self.ops.mass * self.inv_h)[:, None] * self.v


def objective(v: SurfaceMap, w: SurfaceMap, g: TensorField, h: float) -> float:
    """F_{g,v}^h(w)."""
    return _Objective(assemble_operators(g, v.grid), v.values, h).value(w.values)


def boundary_gradient(w: SurfaceMap, v: SurfaceMap, g: TensorField, h: float, curves) -> tuple[np.ndarray, np.ndarray]:
    """∂F/∂φ^± per boundary node: nodal residual paired with α^±'(φ^±)."""
    obj = _Objective(assemble_operators(g, w.grid), v.values, h)
    return _boundary_gradient(obj, w, curves)


def _boundary_gradient(obj: _Objective, w: SurfaceMap, curves) -> tuple[np.ndarray, np.ndarray]:
    residual = obj.residual(w.values)
    plus_nodes, minus_nodes = w.grid.boundary_rows
    grad_plus = np.sum(residual[plus_nodes] * curves[0].derivative(w.boundary_plus), axis=1)
    grad_minus = np.sum(residual[minus_nodes] * curves[1].derivative(w.boundary_minus), axis=1)
    return grad_plus, grad_minus


def _solve_interior(obj: _Objective, w: SurfaceMap, tol: float) -> tuple[SurfaceMap, float]:
    grid = w.grid
    interior = grid.interior_nodes
    boundary = np.concatenate(grid.boundary_rows)
    a_ii = obj.system[interior][:, interior]
    a_ib = obj.system[interior][:, boundary]
    rhs = (obj.ops.mass[interior] * obj.inv_h)[:, None] * obj.v[interior] - a_ib @ w.values[boundary]
    precond = sp.diags(1.0 / a_ii.diagonal())
    values = w.values.copy()
    worst = 0.0
    for comp in range(values.shape[1]):
        b = rhs[:, comp]
        x, info = cg(a_ii, b, x0=values[interior, comp], rtol=tol, atol=0.0, M=precond, maxiter=20 * len(interior))
        if info != 0:
            raise NumericalFailure(f"CG stagnated on component {comp} (info={info})")
        scale = max(np.linalg.norm(b), 1e-300)
        worst = max(worst, float(np.linalg.norm(a_ii @ x - b) / scale))
        values[interior, comp] = x
    return w.with_values(values), worst


def _projected_gradient(w: SurfaceMap, grads) -> float:
    grid = w.grid
    worst = 0.0
    for lift, grad in ((w.boundary_plus, grads[0]), (w.boundary_minus, grads[1])):
        moved = project_lift(lift - grad, grid.anchor_indices, grid.anchor_values)
        worst = max(worst, float(np.max(np.abs(lift - moved))))
    return worst


def _boundary_step(obj: _Objective, w: SurfaceMap, curves, f_current: float, tau: float, armijo: float):
    grid = w.grid
    grads = _boundary_gradient(obj, w, curves)
    for _ in range(50):
        phi_plus = project_lift(w.boundary_plus - tau * grads[0], grid.anchor_indices, grid.anchor_values)
        phi_minus = project_lift(w.boundary_minus - tau * grads[1], grid.anchor_indices, grid.anchor_values)
        step = np.concatenate([phi_plus - w.boundary_plus, phi_minus - w.boundary_minus])
        if not np.any(step):
            return w, f_current, tau, False
        candidate = w.with_boundary(curves, phi_plus, phi_minus)
        f_new = obj.value(candidate.values)
        if f_new <= f_current + armijo * float(np.concatenate(grads) @ step):
            return candidate, f_new, 2.0 * tau, True
        tau *= 0.5
    return w, f_current, tau, False


def _initial_tau(obj: _Objective, w: SurfaceMap, curves) -> float:
    plus_nodes, minus_nodes = w.grid.boundary_rows
    diag = obj.system.diagonal()
    speed_sq = max(
        float(np.max(np.sum(curves[0].derivative(w.boundary_plus) ** 2, axis=1))),
        float(np.max(np.sum(curves[1].derivative(w.boundary_minus) ** 2, axis=1))),
    )
    return 1.0 / max(float(np.max(diag[np.concatenate([plus_nodes, minus_nodes])])) * speed_sq, 1e-300)


def _clamp(values: np.ndarray, radius: float, interior: np.ndarray) -> np.ndarray:
    clamped = values.copy()
    norms = np.linalg.norm(clamped[interior], axis=1)
    factor = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    clamped[interior] *= factor[:, None]
    return clamped


def minimize_step(
    v: SurfaceMap,
    g: TensorField,
    h: float,
    curves: tuple[BoundaryCurve, BoundaryCurve],
    options: StepOptions | None = None,
    operators: Operators | None = None,
) -> tuple[SurfaceMap, StepReport]:
    """
    Minimise F_{g,v}^h by block coordinate descent starting from v.

    Returns the minimiser w with F(w) <= F(v) = E(v, g) and a StepReport.
    With options.clamp the interior of w lies in the ball of radius ‖v‖_∞;
    when projecting onto that ball would push F above F(v), v is returned.
    """
    options = options or StepOptions()
    if not h > 0:
        raise ParameterError(f"time step must be positive, got {h}")
    ops = operators or assemble_operators(g, v.grid)
    obj = _Objective(ops, v.values, h)
    f_start = obj.value(v.values)
    w, f_prev = v, f_start
    tau = _initial_tau(obj, v, curves)
    interior_residual = 0.0
    iterations = 0
    for iterations in range(1, options.max_inner + 1):
        f_iteration_start = f_prev
        w, interior_residual = _solve_interior(obj, w, options.tol_lin)
        f_new = obj.value(w.values)
        if f_new > f_prev + 1e-12 * max(abs(f_prev), 1.0):
            raise MinimizerError(f"objective increased from {f_prev:.15e} to {f_new:.15e}")
        f_prev = min(f_new, f_prev)
        if options.freeze_boundary:
            break
        if iterations > 1 and (f_iteration_start - f_prev) <= options.rel_decrease * max(abs(f_prev), 1e-300):
            break
        w, f_prev, tau, moved = _boundary_step(obj, w, curves, f_prev, tau, options.armijo)
        if not moved:
            break
    else:
        w, interior_residual = _solve_interior(obj, w, options.tol_lin)
        f_prev = min(f_prev, obj.value(w.values))

    clamp_applied = False
    if options.clamp:
        radius = linf_norm(v.values)
        clamped = w.with_values(_clamp(w.values, radius, v.grid.interior_nodes))
        clamp_applied = bool(np.any(clamped.values != w.values))
        f_clamped = obj.value(clamped.values)
        if f_clamped <= f_start:
            w, f_prev = clamped, f_clamped
        else:
            logging.warning("L-infinity clamp raised the objective above F(v); keeping the previous map")
            w, f_prev = v, f_start

    grid = w.grid
    for lift in (w.boundary_plus, w.boundary_minus):
        if np.any(np.diff(lift) < 0) or np.any(lift[grid.anchor_indices] != grid.anchor_values):
            raise MinimizerError("boundary lift lost monotonicity or anchoring")

    kkt = 0.0 if options.freeze_boundary else _projected_gradient(w, _boundary_gradient(obj, w, curves))
    converged = interior_residual <= max(options.tol_lin, 1e-14) * 10 and (options.freeze_boundary or kkt <= options.tol_kkt)
    if not converged:
        logging.debug(f"Map step stopped after {iterations} sweeps: interior {interior_residual:.2e}, kkt {kkt:.2e}")
    report = StepReport(
        objective_before=f_start,
        objective_after=f_prev,
        iterations=iterations,
        interior_residual=interior_residual,
        kkt_residual=kkt,
        clamp_applied=clamp_applied,
        converged=converged,
    )
    return w, report
