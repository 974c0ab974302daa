"""
Hopf projection module: the metric side of the flow.

The admissible metrics g = h_{b,φ}^* G_ℓ form a 7-parameter family with
tangent tensors T0 = ∂g/∂ℓ and T1..T6 = ∂g/∂(Re b^+, Im b^+, Re b^-,
Im b^-, φ^+, φ^-). The flow moves the parameters with velocity c where
Σ c_i T_i = 1/4 P^V(Re Φ(u, g)), the L^2(g)-projection onto their span.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from common_utils.errors import DegenerateBasisError, ParameterError
from geometry.collar import CollarParams, collar_chart, dz2_norms
from geometry.moebius import CutoffPair, DiffeoParams, h_jacobian, pullback_metric, tangent_tensors
from geometry.tensors import TensorField
from surface.mesh import Grid, SurfaceMap, energy_density, hopf_components, hopf_tensor, tensor_l2_pairing

GRAM_CONDITION_LIMIT = 1e12
ELL_FLOOR = 1e-6
B_CEILING = 0.995


@dataclass(frozen=True, eq=False)
class MetricState:
    """
    Immutable snapshot (ℓ, b^±, φ^±) of the metric with its per-triangle caches.

    Parameter vector order: (ℓ, Re b^+, Im b^+, Re b^-, Im b^-, φ^+, φ^-),
    matching the tangent tensors T0..T6.
    """

    collar: CollarParams
    diffeo: DiffeoParams
    grid: Grid
    cutoffs: CutoffPair = field(default_factory=CutoffPair)

    @classmethod
    def initial(cls, grid: Grid, eta: float = 1.0, ell: float | None = None, cutoffs: CutoffPair | None = None):
        collar = CollarParams(eta=eta, ell=1.0)
        collar = collar.with_ell(ell if ell is not None else collar.ell0)
        return cls(collar, DiffeoParams(), grid, cutoffs or CutoffPair())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.collar.ell], self.diffeo.as_vector()])

    def with_vector(self, vector) -> "MetricState":
        vector = np.asarray(vector, dtype=float)
        return MetricState(
            self.collar.with_ell(float(vector[0])),
            DiffeoParams.from_vector(vector[1:]),
            self.grid,
            self.cutoffs,
        )

    @property
    def ell(self) -> float:
        return self.collar.ell

    @property
    def max_abs_b(self) -> float:
        return max(abs(complex(self.diffeo.b_plus)), abs(complex(self.diffeo.b_minus)))

    @cached_property
    def metric(self) -> TensorField:
        x, theta = self.grid.centroids
        return pullback_metric(self.collar, self.diffeo, self.cutoffs, x, theta)

    @cached_property
    def chart_jacobian(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(s', ∂θ'/∂x, ∂θ'/∂θ) of F = f_ℓ ∘ h_{b,φ} per triangle."""
        x, theta = self.grid.centroids
        s_x = collar_chart(self.collar).ds_dx(x)
        theta_x, theta_theta = h_jacobian(self.diffeo, self.cutoffs, x, theta)
        return s_x, theta_x, theta_theta

    @cached_property
    def conformal_factor(self) -> np.ndarray:
        """ρ_ℓ at F(x, θ) per triangle; depends on x only."""
        x, _ = self.grid.centroids
        return collar_chart(self.collar).conformal_factor(x)

    @cached_property
    def tangents(self) -> list[TensorField]:
        x, theta = self.grid.centroids
        return tangent_tensors(self.collar, self.diffeo, self.cutoffs, x, theta)

    @cached_property
    def gram(self) -> np.ndarray:
        tangents = self.tangents
        gram = np.empty((7, 7))
        for i in range(7):
            for j in range(i, 7):
                gram[i, j] = gram[j, i] = tensor_l2_pairing(tangents[i], tangents[j], self.metric, self.grid)
        return gram

    @cached_property
    def _factor(self):
        diag = np.diag(self.gram)
        if np.any(diag <= 0):
            raise DegenerateBasisError("a tangent tensor vanishes")
        scale = 1.0 / np.sqrt(diag)
        equilibrated = self.gram * np.outer(scale, scale)
        condition = float(np.linalg.cond(equilibrated))
        if not np.isfinite(condition) or condition > GRAM_CONDITION_LIMIT:
            raise DegenerateBasisError(f"Gram matrix condition number {condition:.3e} exceeds {GRAM_CONDITION_LIMIT:.0e}")
        return cho_factor(equilibrated), scale

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        factor, scale = self._factor
        return scale * cho_solve(factor, scale * rhs)


def project_hopf(re_phi: TensorField, state: MetricState) -> tuple[np.ndarray, float]:
    """
    Coefficients c with ⟨Σ c_i T_i, T_j⟩ = 1/4 ⟨Re Φ, T_j⟩ for all j, and ‖Σ c_i T_i‖_{L^2(g)}.
    """
    rhs = np.array([0.25 * tensor_l2_pairing(re_phi, t, state.metric, state.grid) for t in state.tangents])
    coeffs = state.solve_gram(rhs)
    norm_sq = float(coeffs @ state.gram @ coeffs)
    return coeffs, float(np.sqrt(max(norm_sq, 0.0)))


def reconstruct(coeffs: np.ndarray, state: MetricState) -> TensorField:
    """Σ c_i T_i, the metric velocity ∂_t g."""
    total = state.tangents[0] * coeffs[0]
    for c, t in zip(coeffs[1:], state.tangents[1:]):
        total = total + t * c
    return total


def flow_coefficients(u: SurfaceMap, state: MetricState) -> tuple[np.ndarray, float]:
    """Metric velocity of the flow for the frozen map u."""
    return project_hopf(hopf_tensor(u, state.metric), state)


def dl_dt_closed_form(u: SurfaceMap, state: MetricState) -> float:
    """
    dℓ/dt = -(2π^2/ℓ) Re(c0) / 4 with c0 = ⟨Φ, dz^2⟩ / ‖dz^2‖^2.

    ⟨Φ, dz^2⟩ is integrated in collar coordinates, where |dz^2|^2_g dv_g = 4ρ^{-2} ds dθ,
    and carried to (x, θ) by det J_F = s' ∂θ'/∂θ.
    """
    components = hopf_components(u, state)
    s_x, _, theta_theta = state.chart_jacobian
    weight = 4.0 / state.conformal_factor**2 * s_x * theta_theta * state.grid.triangle_area
    pairing = float(np.sum(components.phi1 * weight))
    _, l2_norm_sq = dz2_norms(state.collar)
    c0 = pairing / l2_norm_sq
    return -2.0 * np.pi**2 / state.ell * c0 / 4.0


def energy_metric_derivative(u: SurfaceMap, state: MetricState, direction: TensorField) -> float:
    """d/dε E(u, g + εk) = -1/4 ⟨Re Φ, k⟩_{L^2(g)}."""
    re_phi = hopf_tensor(u, state.metric)
    return -0.25 * tensor_l2_pairing(re_phi, direction, state.metric, state.grid)


def weighted_energy_I(u: SurfaceMap, state: MetricState) -> float:
    """I = ∫ e(u, g) ρ^{-2} dv_g, ρ the collar conformal factor composed with h."""
    density = energy_density(u, state.metric)
    dv = state.metric.sqrt_det() * state.grid.triangle_area
    return float(np.sum(density * dv / state.conformal_factor**2))


def _breach(vector: np.ndarray, ell_floor: float, b_ceiling: float) -> str | None:
    if not vector[0] > ell_floor:
        return "ell_floor"
    if abs(complex(vector[1], vector[2])) >= b_ceiling or abs(complex(vector[3], vector[4])) >= b_ceiling:
        return "b_ceiling"
    return None


def ode_step(
    state: MetricState,
    u: SurfaceMap,
    dt: float,
    n_sub: int = 4,
    ell_floor: float = ELL_FLOOR,
    b_ceiling: float = B_CEILING,
    max_refine: int = 6,
    refine_threshold: float = 0.05,
    initial_velocity: np.ndarray | None = None,
) -> tuple[MetricState, str | None]:
    """
    Advance the metric parameters over dt with u frozen, by n_sub explicit
    midpoint substeps; a substep whose relative change in ℓ or change in b
    exceeds refine_threshold is split in halves.
    initial_velocity, when given, is flow_coefficients(u, state)[0].

    Returns the last admissible state and the event that stopped the step,
    None when the full interval was integrated.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if n_sub < 1:
        raise ParameterError("n_sub must be at least 1")

    def velocity(current: MetricState) -> np.ndarray:
        if current is state and initial_velocity is not None:
            return initial_velocity
        return flow_coefficients(u, current)[0]

    def substep(current: MetricState, h: float, depth: int) -> tuple[MetricState, str | None]:
        p = current.as_vector()
        k1 = velocity(current)
        midpoint = p + 0.5 * h * k1
        event = _breach(midpoint, ell_floor, b_ceiling)
        if event is None:
            k2 = velocity(current.with_vector(midpoint))
            candidate = p + h * k2
            event = _breach(candidate, ell_floor, b_ceiling)
        if event is None:
            change = max(abs(candidate[0] - p[0]) / p[0], float(np.max(np.abs(candidate[1:5] - p[1:5]))))
            if change <= refine_threshold or depth >= max_refine:
                return current.with_vector(candidate), None
        if depth >= max_refine:
            return current, event
        logging.debug(f"Refining metric substep h={h:.3e} (depth {depth + 1})")
        half, event = substep(current, 0.5 * h, depth + 1)
        if event is not None:
            return half, event
        return substep(half, 0.5 * h, depth + 1)

    current = state
    for _ in range(n_sub):
        current, event = substep(current, dt / n_sub, 0)
        if event is not None:
            logging.info(f"Metric step stopped by {event} at ell={current.ell:.3e}, |b|max={current.max_abs_b:.4f}")
            return current, event
    return current, None
