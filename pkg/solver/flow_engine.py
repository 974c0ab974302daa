"""
Flow engine module for running the time-discretised flow.

This module defines the FlowEngine class, which alternates the two phases
of the scheme on every step t_j -> t_{j+1} = t_j + h: first the metric ODE
with the map frozen, then the map minimisation with the metric frozen. It
records diagnostics per step, stops on stationarity, on T or on a
degeneration event, and classifies the outcome.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from common_utils.errors import ParameterError
from schemas.flow import FlowConfig, FlowRecord, FlowTrajectory
from solver.classification import classify
from solver.diagnostics import energy_lower_bound, stationarity_residual
from solver.hopf import MetricState, flow_coefficients, ode_step, weighted_energy_I
from solver.plateau import StepOptions, minimize_step
from surface.curves import BoundaryCurve, delta_gamma
from surface.mesh import (
    Grid,
    SurfaceMap,
    area,
    assemble_operators,
    energy,
    hopf_tensor,
    initial_map,
    l2_norm,
    tensor_l1_norm,
)

TWO_PI = 2.0 * np.pi


@dataclass
class _StepResult:
    u: SurfaceMap
    state: MetricState
    event: str | None
    dtu_norm: float
    dtg_norm: float


class FlowEngine:
    def __init__(
        self,
        config: FlowConfig,
        curves: tuple[BoundaryCurve, BoundaryCurve],
        u0: SurfaceMap | None = None,
        error_handler=None,
        observer=None,
    ):
        self.config = config
        self.curves = curves
        self.grid = Grid(config.n_x, config.n_theta)
        if curves[0].dim != curves[1].dim:
            raise ParameterError("boundary curves live in different dimensions")
        self.delta = delta_gamma(*curves)
        self.u0 = u0 if u0 is not None else initial_map(self.grid, curves)
        if self.u0.grid != self.grid:
            raise ParameterError("initial map lives on a different grid")
        self.state0 = MetricState.initial(self.grid, eta=config.eta, ell=config.ell_init)
        self.error_handler = error_handler
        self.observer = observer
        self._projection = None
        self.options = StepOptions(
            tol_lin=config.tol_lin,
            tol_kkt=config.tol_kkt,
            max_inner=config.max_inner,
            rel_decrease=config.rel_decrease,
            clamp=config.clamp,
        )

    def _record(self, step, time, u, state, dtu_norm, dtg_norm, metric_length) -> FlowRecord:
        g = state.metric
        coeffs, projected = flow_coefficients(u, state)
        self._projection = (u, state, coeffs, projected)
        diffeo = state.diffeo
        b_plus, b_minus = complex(diffeo.b_plus), complex(diffeo.b_minus)
        n_plus = math.floor(diffeo.phi_plus / TWO_PI)
        n_minus = math.floor(diffeo.phi_minus / TWO_PI)
        return FlowRecord(
            step=step,
            time=time,
            energy=energy(u, g),
            area=area(u),
            ell=state.ell,
            re_b_plus=b_plus.real,
            im_b_plus=b_plus.imag,
            re_b_minus=b_minus.real,
            im_b_minus=b_minus.imag,
            phi_plus=diffeo.phi_plus,
            phi_minus=diffeo.phi_minus,
            winding_plus=n_plus,
            winding_minus=n_minus,
            phi_plus_mod=diffeo.phi_plus - TWO_PI * n_plus,
            phi_minus_mod=diffeo.phi_minus - TWO_PI * n_minus,
            dtu_norm=dtu_norm,
            dtg_norm=dtg_norm,
            projected_norm=projected,
            hopf_l1=tensor_l1_norm(hopf_tensor(u, g), g, self.grid),
            weighted_energy=weighted_energy_I(u, state),
            stationarity=stationarity_residual(u, state),
            energy_lower_bound=energy_lower_bound(self.delta, state),
            metric_length=metric_length,
        )

    def _projection_at(self, u: SurfaceMap, state: MetricState) -> tuple[np.ndarray, float]:
        """Projected Hopf coefficients, reused from the last record when it was taken at (u, state)."""
        if self._projection is not None and self._projection[0] is u and self._projection[1] is state:
            return self._projection[2], self._projection[3]
        return flow_coefficients(u, state)

    def _step(self, u: SurfaceMap, state: MetricState) -> _StepResult:
        config = self.config
        coeffs, dtg_norm = self._projection_at(u, state)
        new_state, event = ode_step(
            state,
            u,
            config.h,
            n_sub=config.n_sub,
            ell_floor=config.ell_floor,
            b_ceiling=config.b_ceiling,
            initial_velocity=coeffs,
        )
        if event is not None:
            return _StepResult(u, new_state, event, 0.0, dtg_norm)
        ops = assemble_operators(new_state.metric, self.grid)
        w, report = minimize_step(u, new_state.metric, config.h, self.curves, self.options, operators=ops)
        if not report.converged:
            logging.debug(f"Map step not fully converged: kkt={report.kkt_residual:.2e}")
        dtu_norm = l2_norm(w.values - u.values, ops.mass) / config.h
        return _StepResult(w, new_state, None, dtu_norm, dtg_norm)

    def _relax(self, u: SurfaceMap, state: MetricState) -> tuple[SurfaceMap, bool, int]:
        """Map steps on the frozen metric after an ℓ-floor event."""
        config = self.config
        ops = assemble_operators(state.metric, self.grid)
        for count in range(1, config.max_relax + 1):
            w, _ = minimize_step(u, state.metric, config.h, self.curves, self.options, operators=ops)
            change = l2_norm(w.values - u.values, ops.mass) / config.h
            u = w
            if change < config.eps_map:
                return u, True, count
        return u, False, config.max_relax

    def _guarded(self, step_index, handler, u, state):
        if self.error_handler is None:
            return handler(u, state)
        return self.error_handler.wrap_step(step_index, handler, u, state)

    def run(self) -> FlowTrajectory:
        config = self.config
        u, state = self.u0, self.state0
        trajectory = FlowTrajectory(delta_gamma=self.delta)
        trajectory.append(self._record(0, 0.0, u, state, 0.0, 0.0, 0.0))
        energy0 = trajectory.last.energy
        logging.info(
            f"Flow started: grid {config.n_x}x{config.n_theta}, h={config.h}, T={config.t_max}, "
            f"ell={state.ell:.6f}, E0={energy0:.8f}, delta_gamma={self.delta:.6f}"
        )
        if self.observer is not None and config.mesh_stride:
            self.observer(0, u, state)

        n_steps = int(math.floor(config.t_max / config.h + 1e-9))
        metric_length = 0.0
        budget = energy0
        for step in range(1, n_steps + 1):
            time = step * config.h
            result = self._guarded(step, self._step, u, state)
            metric_length += result.dtg_norm * config.h

            if result.event is not None:
                trajectory.event = result.event
                u, state = result.u, result.state
                if result.event == "ell_floor":
                    u, converged, count = self._guarded(step, self._relax, u, state)
                    trajectory.relaxation_converged = converged
                    trajectory.half_stationarity = (
                        stationarity_residual(u, state, side="plus"),
                        stationarity_residual(u, state, side="minus"),
                    )
                    logging.info(
                        f"Terminal relaxation after {count} map steps (converged={converged}), "
                        f"half stationarity {trajectory.half_stationarity}"
                    )
                trajectory.append(self._record(step, time, u, state, 0.0, result.dtg_norm, metric_length))
                break

            previous_energy = trajectory.last.energy
            record = self._record(step, time, result.u, result.state, result.dtu_norm, result.dtg_norm, metric_length)
            trajectory.append(record)
            u, state = result.u, result.state

            if record.energy > previous_energy + 1e-9 * energy0:
                logging.warning(f"Energy increased at step {step}: {previous_energy:.12e} -> {record.energy:.12e}")
            budget -= config.h * (0.5 * record.dtu_norm**2 + record.dtg_norm**2)
            if record.energy > budget + 1e-6 * energy0:
                logging.warning(f"Cumulative energy inequality violated at step {step} by {record.energy - budget:.3e}")
            if record.energy < record.energy_lower_bound - 1e-9 * energy0:
                logging.warning(f"Energy below the a-priori lower bound at step {step}")
            if config.mesh_stride and step % config.mesh_stride == 0 and self.observer is not None:
                self.observer(step, u, state)
            if step % config.log_stride == 0:
                logging.info(
                    f"step {step} t={time:.4f} E={record.energy:.10f} A={record.area:.10f} "
                    f"ell={record.ell:.6e} |PRePhi|={record.projected_norm:.3e} |Dtu|={record.dtu_norm:.3e}"
                )
            if record.projected_norm < config.eps_stat and record.dtu_norm < config.eps_map:
                logging.info(f"Stationarity reached at step {step}")
                break

        trajectory.final_map = u
        trajectory.final_state = state
        trajectory.classification = classify(trajectory, config)
        if self.observer is not None:
            self.observer(trajectory.last.step, u, state)
        logging.info(f"Flow finished after {trajectory.last.step} steps: {trajectory.classification}")
        return trajectory


def run(config: FlowConfig, curves, u0: SurfaceMap | None = None, error_handler=None, observer=None) -> FlowTrajectory:
    """Run the flow for the given curves; see FlowEngine."""
    return FlowEngine(config, curves, u0=u0, error_handler=error_handler, observer=observer).run()
