"""
Output manager module for writing run artefacts.

Writes trajectory.csv (versioned header, one row per step, classification
trailer), the self-describing final_state.txt, OBJ meshes, state dumps of
aborted steps and the effective config into the output directory.
"""

import logging
from pathlib import Path

import numpy as np

from common_utils.utils import current_date_utc
from geometry.collar import injectivity_radius, width
from runner.template_loader import render_template
from schemas.flow import FlowTrajectory
from surface.mesh import export_obj

CSV_HEADER = "# plateau-flow v1"
TWO_PI = 2.0 * np.pi


class OutputManager:
    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.mesh_dir = self.output_dir / "meshes"

    def prepare(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.mesh_dir.mkdir(parents=True, exist_ok=True)

    @property
    def trajectory_path(self) -> Path:
        return self.output_dir / "trajectory.csv"

    @property
    def final_state_path(self) -> Path:
        return self.output_dir / "final_state.txt"

    def write_trajectory(self, trajectory: FlowTrajectory) -> Path:
        frame = trajectory.to_frame()
        with open(self.trajectory_path, "w", newline="") as f:
            f.write(CSV_HEADER + "\n")
            frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
            f.write(f"# classification: {trajectory.classification}\n")
        logging.info(f"Trajectory with {len(frame)} records written to {self.trajectory_path}")
        return self.trajectory_path

    def _render_state(self, u, state, status, classification, step, time, discs=None) -> str:
        diffeo = state.diffeo
        unwound = diffeo.unwound()
        return render_template(
            "final_state.txt.j2",
            generated=current_date_utc(),
            status=status,
            classification=classification,
            step=step,
            time=time,
            eta=state.collar.eta,
            ell=state.ell,
            b_plus=complex(diffeo.b_plus),
            b_minus=complex(diffeo.b_minus),
            phi_plus=diffeo.phi_plus,
            phi_minus=diffeo.phi_minus,
            phi_plus_unwound=unwound.phi_plus,
            phi_minus_unwound=unwound.phi_minus,
            core_injectivity_radius=float(injectivity_radius(state.collar, 0.0)),
            collar_width=width(state.collar),
            n_x=u.grid.n_x,
            n_theta=u.grid.n_theta,
            dim=u.dim,
            discs=discs or [],
            boundary_plus=u.boundary_plus,
            boundary_minus=u.boundary_minus,
            values=u.values,
        )

    def write_final_state(self, trajectory: FlowTrajectory, discs=None) -> Path:
        last = trajectory.last
        text = self._render_state(
            trajectory.final_map,
            trajectory.final_state,
            "finished",
            trajectory.classification,
            last.step,
            last.time,
            discs,
        )
        self.final_state_path.write_text(text)
        return self.final_state_path

    def dump_state(self, step_index: int, u, state) -> Path:
        """State before a failed step; used by the flow error handler."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / f"state_dump_step_{step_index:06d}.txt"
        path.write_text(self._render_state(u, state, "aborted", "none", step_index, float("nan")))
        return path

    def export_mesh(self, step: int, u, state=None) -> Path:
        return export_obj(u, self.mesh_dir / f"step_{step:06d}.obj")

    def write_effective_config(self, text: str) -> Path:
        path = self.output_dir / "effective_config.ini"
        path.write_text(text)
        return path
