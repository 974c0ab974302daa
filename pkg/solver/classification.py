"""
Classification module for finished flow runs.

Maps a trajectory to one of the asymptotic outcomes: a conformal
cylinder, two discs after the central geodesic collapsed, a degenerated
three-point normalisation, or no decision within the time budget.
"""

import logging

from schemas.flow import Classification, FlowConfig, FlowTrajectory


def classify(trajectory: FlowTrajectory, config: FlowConfig) -> Classification:
    """
    Rules, in order:

    - |b^±| reached b_ceiling                       -> ThreePointDegenerate
    - ℓ reached ℓ_floor and both halves stationary  -> DegenerateTwoDiscs
    - stationarity thresholds met with ℓ > ℓ_floor  -> ConvergedCylinder
      after at least one step
    - otherwise                                     -> MaxTime
    """
    if not trajectory.records:
        raise ValueError("cannot classify an empty trajectory")
    records = trajectory.records
    last = records[-1]

    max_b = max(max(abs(complex(r.re_b_plus, r.im_b_plus)), abs(complex(r.re_b_minus, r.im_b_minus))) for r in records)
    if trajectory.event == "b_ceiling" or max_b >= config.b_ceiling:
        return "ThreePointDegenerate"

    if trajectory.event == "ell_floor" or min(r.ell for r in records) <= config.ell_floor:
        halves = trajectory.half_stationarity
        if halves is not None and max(halves) <= config.eps_half:
            return "DegenerateTwoDiscs"
        logging.warning(f"ell reached its floor without stationary halves: {halves}")
        return "MaxTime"

    # step 0 has no map velocity yet
    if last.step == 0:
        return "MaxTime"
    if last.projected_norm < config.eps_stat and last.dtu_norm < config.eps_map and last.ell > config.ell_floor:
        return "ConvergedCylinder"
    return "MaxTime"
