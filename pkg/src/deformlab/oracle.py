"""Ground-truth recognizability criteria.

Judges extracted representations against keypoint locations projected
straight from simulator state: rope endpoints must match the first/last
particle projections, a detected cloth corner pair must match some
adjacent pair of the four grid-corner projections, every match strictly
closer than epsilon (30 px ~ 2 cm by default). Evaluation-only: nothing
on the task-execution path may import this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .recognizer import Representation
from .scene import Calibration, project, render
from .sim_core import ObjectState, cloth_corner_indices

EPSILON_PX = 30.0


@dataclass(frozen=True)
class GroundTruth:
    kind: str  # "rope" | "cloth"
    gt_keypoints: np.ndarray  # (k, 2) float px; rope k=2, cloth k=4 in cycle order
    epsilon: float = EPSILON_PX


def ground_truth_of(
    state: ObjectState, calib: Calibration, epsilon: float = EPSILON_PX
) -> GroundTruth:
    if state.topology.kind == "cloth":
        corners = cloth_corner_indices(state.topology)
        pts = project(state.positions[list(corners)], calib)
        return GroundTruth(kind="cloth", gt_keypoints=pts, epsilon=epsilon)
    pts = project(state.positions[[0, state.n_particles - 1]], calib)
    return GroundTruth(kind="rope", gt_keypoints=pts, epsilon=epsilon)


def _pair_valid(detected, gt_a, gt_b, eps: float) -> bool:
    """Both detected points within eps of {gt_a, gt_b} under the best assignment."""
    d0, d1 = detected
    direct = max(math.dist(d0, gt_a), math.dist(d1, gt_b))
    swapped = max(math.dist(d0, gt_b), math.dist(d1, gt_a))
    return min(direct, swapped) < eps


def is_valid(rep: Representation, gt: GroundTruth) -> bool:
    """Strict epsilon criterion; extraction failures are never valid."""
    if not rep.extracted or len(rep.keypoints) != 2:
        return False
    eps = gt.epsilon
    pts = [np.asarray(k, dtype=float) for k in rep.keypoints]
    if gt.kind == "rope":
        return _pair_valid(pts, gt.gt_keypoints[0], gt.gt_keypoints[1], eps)
    # cloth: any adjacent pair of the 4 corners (cycle order) may match
    corners = gt.gt_keypoints
    for i in range(4):
        if _pair_valid(pts, corners[i], corners[(i + 1) % 4], eps):
            return True
    return False


def is_recognizable(state: ObjectState, orm, calib: Calibration, epsilon: float = EPSILON_PX) -> bool:
    """Render -> extract -> validate. Operationalizes membership in the
    recognizable set; used by evaluation and corpus censuses only."""
    obs = render(state, calib)
    if not obs.mask.any():
        return False
    rep = orm(obs)
    return is_valid(rep, ground_truth_of(state, calib, epsilon))
