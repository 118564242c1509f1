"""Scripted exploration and preparation gripper procedures.

Exploration works from raw geometry only (max-z point for rope,
extreme-x points for cloth) and never sees a representation, so it
stays usable exactly when recognition is broken. Each exploration
mechanism targets a named recognizer assumption (see COMPLEMENTARITY).

Preparation consumes an extracted representation: back-project the
keypoints, pinch-grasp them (with a stochastic slip probability
standing in for real gripper clearance errors), and carry the object
to the standardized bottleneck hold. verify_bottleneck is the
evaluation-side check that the grippers ended up holding the *true*
endpoints/corners at the hold poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sim_core as sim
from .recognizer import Representation
from .scene import Calibration, OffMask, backproject, render
from .sim_core import GraspError, ObjectState, SimConfig

EXPLORE_GRASP_TOL = 0.03
PREPARE_GRASP_TOL = 0.02
DEFAULT_P_SLIP = 0.15
SAFE_HALF = 0.16  # toss release targets stay inside this box

ROPE_LIFT_HEIGHT = 0.25
ROPE_LIFT_SECONDS = 1.0
ROPE_SHIFT_DISTANCE = 0.15
ROPE_SHIFT_SECONDS = 0.30
ROPE_RELEASE_HEIGHT = 0.10  # descend while tossing so the chain lays out

CLOTH_LIFT_HEIGHT = 0.30
CLOTH_LIFT_SECONDS = 1.0
CLOTH_SWEEP_TARGET = 0.08  # release aimed this far past the table center
CLOTH_SWEEP_CAP = 0.25
CLOTH_SWEEP_SECONDS = 0.30
CLOTH_RELEASE_HEIGHT = 0.18  # descend while sweeping so the landing stays near center

BOTTLENECK_HEIGHT = 0.20
BOTTLENECK_SEPARATION = 0.30
PREPARE_MOVE_SECONDS = 2.0

# which exploration mechanism restores which recognizer assumption
COMPLEMENTARITY = {
    "single-component": "lift separates strands so the mask reconnects as one region",
    "two-endpoints": "lift pulls hidden ends out of the pile so both become visible",
    "no-branches": "lift separates overlapping segments that read as skeleton branches",
    "path-length": "hanging under gravity pulls folded strands back to full length",
    "area-ratio": "aerial release lets the cloth spread back toward near-planarity",
    "perimeter": "aerial release unfolds flaps so the outline approaches the full square",
    "corner-count": "unfolding removes crease edges that masquerade as extra corners",
}


@dataclass(frozen=True)
class BottleneckSpec:
    kind: str  # "rope" | "cloth"
    poses: np.ndarray  # (2, 3) world hold positions
    tolerance: float = 0.02


def default_bottleneck(kind: str) -> BottleneckSpec:
    half = BOTTLENECK_SEPARATION / 2.0
    poses = np.array(
        [[-half, 0.0, BOTTLENECK_HEIGHT], [half, 0.0, BOTTLENECK_HEIGHT]]
    )
    return BottleneckSpec(kind=kind, poses=poses)


@dataclass(frozen=True)
class ActionOutcome:
    kind: str  # "exploration" | "preparation"
    succeeded: bool
    resulting_state: ObjectState
    grasp_errors: list[str] = field(default_factory=list)


def _within_reach(point: np.ndarray) -> bool:
    return abs(point[0]) <= sim.WORKSPACE_HALF and abs(point[1]) <= sim.WORKSPACE_HALF


def _toward_center(point: np.ndarray, distance: float) -> np.ndarray:
    xy = np.array([point[0], point[1]])
    norm = float(np.linalg.norm(xy))
    if norm < 1e-9:
        direction = np.array([1.0, 0.0])
    else:
        direction = -xy / norm
    return np.array([direction[0] * distance, direction[1] * distance, 0.0])


# 8 candidate toss lanes, 45 degree spacing; scored per state
_LANES = [
    np.array([math.cos(a), math.sin(a)]) for a in np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
]


def _free_lane(grasp_xy: np.ndarray, rest_centroid: np.ndarray) -> np.ndarray:
    """Toss direction with the most free table ahead of the grasp point:
    room to the workspace edge, biased away from the resting material."""
    away = grasp_xy - rest_centroid
    away_n = float(np.linalg.norm(away))
    away = away / away_n if away_n > 1e-9 else np.zeros(2)
    best, best_score = _LANES[0], -np.inf
    for lane in _LANES:
        room = SAFE_HALF - float(lane @ grasp_xy)  # distance to safe box along lane
        score = min(room, ROPE_SHIFT_DISTANCE + 0.05) + 0.1 * float(lane @ away)
        if score > best_score + 1e-12:
            best, best_score = lane, score
    return best


def explore_rope(state: ObjectState, config: SimConfig) -> ActionOutcome:
    """Grasp the point closest to the camera (max z), lift so the strands
    hang out, toss along the freest lane, release, settle. Works on any
    state and never reads a representation."""
    top = int(np.argmax(state.positions[:, 2]))
    point = state.positions[top]
    if not _within_reach(point):
        return ActionOutcome(
            "exploration", False, sim.settle(state, config), ["out_of_reach"]
        )
    on_table = state.positions[state.positions[:, 2] < 0.02]
    rest_centroid = (
        on_table[:, :2].mean(axis=0) if len(on_table) else state.positions[:, :2].mean(axis=0)
    )
    try:
        held = sim.grasp_nearest(state, 0, point, EXPLORE_GRASP_TOL)
    except GraspError as err:
        return ActionOutcome(
            "exploration", False, sim.settle(state, config), [err.reason]
        )
    up = np.array([point[0], point[1], ROPE_LIFT_HEIGHT])
    held = sim.move_grippers(held, config, {0: up}, ROPE_LIFT_SECONDS)
    lane = _free_lane(up[:2], rest_centroid)
    end_xy = np.clip(up[:2] + lane * ROPE_SHIFT_DISTANCE, -SAFE_HALF, SAFE_HALF)
    shifted = np.array([end_xy[0], end_xy[1], ROPE_RELEASE_HEIGHT])
    held = sim.move_grippers(held, config, {0: shifted}, ROPE_SHIFT_SECONDS)
    settled = sim.settle(sim.release(held), config)
    return ActionOutcome("exploration", True, settled)


def explore_cloth(state: ObjectState, config: SimConfig) -> ActionOutcome:
    """Bimanually grasp the extreme-x points, lift, sweep horizontally and
    release into the air; per-particle drag unfolds the falling cloth."""
    lo = int(np.argmin(state.positions[:, 0]))
    hi = int(np.argmax(state.positions[:, 0]))
    points = [state.positions[lo]]
    if hi != lo:
        points.append(state.positions[hi])
    if not all(_within_reach(p) for p in points):
        return ActionOutcome(
            "exploration", False, sim.settle(state, config), ["out_of_reach"]
        )
    held = state
    try:
        for gid, p in enumerate(points):
            held = sim.grasp_nearest(held, gid, p, EXPLORE_GRASP_TOL)
    except GraspError as err:
        return ActionOutcome(
            "exploration", False, sim.settle(state, config), [err.reason]
        )

    lifted = {
        gid: np.array([p[0], p[1], CLOTH_LIFT_HEIGHT]) for gid, p in enumerate(points)
    }
    held = sim.move_grippers(held, config, lifted, CLOTH_LIFT_SECONDS)

    # sweep toward a release point just past the table center so the
    # trailing cloth lands centered instead of drifting off the workspace
    mid = np.mean([t for t in lifted.values()], axis=0)
    mid_norm = float(np.linalg.norm(mid[:2]))
    direction = -mid[:2] / mid_norm if mid_norm > 1e-9 else np.array([1.0, 0.0])
    travel = min(mid_norm + CLOTH_SWEEP_TARGET, CLOTH_SWEEP_CAP)
    sweep = np.array([direction[0] * travel, direction[1] * travel, 0.0])
    swept = {}
    for gid, t in lifted.items():
        end = t + sweep
        end[2] = CLOTH_RELEASE_HEIGHT
        swept[gid] = end
    held = sim.move_grippers(held, config, swept, CLOTH_SWEEP_SECONDS)

    settled = sim.settle(sim.release(held), config)
    return ActionOutcome("exploration", True, settled)


def explore(state: ObjectState, config: SimConfig) -> ActionOutcome:
    if state.topology.kind == "cloth":
        return explore_cloth(state, config)
    return explore_rope(state, config)


def _slip(rng: np.random.Generator | None, p_slip: float) -> bool:
    if p_slip <= 0.0:
        return False
    if rng is None:
        raise ValueError("p_slip > 0 requires an rng")
    return bool(rng.random() < p_slip)


def _prepare(
    state: ObjectState,
    rep: Representation,
    calib: Calibration,
    config: SimConfig,
    bottleneck: BottleneckSpec,
    p_slip: float,
    rng: np.random.Generator | None,
) -> ActionOutcome:
    if not rep.extracted or len(rep.keypoints) != 2:
        raise ValueError("preparation requires an extracted 2-keypoint representation")

    obs = render(state, calib)
    targets = []
    errors: list[str] = []
    for kp in rep.keypoints:
        try:
            targets.append(backproject(kp, obs))
        except OffMask:
            errors.append("keypoint_off_mask")
    if errors:
        return ActionOutcome("preparation", False, sim.settle(state, config), errors)

    held = state
    held_any = False
    for gid, world in enumerate(targets):
        if _slip(rng, p_slip):
            errors.append("slip")
            continue
        try:
            held = sim.grasp_nearest(held, gid, world, PREPARE_GRASP_TOL)
            held_any = True
        except GraspError as err:
            errors.append(err.reason)
    if errors:
        dropped = sim.release(held) if held_any else held
        return ActionOutcome("preparation", False, sim.settle(dropped, config), errors)

    # assign grasped points to hold poses minimizing total travel
    cur = np.array([held.grasps[g].target for g in (0, 1)])
    direct = np.linalg.norm(cur - bottleneck.poses, axis=1).sum()
    swapped = np.linalg.norm(cur - bottleneck.poses[::-1], axis=1).sum()
    poses = bottleneck.poses if direct <= swapped else bottleneck.poses[::-1]
    held = sim.move_grippers(
        held, config, {0: poses[0], 1: poses[1]}, PREPARE_MOVE_SECONDS
    )
    # let the free material stop swinging while held
    held = sim.step(held, config, 1.0)

    ok = all(
        np.linalg.norm(held.positions[held.grasps[g].particle_index] - poses[g])
        <= bottleneck.tolerance
        for g in (0, 1)
    )
    if not ok:
        return ActionOutcome(
            "preparation", False, sim.settle(sim.release(held), config), ["hold_not_reached"]
        )
    return ActionOutcome("preparation", True, held)


def prepare_rope(
    state: ObjectState,
    rep: Representation,
    calib: Calibration,
    config: SimConfig,
    bottleneck: BottleneckSpec | None = None,
    p_slip: float = DEFAULT_P_SLIP,
    rng: np.random.Generator | None = None,
) -> ActionOutcome:
    return _prepare(
        state, rep, calib, config, bottleneck or default_bottleneck("rope"), p_slip, rng
    )


def prepare_cloth(
    state: ObjectState,
    rep: Representation,
    calib: Calibration,
    config: SimConfig,
    bottleneck: BottleneckSpec | None = None,
    p_slip: float = DEFAULT_P_SLIP,
    rng: np.random.Generator | None = None,
) -> ActionOutcome:
    return _prepare(
        state, rep, calib, config, bottleneck or default_bottleneck("cloth"), p_slip, rng
    )


def prepare(state, rep, calib, config, bottleneck=None, p_slip=DEFAULT_P_SLIP, rng=None):
    if state.topology.kind == "cloth":
        return prepare_cloth(state, rep, calib, config, bottleneck, p_slip, rng)
    return prepare_rope(state, rep, calib, config, bottleneck, p_slip, rng)


def _true_hold_indices(state: ObjectState) -> set[frozenset[int]]:
    """Particle-index pairs that constitute a correct bottleneck hold."""
    if state.topology.kind == "cloth":
        a, b, c, d = sim.cloth_corner_indices(state.topology)
        return {
            frozenset((a, b)),
            frozenset((b, c)),
            frozenset((c, d)),
            frozenset((d, a)),
        }
    return {frozenset((0, state.n_particles - 1))}


def verify_bottleneck(state: ObjectState, spec: BottleneckSpec) -> bool:
    """True when both grippers hold true endpoints/adjacent corners at the
    hold poses within tolerance."""
    if len(state.grasps) != 2:
        return False
    grasps = sorted(state.grasps.values(), key=lambda g: g.gripper_id)
    held = frozenset(g.particle_index for g in grasps)
    if held not in _true_hold_indices(state):
        return False
    pos = np.array([state.positions[g.particle_index] for g in grasps])
    direct = np.linalg.norm(pos - spec.poses, axis=1).max()
    swapped = np.linalg.norm(pos - spec.poses[::-1], axis=1).max()
    return bool(min(direct, swapped) <= spec.tolerance)


def run_task_script(
    state: ObjectState,
    config: SimConfig,
    p_slip: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[bool, ObjectState]:
    """Scripted hold-and-place from the bottleneck hold: lower the object
    to the table ahead of the hold line and release. Completion requires
    no grasp loss during the carry."""
    if len(state.grasps) != 2:
        return False, state
    for _ in state.grasps:
        if _slip(rng, p_slip):
            return False, sim.settle(sim.release(state), config)
    place = {
        gid: np.array([g.target[0], g.target[1] + 0.10, 0.02])
        for gid, g in state.grasps.items()
    }
    lowered = sim.move_grippers(state, config, place, 1.5)
    settled = sim.settle(sim.release(lowered), config)
    return True, settled
