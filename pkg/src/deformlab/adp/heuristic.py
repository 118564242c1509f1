"""Offline judge over recognizer diagnostics.

Stands in for the remote model when running offline. Deliberately
conservative: thresholds sit above what extraction itself requires, so
marginal-but-valid representations get judged NO (false negatives),
while structurally clean wrong extractions (fold creases reading as
corners) pass (false positives). Both behaviours are intended and the
default thresholds below are part of the harness contract.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..recognizer import ROPE_NOMINAL_PX, Representation
from . import JudgmentContext, Verdict


@dataclass(frozen=True)
class HeuristicParams:
    rope_min_separation_frac: float = 0.40  # endpoint gap, fraction of nominal length
    cloth_min_area_ratio: float = 0.90
    cloth_corner_angle_deg: tuple[float, float] = (60.0, 120.0)


DEFAULT_HEURISTIC = HeuristicParams()


def judge_heuristic(obs, rep: Representation, params: HeuristicParams = DEFAULT_HEURISTIC) -> Verdict:
    if not rep.extracted:
        return Verdict(False, f"extraction failed: {rep.failure_reason}", source="heuristic")
    d = rep.diagnostics
    if rep.kind == "rope":
        separation = d.get("keypoint_separation_px", 0.0)
        min_sep = params.rope_min_separation_frac * ROPE_NOMINAL_PX
        if d.get("skeleton_branches", 0) != 0:
            return Verdict(False, "skeleton has branches", source="heuristic")
        if separation < min_sep:
            return Verdict(
                False,
                f"endpoint separation {separation:.0f} px below {min_sep:.0f} px",
                source="heuristic",
            )
        return Verdict(True, "clean open curve with well-separated endpoints", source="heuristic")

    # cloth
    if d.get("area_ratio", 0.0) < params.cloth_min_area_ratio:
        return Verdict(
            False,
            f"area ratio {d.get('area_ratio', 0.0):.2f} below {params.cloth_min_area_ratio}",
            source="heuristic",
        )
    lo, hi = params.cloth_corner_angle_deg
    pair_angles = d.get("pair_angles_deg", [])
    for ang in pair_angles:
        if not (lo <= ang <= hi):
            return Verdict(
                False, f"corner angle {ang:.0f} deg outside [{lo}, {hi}]", source="heuristic"
            )
    return Verdict(True, "near-convex region with square corners", source="heuristic")


@dataclass
class HeuristicPolicy:
    params: HeuristicParams = DEFAULT_HEURISTIC
    name: str = "heuristic"

    def judge(self, ctx: JudgmentContext) -> Verdict:
        return judge_heuristic(ctx.obs, ctx.rep, self.params)
