"""Ground-truth judge: the perfect-decision upper bound for the harness.

The only policy allowed to import the oracle module. Zero false
positives and zero false negatives by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..oracle import GroundTruth, ground_truth_of, is_valid
from ..scene import Calibration
from . import JudgmentContext, Verdict


def judge_oracle(rep, gt: GroundTruth) -> Verdict:
    return Verdict(
        recognizable=is_valid(rep, gt),
        reasoning="ground-truth epsilon criterion",
        source="oracle",
    )


@dataclass
class OraclePolicy:
    calib: Calibration
    epsilon: float = 30.0
    name: str = "oracle"

    def judge(self, ctx: JudgmentContext) -> Verdict:
        gt = ground_truth_of(ctx.state, self.calib, self.epsilon)
        return judge_oracle(ctx.rep, gt)
