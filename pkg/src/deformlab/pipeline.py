"""Episode executor: the judge-act loop with an exploration budget.

One episode: render, extract, judge. While the judge says NO and budget
remains, run an exploration and re-judge. On YES, run the preparation;
a successful preparation ends the episode (terminal "transitioned"),
after which bottleneck verification and the scripted task run for the
record. Failed preparations re-enter the loop without consuming
exploration budget, capped at 3 attempts total.

Ground-truth classification of every judgment is recorded for metrics
via an injected evaluator callable; this module deliberately never
imports the oracle, so nothing on the action path can read ground truth.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ood_gen, primitives, sim_core
from .adp import EXPLORE, PREPARE, JudgmentContext, Verdict, decide
from .metrics import classify_step
from .ood_gen import OodSpec, mask_iou
from .recognizer import EmptyMask, Representation, render_overlay
from .scene import Calibration, default_calibration, render
from .sim_core import NonFiniteState, ObjectState, SimConfig

SCHEMA_VERSION = 1

TRANSITIONED = "transitioned"
BUDGET_EXHAUSTED = "exploration_budget_exhausted"
GRASP_FAILED = "grasp_failed_terminal"
HARNESS_ERROR = "harness_error"

STABLE_IOU = 0.98
STABLE_RUN = 3


@dataclass(frozen=True)
class StepRecord:
    step_index: int  # explorations executed so far
    gt_recognizable: bool
    judged_recognizable: bool
    classification: str  # TP | FP | TN | FN
    action_taken: str  # explore | prepare | none
    representation: dict
    verdict: dict

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "gt_recognizable": self.gt_recognizable,
            "judged_recognizable": self.judged_recognizable,
            "classification": self.classification,
            "action_taken": self.action_taken,
            "representation": self.representation,
            "verdict": self.verdict,
        }

    @staticmethod
    def from_dict(d: dict) -> "StepRecord":
        return StepRecord(
            step_index=d["step_index"],
            gt_recognizable=d["gt_recognizable"],
            judged_recognizable=d["judged_recognizable"],
            classification=d["classification"],
            action_taken=d["action_taken"],
            representation=d["representation"],
            verdict=d["verdict"],
        )


@dataclass(frozen=True)
class EpisodeRecord:
    episode_id: str
    seed: int
    object_kind: str
    steps: list[StepRecord]
    terminal: str
    final_task_success: bool
    bottleneck_verified: bool = False
    n_explorations: int = 0
    n_prepares: int = 0
    stable_at: int | None = None  # exploration count where mask change stalled
    error: str | None = None
    policy_name: str = ""

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "episode_id": self.episode_id,
            "seed": self.seed,
            "object_kind": self.object_kind,
            "terminal": self.terminal,
            "final_task_success": self.final_task_success,
            "bottleneck_verified": self.bottleneck_verified,
            "n_explorations": self.n_explorations,
            "n_prepares": self.n_prepares,
            "stable_at": self.stable_at,
            "error": self.error,
            "policy_name": self.policy_name,
            "steps": [s.to_dict() for s in self.steps],
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRecord":
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported episode schema {d.get('schema')!r}")
        return EpisodeRecord(
            episode_id=d["episode_id"],
            seed=d["seed"],
            object_kind=d["object_kind"],
            steps=[StepRecord.from_dict(s) for s in d["steps"]],
            terminal=d["terminal"],
            final_task_success=d["final_task_success"],
            bottleneck_verified=d["bottleneck_verified"],
            n_explorations=d["n_explorations"],
            n_prepares=d["n_prepares"],
            stable_at=d.get("stable_at"),
            error=d.get("error"),
            policy_name=d.get("policy_name", ""),
        )


@dataclass
class PipelineConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    calib: Calibration = field(default_factory=default_calibration)
    evaluator: Callable[[ObjectState, Representation], bool] | None = None
    max_explorations: int = 20
    max_prepares: int = 3
    p_slip: float = primitives.DEFAULT_P_SLIP
    bottleneck: primitives.BottleneckSpec | None = None
    snapshot_dir: str | None = None  # write initial/final mask PGMs per episode


class JsonlSink:
    """Appends episode records to a JSON-lines file; safe for concurrent use."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "a")

    def __call__(self, record: EpisodeRecord) -> None:
        line = json.dumps(record.to_dict())
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_jsonl(path) -> list[EpisodeRecord]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(EpisodeRecord.from_dict(json.loads(line)))
    return records


def _failed_rep(kind: str, reason: str) -> Representation:
    return Representation(
        kind=kind, status="extraction_failed", diagnostics={}, failure_reason=reason
    )


def _write_snapshot(config: PipelineConfig, episode_id: str, tag: str, state: ObjectState):
    if config.snapshot_dir is None:
        return
    import os

    os.makedirs(config.snapshot_dir, exist_ok=True)
    path = os.path.join(config.snapshot_dir, f"{episode_id}_{tag}.pgm")
    with open(path, "wb") as f:
        f.write(render(state, config.calib).mask_pgm())


def run_episode(
    initial: ObjectState,
    orm,
    policy,
    config: PipelineConfig,
    episode_id: str = "ep-0",
    seed: int = 0,
) -> EpisodeRecord:
    """Run one full judge-act episode on an owned state."""
    if config.evaluator is None:
        raise ValueError("PipelineConfig.evaluator is required (ground-truth recorder)")
    kind = initial.topology.kind
    bottleneck = config.bottleneck or primitives.default_bottleneck(kind)
    slip_rng = np.random.default_rng([seed, 1])

    state = initial
    steps: list[StepRecord] = []
    explorations = 0
    prepares = 0
    terminal = None
    verified = False
    task_ok = False
    stable_at = None
    stable_run = 0
    prev_mask = None
    error = None
    _write_snapshot(config, episode_id, "initial", state)

    try:
        while True:
            obs = render(state, config.calib)
            try:
                rep = orm(obs)
            except EmptyMask:
                rep = _failed_rep(kind, "empty-mask")
            overlay = render_overlay(obs, rep)
            gt_rec = bool(config.evaluator(state, rep))
            verdict: Verdict = policy.judge(
                JudgmentContext(state=state, obs=obs, rep=rep, overlay=overlay)
            )
            action = decide(verdict)
            if action == EXPLORE and explorations >= config.max_explorations:
                action = "none"
            steps.append(
                StepRecord(
                    step_index=explorations,
                    gt_recognizable=gt_rec,
                    judged_recognizable=verdict.recognizable,
                    classification=classify_step(gt_rec, verdict.recognizable),
                    action_taken=action,
                    representation=rep.to_dict(),
                    verdict=verdict.to_dict(),
                )
            )

            if action == "none":
                terminal = BUDGET_EXHAUSTED
                break

            if action == PREPARE:
                prepares += 1
                if rep.extracted and len(rep.keypoints) == 2:
                    outcome = primitives.prepare(
                        state,
                        rep,
                        config.calib,
                        config.sim,
                        bottleneck,
                        config.p_slip,
                        slip_rng,
                    )
                else:
                    outcome = primitives.ActionOutcome(
                        "preparation",
                        False,
                        sim_core.settle(state, config.sim),
                        ["no_representation"],
                    )
                state = outcome.resulting_state
                if outcome.succeeded:
                    terminal = TRANSITIONED
                    verified = primitives.verify_bottleneck(state, bottleneck)
                    task_ok, state = primitives.run_task_script(
                        state, config.sim, config.p_slip, slip_rng
                    )
                    break
                if prepares >= config.max_prepares:
                    terminal = GRASP_FAILED
                    break
                continue

            # explore
            outcome = primitives.explore(state, config.sim)
            explorations += 1
            state = outcome.resulting_state
            new_mask = render(state, config.calib).mask
            if prev_mask is not None and mask_iou(prev_mask, new_mask) > STABLE_IOU:
                stable_run += 1
                if stable_run >= STABLE_RUN and stable_at is None:
                    stable_at = explorations
            else:
                stable_run = 0
            prev_mask = new_mask
    except NonFiniteState as err:
        terminal = HARNESS_ERROR
        error = str(err)

    if terminal != HARNESS_ERROR:
        _write_snapshot(config, episode_id, "final", state)
    return EpisodeRecord(
        episode_id=episode_id,
        seed=seed,
        object_kind=kind,
        steps=steps,
        terminal=terminal,
        final_task_success=bool(verified and task_ok),
        bottleneck_verified=verified,
        n_explorations=explorations,
        n_prepares=prepares,
        stable_at=stable_at,
        error=error,
        policy_name=getattr(policy, "name", type(policy).__name__),
    )


def _episode_from_spec(spec: OodSpec, orm, policy, config: PipelineConfig) -> EpisodeRecord:
    episode_id = f"{spec.object_kind}-{spec.seed}"
    try:
        initial = ood_gen.generate(spec, config.sim)
    except NonFiniteState as err:
        return EpisodeRecord(
            episode_id=episode_id,
            seed=spec.seed,
            object_kind=spec.object_kind,
            steps=[],
            terminal=HARNESS_ERROR,
            final_task_success=False,
            error=f"generation: {err}",
            policy_name=getattr(policy, "name", type(policy).__name__),
        )
    return run_episode(initial, orm, policy, config, episode_id, spec.seed)


def run_batch(
    specs: list[OodSpec],
    orm,
    policy,
    config: PipelineConfig,
    parallelism: int = 1,
    sink: Callable[[EpisodeRecord], None] | None = None,
) -> list[EpisodeRecord]:
    """Run independent episodes, optionally in parallel worker threads.

    Results come back in spec order regardless of completion order; the
    sink (if any) sees records as they complete. Per-episode failures
    become harness_error records and never abort the batch.
    """
    if not specs:
        raise ValueError("specs must be non-empty")

    def one(spec: OodSpec) -> EpisodeRecord:
        try:
            record = _episode_from_spec(spec, orm, policy, config)
        except Exception as err:  # noqa: BLE001 - harness boundary
            record = EpisodeRecord(
                episode_id=f"{spec.object_kind}-{spec.seed}",
                seed=spec.seed,
                object_kind=spec.object_kind,
                steps=[],
                terminal=HARNESS_ERROR,
                final_task_success=False,
                error=repr(err),
                policy_name=getattr(policy, "name", type(policy).__name__),
            )
        if sink is not None:
            sink(record)
        return record

    if parallelism <= 1:
        return [one(s) for s in specs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, specs))
