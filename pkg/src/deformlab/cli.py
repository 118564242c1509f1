"""Command-line harness: batch runs, corpus generation, metric export,
and the offline stub judge server.

Exit codes for ``run``: 0 clean, 1 config error, 2 completed with
harness-error episodes.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
import time
from pathlib import Path

from . import __version__, metrics, ood_gen, oracle, pipeline, sim_core
from .adp import ConstantPolicy, load_template
from .adp.heuristic import HeuristicPolicy
from .adp.oracle_policy import OraclePolicy
from .adp.remote import RemoteConfig, RemotePolicy
from .config import ConfigError, ExperimentConfig, load_config
from .recognizer import resolve_orm
from .scene import default_calibration, render
from .stub_vlm import StubVlmServer


def _default_template(object_kind: str):
    ref = importlib.resources.files("deformlab") / "templates" / f"{object_kind}.yaml"
    with importlib.resources.as_file(ref) as path:
        return load_template(path)


def build_policy(cfg: ExperimentConfig, calib):
    spec = cfg.policy
    if spec.kind == "oracle":
        return OraclePolicy(calib, cfg.epsilon_px)
    if spec.kind == "heuristic":
        return HeuristicPolicy(spec.heuristic)
    if spec.kind == "always_yes":
        return ConstantPolicy(True)
    if spec.kind == "always_no":
        return ConstantPolicy(False)
    template = (
        load_template(spec.template) if spec.template else _default_template(cfg.object_kind)
    )
    remote_cfg = RemoteConfig(
        url=spec.endpoint,
        timeout=spec.timeout,
        retries=spec.retries,
        backoff_base=spec.backoff_base,
        model=spec.model,
    )
    return RemotePolicy(remote_cfg, template)


def build_pipeline_config(cfg: ExperimentConfig, calib) -> pipeline.PipelineConfig:
    epsilon = cfg.epsilon_px

    def evaluator(state, rep):
        return oracle.is_valid(rep, oracle.ground_truth_of(state, calib, epsilon))

    return pipeline.PipelineConfig(
        sim=cfg.sim,
        calib=calib,
        evaluator=evaluator,
        max_explorations=cfg.max_explorations,
        p_slip=cfg.p_slip,
    )


def run_experiment(cfg: ExperimentConfig) -> tuple[list[pipeline.EpisodeRecord], Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    calib = default_calibration()
    orm = resolve_orm(cfg.orm)
    policy = build_policy(cfg, calib)
    pcfg = build_pipeline_config(cfg, calib)
    specs = [
        ood_gen.OodSpec(
            object_kind=cfg.object_kind,
            seed=cfg.base_seed + i,
            throw_speed_range=cfg.throw_speed,
            throw_height_range=cfg.throw_height,
            landing_target_jitter=cfg.landing_jitter,
        )
        for i in range(cfg.n_episodes)
    ]

    episodes_path = out / "episodes.jsonl"
    episodes_path.write_text("")  # truncate previous run
    sink = pipeline.JsonlSink(episodes_path)
    t0 = time.time()
    try:
        records = pipeline.run_batch(specs, orm, policy, pcfg, cfg.parallelism, sink)
    finally:
        sink.close()
    elapsed = time.time() - t0

    try:
        mseries = metrics.series(records, k_max=cfg.max_explorations)
        mseries.to_csv(out / "metrics.csv")
    except metrics.InconsistentN:
        # every episode was a harness error: emit the schema header only
        (out / "metrics.csv").write_text(",".join(metrics.CSV_HEADER) + "\n")
    metrics.rates(records).to_json(out / "rates.json")

    manifest = {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "episodes": len(records),
        "harness_errors": sum(1 for r in records if r.terminal == pipeline.HARNESS_ERROR),
        "wall_seconds": round(elapsed, 3),
        "outputs": ["episodes.jsonl", "metrics.csv", "rates.json"],
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return records, out


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    records, out = run_experiment(cfg)
    errors = sum(1 for r in records if r.terminal == pipeline.HARNESS_ERROR)
    rs = metrics.rates(records)
    print(
        f"{len(records)} episodes -> {out} "
        f"(transitions {rs.transitions}/{rs.n}, final {rs.completions}/{rs.n}, "
        f"harness errors {errors})"
    )
    return 2 if errors else 0


def cmd_oodgen(args) -> int:
    if args.n < 1:
        print("n must be >= 1", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    calib = default_calibration()
    orm = resolve_orm(
        args.orm or ("rope_skeleton" if args.kind == "rope" else "cloth_corners")
    )
    sim_cfg = sim_core.SimConfig()
    recognizable = 0
    coverages, solidities = [], []
    for i in range(args.n):
        spec = ood_gen.OodSpec(object_kind=args.kind, seed=args.seed + i)
        state = ood_gen.generate(spec, sim_cfg)
        with open(out / f"state_{spec.seed:05d}.json", "w") as f:
            json.dump(sim_core.state_to_dict(state), f)
        obs = render(state, calib)
        coverages.append(ood_gen.footprint_coverage(state, obs.mask, calib.scale))
        if args.kind == "cloth":
            from .recognizer import recognize_cloth

            solidities.append(recognize_cloth(obs).diagnostics["area_ratio"])
        if oracle.is_recognizable(state, orm, calib):
            recognizable += 1
    census = {
        "kind": args.kind,
        "n": args.n,
        "base_seed": args.seed,
        "recognizable": recognizable,
        "recognizable_fraction": recognizable / args.n,
        "footprint_coverage": {
            "min": min(coverages),
            "max": max(coverages),
            "values": [round(c, 4) for c in coverages],
        },
    }
    if solidities:
        census["mask_solidity"] = {
            "min": min(solidities),
            "max": max(solidities),
            "values": [round(s, 4) for s in solidities],
        }
    with open(out / "census.json", "w") as f:
        json.dump(census, f, indent=2)
        f.write("\n")
    print(
        f"{args.n} {args.kind} states -> {out} "
        f"(recognizable {recognizable}/{args.n})"
    )
    return 0


def cmd_stub_vlm(args) -> int:
    try:
        server = StubVlmServer(args.port, args.behavior, args.script)
    except (ValueError, OSError) as err:
        print(f"stub-vlm error: {err}", file=sys.stderr)
        return 1
    print(f"stub VLM ({args.behavior}) listening on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_metrics(args) -> int:
    records = pipeline.read_jsonl(args.episodes)
    if not records:
        print("no records found", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else Path(args.episodes).parent
    out.mkdir(parents=True, exist_ok=True)
    mseries = metrics.series(records, k_max=args.k_max)
    mseries.to_csv(out / "metrics.csv")
    metrics.rates(records).to_json(out / "rates.json")
    print(f"metrics for {len(records)} episodes -> {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="deformlab",
        description="Rope/cloth manipulation recovery harness",
    )
    parser.add_argument("--version", action="version", version=f"deformlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a batch experiment from a YAML config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_ood = sub.add_parser("oodgen", help="generate a corpus of OOD initial states")
    p_ood.add_argument("--kind", choices=("rope", "cloth"), required=True)
    p_ood.add_argument("--n", type=int, required=True)
    p_ood.add_argument("--seed", type=int, default=0)
    p_ood.add_argument("--out", required=True)
    p_ood.add_argument("--orm", default=None)
    p_ood.set_defaults(func=cmd_oodgen)

    p_stub = sub.add_parser("stub-vlm", help="serve an offline judge endpoint")
    p_stub.add_argument("--port", type=int, default=0)
    p_stub.add_argument(
        "--behavior",
        choices=("always_yes", "always_no", "scripted", "oracle_file"),
        default="always_no",
    )
    p_stub.add_argument("--script", default=None)
    p_stub.set_defaults(func=cmd_stub_vlm)

    p_met = sub.add_parser("metrics", help="recompute metrics from an episode log")
    p_met.add_argument("episodes")
    p_met.add_argument("--out", default=None)
    p_met.add_argument("--k-max", type=int, default=20)
    p_met.set_defaults(func=cmd_metrics)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
