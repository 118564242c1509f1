"""Experiment configuration: a single YAML file drives a batch run."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .adp.heuristic import HeuristicParams
from .sim_core import SimConfig

ENV_ENDPOINT = "DEFORMLAB_REMOTE_ENDPOINT"
ENV_MODEL = "DEFORMLAB_REMOTE_MODEL"


class ConfigError(ValueError):
    """Bad experiment config; message carries the offending field."""


@dataclass(frozen=True)
class PolicySpec:
    kind: str  # oracle | heuristic | remote | always_yes | always_no
    endpoint: str | None = None
    template: str | None = None
    timeout: float = 30.0
    retries: int = 3
    backoff_base: float = 1.0
    model: str | None = None
    heuristic: HeuristicParams = field(default_factory=HeuristicParams)


@dataclass(frozen=True)
class ExperimentConfig:
    object_kind: str
    n_episodes: int
    base_seed: int
    policy: PolicySpec
    orm: str
    epsilon_px: float = 30.0
    max_explorations: int = 20
    p_slip: float = 0.15
    sim: SimConfig = field(default_factory=SimConfig)
    throw_speed: tuple[float, float] = (0.5, 1.5)
    throw_height: tuple[float, float] = (0.15, 0.30)
    landing_jitter: float = 0.08
    output_dir: str = "out"
    parallelism: int = 1

    def to_dict(self) -> dict:
        return {
            "object_kind": self.object_kind,
            "n_episodes": self.n_episodes,
            "base_seed": self.base_seed,
            "policy": {
                "kind": self.policy.kind,
                "endpoint": self.policy.endpoint,
                "template": self.policy.template,
                "timeout": self.policy.timeout,
                "retries": self.policy.retries,
                "backoff_base": self.policy.backoff_base,
                "model": self.policy.model,
                "heuristic": {
                    "rope_min_separation_frac": self.policy.heuristic.rope_min_separation_frac,
                    "cloth_min_area_ratio": self.policy.heuristic.cloth_min_area_ratio,
                    "cloth_corner_angle_deg": list(self.policy.heuristic.cloth_corner_angle_deg),
                },
            },
            "orm": self.orm,
            "epsilon_px": self.epsilon_px,
            "max_explorations": self.max_explorations,
            "p_slip": self.p_slip,
            "sim": {
                "timestep": self.sim.timestep,
                "substeps": self.sim.substeps,
                "gravity": self.sim.gravity,
                "damping": self.sim.damping,
                "table_friction": self.sim.table_friction,
                "solver_iterations": self.sim.solver_iterations,
                "rng_seed": self.sim.rng_seed,
            },
            "ood": {
                "throw_speed": list(self.throw_speed),
                "throw_height": list(self.throw_height),
                "landing_jitter": self.landing_jitter,
            },
            "output_dir": self.output_dir,
            "parallelism": self.parallelism,
        }


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ConfigError(f"{where}{key}: missing required field")
    return data[key]


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a mapping")

    object_kind = _require(data, "object_kind", "")
    if object_kind not in ("rope", "cloth"):
        raise ConfigError(f"object_kind: must be rope or cloth, got {object_kind!r}")
    n_episodes = int(_require(data, "n_episodes", ""))
    if n_episodes < 1:
        raise ConfigError("n_episodes: must be >= 1")
    base_seed = int(data.get("base_seed", 0))

    pol = _require(data, "policy", "")
    if not isinstance(pol, dict):
        raise ConfigError("policy: expected a mapping")
    kind = _require(pol, "kind", "policy.")
    if kind not in ("oracle", "heuristic", "remote", "always_yes", "always_no"):
        raise ConfigError(f"policy.kind: unknown policy {kind!r}")
    endpoint = os.environ.get(ENV_ENDPOINT) or pol.get("endpoint")
    model = os.environ.get(ENV_MODEL) or pol.get("model")
    if kind == "remote" and not endpoint:
        raise ConfigError(
            f"policy.endpoint: required for remote policy (or set {ENV_ENDPOINT})"
        )
    heur = pol.get("heuristic", {}) or {}
    heuristic = HeuristicParams(
        rope_min_separation_frac=float(heur.get("rope_min_separation_frac", 0.40)),
        cloth_min_area_ratio=float(heur.get("cloth_min_area_ratio", 0.90)),
        cloth_corner_angle_deg=tuple(heur.get("cloth_corner_angle_deg", (60.0, 120.0))),
    )
    policy = PolicySpec(
        kind=kind,
        endpoint=endpoint,
        template=pol.get("template"),
        timeout=float(pol.get("timeout", 30.0)),
        retries=int(pol.get("retries", 3)),
        backoff_base=float(pol.get("backoff_base", 1.0)),
        model=model,
        heuristic=heuristic,
    )

    orm = data.get("orm") or ("rope_skeleton" if object_kind == "rope" else "cloth_corners")

    epsilon = float(data.get("epsilon_px", 30.0))
    if epsilon <= 0:
        raise ConfigError("epsilon_px: must be > 0")
    max_explorations = int(data.get("max_explorations", 20))
    if max_explorations < 0:
        raise ConfigError("max_explorations: must be >= 0")
    p_slip = float(data.get("p_slip", 0.15))
    if not 0.0 <= p_slip <= 1.0:
        raise ConfigError("p_slip: must be in [0, 1]")

    sim_over = data.get("sim", {}) or {}
    try:
        sim = SimConfig(
            timestep=float(sim_over.get("timestep", 1.0 / 120.0)),
            substeps=int(sim_over.get("substeps", 4)),
            gravity=float(sim_over.get("gravity", 9.81)),
            damping=float(sim_over.get("damping", 0.02)),
            table_friction=float(sim_over.get("table_friction", 0.5)),
            solver_iterations=int(sim_over.get("solver_iterations", 8)),
            rng_seed=int(sim_over.get("rng_seed", 0)),
        )
    except ValueError as err:
        raise ConfigError(f"sim: {err}") from err

    ood = data.get("ood", {}) or {}
    throw_speed = tuple(ood.get("throw_speed", (0.5, 1.5)))
    throw_height = tuple(ood.get("throw_height", (0.15, 0.30)))
    landing_jitter = float(ood.get("landing_jitter", 0.08))

    parallelism = int(data.get("parallelism", 1))
    if parallelism < 1:
        raise ConfigError("parallelism: must be >= 1")

    return ExperimentConfig(
        object_kind=object_kind,
        n_episodes=n_episodes,
        base_seed=base_seed,
        policy=policy,
        orm=orm,
        epsilon_px=epsilon,
        max_explorations=max_explorations,
        p_slip=p_slip,
        sim=sim,
        throw_speed=throw_speed,  # type: ignore[arg-type]
        throw_height=throw_height,  # type: ignore[arg-type]
        landing_jitter=landing_jitter,
        output_dir=str(data.get("output_dir", "out")),
        parallelism=parallelism,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from err
    except OSError as err:
        raise ConfigError(f"{path}: {err}") from err
    return parse_config(data)
