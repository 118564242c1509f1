"""Seeded out-of-distribution initial-state protocols.

Rope: fold into a hairpin (shortening its effective length), hold at
the fold, throw onto the table, settle. Cloth: crumple with a few
folds, hold, throw, settle. Folds are modelled as isometric wraps
around a small crease cylinder so constructions start geometrically
feasible; throws intentionally produce severe self-occlusion; seeds
make every state reproducible.

The analytic constructors used by the protocols are exported for tests
that need specific misleading geometries (coincident rope halves,
partially folded cloth with a false crease edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sim_core as sim
from .sim_core import ObjectState, SimConfig

FLIGHT_SPIN = 0.15  # per-particle velocity noise, fraction of throw speed
CLOTH_SPACING = sim.CLOTH_SIZE / (sim.CLOTH_GRID - 1)
CREASE_RADIUS = 0.6 * CLOTH_SPACING


@dataclass(frozen=True)
class OodSpec:
    object_kind: str  # "rope" | "cloth"
    seed: int
    throw_speed_range: tuple[float, float] = (0.5, 1.5)
    throw_height_range: tuple[float, float] = (0.15, 0.30)
    landing_target_jitter: float = 0.08

    def __post_init__(self):
        if self.object_kind not in ("rope", "cloth"):
            raise ValueError(f"unknown object kind {self.object_kind!r}")
        for lo, hi in (self.throw_speed_range, self.throw_height_range):
            if not (0 < lo <= hi):
                raise ValueError("ranges must be positive and non-empty")
        if self.landing_target_jitter < 0:
            raise ValueError("landing_target_jitter must be >= 0")


def hairpin_rope_positions(
    separation: float = 0.015,
    fold_fraction: float = 0.5,
    center: tuple[float, float] = (0.0, 0.0),
    angle: float = 0.0,
    n: int = sim.ROPE_PARTICLES,
    length: float = sim.ROPE_LENGTH,
) -> np.ndarray:
    """Particle positions along a U: two parallel strands joined by a
    half-circle cap of diameter ``separation``. z = 0."""
    r = max(separation / 2.0, 1e-4)
    cap = math.pi * r
    straight = length - cap
    l_a = max(straight * fold_fraction, 0.0)

    s_vals = np.linspace(0.0, length, n)
    pts = np.zeros((n, 3))
    u = np.array([math.cos(angle), math.sin(angle)])  # strand direction
    w = np.array([-math.sin(angle), math.cos(angle)])  # separation direction
    for i, s in enumerate(s_vals):
        if s <= l_a:
            xy = u * (l_a - s) + w * r
        elif s <= l_a + cap:
            t = (s - l_a) / cap * math.pi  # 0..pi around the cap
            xy = u * (-math.sin(t) * r) + w * (r * math.cos(t))
        else:
            xy = u * (s - l_a - cap) + w * (-r)
        pts[i, 0] = center[0] + xy[0]
        pts[i, 1] = center[1] + xy[1]
    return pts


def hairpin_rope_state(
    separation: float = 0.015,
    fold_fraction: float = 0.5,
    center: tuple[float, float] = (0.0, 0.0),
    angle: float = 0.0,
) -> ObjectState:
    """On-table hairpin-folded rope (not settled)."""
    topo = sim.make_rope_topology()
    pos = hairpin_rope_positions(separation, fold_fraction, center, angle)
    return ObjectState(pos, np.zeros_like(pos), topo)


def fold_cloth(
    pos: np.ndarray, q: np.ndarray, psi: float, radius: float = CREASE_RADIUS
) -> None:
    """In-place isometric fold: material beyond the line through ``q``
    (normal at angle ``psi``) wraps around a half-cylinder of ``radius``
    and lands inverted on top. Arc length is preserved, so the folded
    state starts feasible for the distance constraints."""
    n = np.array([math.cos(psi), math.sin(psi)])
    d = (pos[:, :2] - q) @ n
    beyond = d > 0
    if not beyond.any():
        return
    theta = d[beyond] / radius
    wrap = theta < math.pi
    new_d = d[beyond].copy()
    lift = np.zeros_like(new_d)
    new_d[wrap] = radius * np.sin(theta[wrap])
    lift[wrap] = radius * (1.0 - np.cos(theta[wrap]))
    new_d[~wrap] = -(d[beyond][~wrap] - math.pi * radius)
    lift[~wrap] = 2.0 * radius
    pos[beyond, 0] += (new_d - d[beyond]) * n[0]
    pos[beyond, 1] += (new_d - d[beyond]) * n[1]
    pos[beyond, 2] += lift


def folded_cloth_state(
    flap_fraction: float = 0.35,
    center: tuple[float, float] = (0.0, 0.0),
) -> ObjectState:
    """Cloth with its low-y flap folded up over the body (not settled).

    The visible footprint keeps the true far corners on one edge while
    the opposite edge is the fold crease; the flap's true corners land
    inside the footprint. This is the misleading-structure geometry:
    crease ends read as adjacent corners but are far from any true pair.
    """
    state = sim.make_cloth_state(center)
    pos = state.positions.copy()
    y_crease = center[1] - sim.CLOTH_SIZE / 2.0 + flap_fraction * sim.CLOTH_SIZE
    # fold the low-y flap: normal points toward -y so "beyond" is y < crease
    fold_cloth(pos, np.array([center[0], y_crease]), -math.pi / 2.0)
    return ObjectState(pos, np.zeros_like(pos), state.topology)


def _throw(
    state: ObjectState, rng: np.random.Generator, spec: OodSpec, config: SimConfig
) -> ObjectState:
    """Launch a held construction onto the table and settle."""
    height = rng.uniform(*spec.throw_height_range)
    speed = rng.uniform(*spec.throw_speed_range)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    vel_dir = np.array([math.cos(theta), math.sin(theta), 0.0])

    jitter_r = spec.landing_target_jitter * math.sqrt(rng.uniform())
    jitter_a = rng.uniform(0.0, 2.0 * math.pi)
    target = np.array([jitter_r * math.cos(jitter_a), jitter_r * math.sin(jitter_a), 0.0])

    t_flight = math.sqrt(2.0 * height / config.gravity)
    start = target - vel_dir * speed * t_flight

    pos = state.positions.copy()
    pos -= pos.mean(axis=0)
    # random tilt about the throw direction: landings vary flat to edge-on
    tilt = rng.uniform(0.0, math.pi / 3.0)
    ct, st = math.cos(tilt), math.sin(tilt)
    axis = vel_dir[:2]
    perp = np.array([-axis[1], axis[0]])
    comp_axis = pos[:, :2] @ axis
    comp_perp = pos[:, :2] @ perp
    z0 = pos[:, 2]
    pos[:, 0] = comp_axis * axis[0] + (comp_perp * ct - z0 * st) * perp[0]
    pos[:, 1] = comp_axis * axis[1] + (comp_perp * ct - z0 * st) * perp[1]
    pos[:, 2] = comp_perp * st + z0 * ct

    pos[:, 0] += start[0]
    pos[:, 1] += start[1]
    pos[:, 2] += height + max(0.0, -pos[:, 2].min())

    vel = np.tile(vel_dir * speed, (pos.shape[0], 1))
    vel += rng.normal(0.0, FLIGHT_SPIN * speed, vel.shape)

    thrown = ObjectState(pos, vel, state.topology)
    return sim.settle(thrown, config)


def generate_rope_ood(spec: OodSpec, config: SimConfig) -> ObjectState:
    if spec.object_kind != "rope":
        raise ValueError("spec.object_kind must be 'rope'")
    rng = np.random.default_rng(spec.seed)
    separation = rng.uniform(0.006, 0.03)
    fold_fraction = rng.uniform(0.40, 0.60)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    folded = hairpin_rope_state(separation, fold_fraction, angle=angle)
    return _throw(folded, rng, spec, config)


MAX_CONSTRUCTION_ATTEMPTS = 6


def generate_cloth_ood(spec: OodSpec, config: SimConfig) -> ObjectState:
    """Crumple then throw. Seed-chosen severity: ``roll`` (near-parallel
    folds into a strip), ``crumple`` (random folds), ``light`` (one
    shallow edge or corner fold).

    Crossing folds occasionally leave a locally-stuck crease (an edge
    pair the solver cannot relax within tolerance), so constructions are
    rejection-sampled deterministically: re-roll with a sub-seed until
    the settled state passes the invariant sweep; the final attempt
    falls back to an always-feasible light fold.
    """
    if spec.object_kind != "cloth":
        raise ValueError("spec.object_kind must be 'cloth'")
    for attempt in range(MAX_CONSTRUCTION_ATTEMPTS):
        force_light = attempt == MAX_CONSTRUCTION_ATTEMPTS - 1
        state = _generate_cloth_once(spec, config, attempt, force_light)
        if sim.check_invariants(state, settled=True) == []:
            return state
    return state


def _generate_cloth_once(
    spec: OodSpec, config: SimConfig, attempt: int, force_light: bool
) -> ObjectState:
    rng = np.random.default_rng([spec.seed, attempt])
    state = sim.make_cloth_state()
    pos = state.positions.copy()

    def relax_folds(p: np.ndarray) -> np.ndarray:
        """Short free step between folds: successive creases interact
        (a fold crossing an earlier crease arch lands slightly stretched),
        so let the solver re-establish feasibility before folding again."""
        s = sim.step(ObjectState(p, np.zeros_like(p), state.topology), config, 0.25)
        return s.positions.copy()

    mode = rng.choice(["roll", "crumple", "light"], p=[0.4, 0.4, 0.2])
    if force_light:
        mode = "light"
    if mode == "roll":
        psi = rng.uniform(0.0, math.pi)
        for _ in range(int(rng.integers(2, 4))):
            a = psi + rng.uniform(-0.15, 0.15)
            n = np.array([math.cos(a), math.sin(a)])
            span = pos[:, :2] @ n
            offset = (span.min() + span.max()) / 2.0 + rng.uniform(-0.02, 0.02)
            fold_cloth(pos, offset * n, a)
            pos = relax_folds(pos)
    elif mode == "crumple":
        for _ in range(int(rng.integers(2, 5))):
            q = rng.uniform(-0.06, 0.06, size=2)
            a = rng.uniform(0.0, 2.0 * math.pi)
            n = np.array([math.cos(a), math.sin(a)])
            side = (pos[:, :2] - q) @ n
            if (side > 0).sum() > (side <= 0).sum():
                a += math.pi  # fold the smaller side
            fold_cloth(pos, q, a)
            pos = relax_folds(pos)
    else:
        a = rng.uniform(0.0, 2.0 * math.pi)
        n = np.array([math.cos(a), math.sin(a)])
        span = pos[:, :2] @ n
        depth = rng.uniform(0.02, 0.08)
        fold_cloth(pos, (span.max() - depth) * n, a)

    crumpled = ObjectState(pos, np.zeros_like(pos), state.topology)
    return _throw(crumpled, rng, spec, config)


def generate(spec: OodSpec, config: SimConfig) -> ObjectState:
    if spec.object_kind == "rope":
        return generate_rope_ood(spec, config)
    return generate_cloth_ood(spec, config)


def mask_iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    union = np.logical_or(mask_a, mask_b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(mask_a, mask_b).sum() / union)


def footprint_coverage(state: ObjectState, mask: np.ndarray, scale: float) -> float:
    """Mask area relative to the object's flat footprint: 1 when fully
    spread, small when crumpled. The cloth census diversity measure."""
    if state.topology.kind == "cloth":
        flat_px = (sim.CLOTH_SIZE * scale) ** 2
    else:
        flat_px = sim.ROPE_LENGTH * scale * (2.0 * sim.ROPE_RADIUS * scale)
    return float(mask.sum() / flat_px)