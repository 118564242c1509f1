"""Particle-based deformable physics for rope and cloth over a table plane.

Rope is a 50-particle chain (0.5 m), cloth a 20x20 particle grid (0.3 m
square). Both are solved with position-based dynamics: equality distance
constraints (chain links; cloth structural + shear), one-sided "bend
limiter" pairs between second neighbours that stop the material from
kinking sharper than a minimum turning angle, a table plane at z=0 with
tangential contact friction, and a per-particle air drag term that lets
released cloth fall gently.

States are value objects: every operation returns a new ObjectState and
never mutates its input, so episodes can run in parallel workers freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import max_speed, relax, run_substeps

ROPE_PARTICLES = 50
ROPE_LENGTH = 0.5
ROPE_RADIUS = 0.004
CLOTH_GRID = 20
CLOTH_SIZE = 0.3
CLOTH_THICKNESS_BAND = 0.005
WORKSPACE_HALF = 0.3

MAX_GRASPS = 2
SETTLE_SPEED = 0.01
SETTLE_CAP_SECONDS = 10.0
PENETRATION_TOL = 1e-3
CONSTRAINT_TOL = 0.05

# bend limiter: second-neighbour distance floor, as a fraction of the
# straight-line distance 2*rest. 0.975 keeps the rope garden-hose stiff
# (kinks no sharper than ~154 deg) so tosses land as open curves. Cloth
# gets none: limiters fight the shear constraints in crumpled states and
# the material should hold creases anyway.
ROPE_BEND_FACTOR = 0.975
SETTLE_RELAX_ITERATIONS = 60

ROPE_DRAG = 0.2
CLOTH_DRAG = 3.5

ROPE_PARTICLE_MASS = 0.05 / ROPE_PARTICLES
CLOTH_PARTICLE_MASS = 0.08 / (CLOTH_GRID * CLOTH_GRID)


class NonFiniteState(RuntimeError):
    """Solver blow-up: a coordinate became NaN/inf. Harness error, not a task failure."""


class GraspError(RuntimeError):
    """A grasp could not be made; ``reason`` is a short machine-readable tag."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


@dataclass(frozen=True)
class Topology:
    """Constraint graph plus per-object physical parameters."""

    kind: str  # "rope" | "cloth"
    edges: np.ndarray  # (m, 2) int64
    rest_lengths: np.ndarray  # (m,) float64
    bend_pairs: np.ndarray  # (b, 2) int64
    bend_min: np.ndarray  # (b,) float64
    drag: float  # per-second velocity decay from air resistance
    particle_mass: float
    grid_shape: tuple[int, int] | None = None  # cloth only

    @property
    def n_particles(self) -> int:
        if self.grid_shape is not None:
            return self.grid_shape[0] * self.grid_shape[1]
        return int(self.edges.max()) + 1 if len(self.edges) else 1


@dataclass(frozen=True)
class Grasp:
    gripper_id: int
    particle_index: int
    target: np.ndarray  # (3,) world position the gripper holds the particle at


@dataclass(frozen=True)
class ObjectState:
    positions: np.ndarray  # (n, 3) float64, meters
    velocities: np.ndarray  # (n, 3) float64, m/s
    topology: Topology
    grasps: dict[int, Grasp] = field(default_factory=dict)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def copy_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.positions.copy(), self.velocities.copy()


@dataclass(frozen=True)
class SimConfig:
    timestep: float = 1.0 / 120.0
    substeps: int = 4
    gravity: float = 9.81
    damping: float = 0.02  # velocity fraction removed per step
    table_friction: float = 0.5  # tangential velocity scale per step on contact
    solver_iterations: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if self.timestep <= 0:
            raise ValueError("timestep must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must be in [0, 1]")
        if self.solver_iterations < 1:
            raise ValueError("solver_iterations must be >= 1")


def make_rope_topology(
    n: int = ROPE_PARTICLES,
    length: float = ROPE_LENGTH,
    bend_factor: float = ROPE_BEND_FACTOR,
    drag: float = ROPE_DRAG,
) -> Topology:
    seg = length / (n - 1)
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).astype(np.int64)
    rest = np.full(n - 1, seg)
    bend_pairs = np.stack([np.arange(n - 2), np.arange(2, n)], axis=1).astype(np.int64)
    bend_min = np.full(n - 2, bend_factor * 2.0 * seg)
    return Topology(
        kind="rope",
        edges=edges,
        rest_lengths=rest,
        bend_pairs=bend_pairs,
        bend_min=bend_min,
        drag=drag,
        particle_mass=ROPE_PARTICLE_MASS,
    )


def make_cloth_topology(
    grid: int = CLOTH_GRID,
    size: float = CLOTH_SIZE,
    drag: float = CLOTH_DRAG,
) -> Topology:
    spacing = size / (grid - 1)

    def idx(r, c):
        return r * grid + c

    edges = []
    rest = []
    # structural
    for r in range(grid):
        for c in range(grid):
            if c + 1 < grid:
                edges.append((idx(r, c), idx(r, c + 1)))
                rest.append(spacing)
            if r + 1 < grid:
                edges.append((idx(r, c), idx(r + 1, c)))
                rest.append(spacing)
    # shear
    diag = spacing * math.sqrt(2.0)
    for r in range(grid - 1):
        for c in range(grid - 1):
            edges.append((idx(r, c), idx(r + 1, c + 1)))
            rest.append(diag)
            edges.append((idx(r, c + 1), idx(r + 1, c)))
            rest.append(diag)

    return Topology(
        kind="cloth",
        edges=np.array(edges, dtype=np.int64),
        rest_lengths=np.array(rest),
        bend_pairs=np.zeros((0, 2), dtype=np.int64),
        bend_min=np.zeros(0),
        drag=drag,
        particle_mass=CLOTH_PARTICLE_MASS,
        grid_shape=(grid, grid),
    )


def make_rope_state(center: tuple[float, float] = (0.0, 0.0), angle: float = 0.0) -> ObjectState:
    """Straight rope resting on the table, centered at ``center``."""
    topo = make_rope_topology()
    n = ROPE_PARTICLES
    t = np.linspace(-ROPE_LENGTH / 2.0, ROPE_LENGTH / 2.0, n)
    pos = np.zeros((n, 3))
    pos[:, 0] = center[0] + t * math.cos(angle)
    pos[:, 1] = center[1] + t * math.sin(angle)
    return ObjectState(pos, np.zeros((n, 3)), topo)


def make_cloth_state(center: tuple[float, float] = (0.0, 0.0)) -> ObjectState:
    """Flat cloth resting on the table, centered at ``center``."""
    topo = make_cloth_topology()
    g = CLOTH_GRID
    lin = np.linspace(-CLOTH_SIZE / 2.0, CLOTH_SIZE / 2.0, g)
    xx, yy = np.meshgrid(lin, lin, indexing="xy")
    pos = np.zeros((g * g, 3))
    # row-major: index r*g + c has y from row r, x from column c
    pos[:, 0] = center[0] + xx.reshape(-1)
    pos[:, 1] = center[1] + yy.reshape(-1)
    return ObjectState(pos, np.zeros((g * g, 3)), topo)


def cloth_corner_indices(topo: Topology) -> tuple[int, int, int, int]:
    """Grid corner particle indices in cycle order (adjacent pairs share an edge)."""
    g = topo.grid_shape[0]
    return (0, g - 1, g * g - 1, g * (g - 1))


def _pin_arrays(state: ObjectState, end_targets: dict[int, np.ndarray] | None = None):
    grasps = sorted(state.grasps.values(), key=lambda gr: gr.gripper_id)
    idx = np.array([gr.particle_index for gr in grasps], dtype=np.int64)
    frm = np.array([gr.target for gr in grasps], dtype=np.float64).reshape(-1, 3)
    if end_targets is None:
        to = frm.copy()
    else:
        to = np.array(
            [end_targets.get(gr.gripper_id, gr.target) for gr in grasps], dtype=np.float64
        ).reshape(-1, 3)
    return idx, frm, to


def _advance(
    state: ObjectState,
    config: SimConfig,
    duration: float,
    end_targets: dict[int, np.ndarray] | None = None,
) -> ObjectState:
    if duration < 0:
        raise ValueError("duration must be >= 0")
    n_steps = int(round(duration / config.timestep))
    if n_steps == 0:
        return state
    pos, vel = state.copy_arrays()
    inv_mass = np.ones(state.n_particles)
    pin_idx, pin_from, pin_to = _pin_arrays(state, end_targets)
    inv_mass[pin_idx] = 0.0

    dt_sub = config.timestep / config.substeps
    damp_sub = (1.0 - config.damping) ** (1.0 / config.substeps)
    fric_sub = config.table_friction ** (1.0 / config.substeps)
    drag_sub = math.exp(-state.topology.drag * dt_sub)

    run_substeps(
        pos,
        vel,
        inv_mass,
        state.topology.edges,
        state.topology.rest_lengths,
        state.topology.bend_pairs,
        state.topology.bend_min,
        pin_idx,
        pin_from,
        pin_to,
        n_steps * config.substeps,
        dt_sub,
        config.gravity,
        damp_sub,
        drag_sub,
        fric_sub,
        config.solver_iterations,
    )
    if not np.isfinite(pos).all() or not np.isfinite(vel).all():
        raise NonFiniteState("solver produced non-finite coordinates")

    grasps = state.grasps
    if end_targets is not None:
        grasps = {
            gid: replace(gr, target=np.array(end_targets.get(gid, gr.target), dtype=np.float64))
            for gid, gr in state.grasps.items()
        }
    return ObjectState(pos, vel, state.topology, grasps)


def step(state: ObjectState, config: SimConfig, duration: float) -> ObjectState:
    """Advance physics for ``duration`` seconds with grasp targets held fixed."""
    return _advance(state, config, duration)


def move_grippers(
    state: ObjectState,
    config: SimConfig,
    targets: dict[int, np.ndarray],
    duration: float,
) -> ObjectState:
    """Linearly interpolate active grasp targets to ``targets`` over ``duration``."""
    unknown = set(targets) - set(state.grasps)
    if unknown:
        raise KeyError(f"no active grasp for gripper(s) {sorted(unknown)}")
    return _advance(state, config, duration, end_targets=targets)


def settle(state: ObjectState, config: SimConfig) -> ObjectState:
    """Step until max particle speed < 1 cm/s, capped at 10 simulated
    seconds, then relax quasi-statically to full rest.

    The final constraint polish (no dynamics, velocities zeroed) stops
    crease regions from oscillating forever under velocity feedback and
    guarantees the post-settle constraint-residual invariant.
    """
    if state.grasps:
        raise ValueError("settle requires no active grasps")
    s = state
    steps_cap = int(round(SETTLE_CAP_SECONDS / config.timestep))
    for _ in range(steps_cap):
        s = _advance(s, config, config.timestep)
        if max_speed(s.velocities) < SETTLE_SPEED:
            break
    pos = s.positions.copy()
    topo = s.topology
    relax(
        pos,
        np.ones(s.n_particles),
        topo.edges,
        topo.rest_lengths,
        topo.bend_pairs,
        topo.bend_min,
        SETTLE_RELAX_ITERATIONS,
    )
    if not np.isfinite(pos).all():
        raise NonFiniteState("relaxation produced non-finite coordinates")
    return ObjectState(pos, np.zeros_like(pos), topo, s.grasps)


def grasp_nearest(
    state: ObjectState,
    gripper_id: int,
    world_point: np.ndarray,
    tolerance: float,
) -> ObjectState:
    """Attach ``gripper_id`` to the particle nearest ``world_point``.

    Raises GraspError("out_of_tolerance") when the nearest particle is
    farther than ``tolerance`` (pinch misses), GraspError("gripper_busy")
    if the gripper already holds something, GraspError("grippers_exhausted")
    beyond the bimanual limit.
    """
    if gripper_id in state.grasps:
        raise GraspError("gripper_busy", f"gripper {gripper_id} already attached")
    if len(state.grasps) >= MAX_GRASPS:
        raise GraspError("grippers_exhausted", "at most 2 simultaneous grasps")
    point = np.asarray(world_point, dtype=np.float64)
    d = np.linalg.norm(state.positions - point[None, :], axis=1)
    nearest = int(np.argmin(d))
    if d[nearest] > tolerance:
        raise GraspError(
            "out_of_tolerance",
            f"nearest particle {nearest} at {d[nearest]:.4f} m > {tolerance:.4f} m",
        )
    held = {gr.particle_index for gr in state.grasps.values()}
    if nearest in held:
        raise GraspError("particle_held", f"particle {nearest} already grasped")
    grasp = Grasp(gripper_id, nearest, state.positions[nearest].copy())
    grasps = dict(state.grasps)
    grasps[gripper_id] = grasp
    return ObjectState(state.positions.copy(), state.velocities.copy(), state.topology, grasps)


def release(state: ObjectState, gripper_id: int | None = None) -> ObjectState:
    """Detach one gripper, or all grippers when ``gripper_id`` is None."""
    if gripper_id is None:
        grasps: dict[int, Grasp] = {}
    else:
        grasps = {gid: gr for gid, gr in state.grasps.items() if gid != gripper_id}
    return ObjectState(state.positions.copy(), state.velocities.copy(), state.topology, grasps)


def mechanical_energy(state: ObjectState, config: SimConfig) -> float:
    """Kinetic + gravitational potential energy (J), table plane as datum."""
    m = state.topology.particle_mass
    ke = 0.5 * m * float(np.sum(state.velocities**2))
    pe = m * config.gravity * float(np.sum(state.positions[:, 2]))
    return ke + pe


def kinetic_energy(state: ObjectState) -> float:
    m = state.topology.particle_mass
    return 0.5 * m * float(np.sum(state.velocities**2))


def rope_arc_length(state: ObjectState) -> float:
    d = np.diff(state.positions, axis=0)
    return float(np.sum(np.linalg.norm(d, axis=1)))


def constraint_residuals(state: ObjectState) -> np.ndarray:
    """Relative deviation of each equality constraint from its rest length."""
    topo = state.topology
    p = state.positions
    d = np.linalg.norm(p[topo.edges[:, 0]] - p[topo.edges[:, 1]], axis=1)
    return np.abs(d - topo.rest_lengths) / topo.rest_lengths


def state_to_dict(state: ObjectState) -> dict:
    """Portable snapshot; topology is rebuilt from the kind on load, so
    only canonical rope/cloth objects round-trip."""
    return {
        "kind": state.topology.kind,
        "positions": state.positions.tolist(),
        "velocities": state.velocities.tolist(),
        "grasps": [
            {
                "gripper_id": g.gripper_id,
                "particle_index": g.particle_index,
                "target": g.target.tolist(),
            }
            for g in state.grasps.values()
        ],
    }


def state_from_dict(data: dict) -> ObjectState:
    kind = data["kind"]
    topo = make_cloth_topology() if kind == "cloth" else make_rope_topology()
    grasps = {
        g["gripper_id"]: Grasp(
            g["gripper_id"], g["particle_index"], np.array(g["target"], dtype=np.float64)
        )
        for g in data.get("grasps", [])
    }
    return ObjectState(
        np.array(data["positions"], dtype=np.float64),
        np.array(data["velocities"], dtype=np.float64),
        topo,
        grasps,
    )


def check_invariants(state: ObjectState, settled: bool = False) -> list[str]:
    """Return a list of violated state invariants (empty when healthy)."""
    problems = []
    if not np.isfinite(state.positions).all() or not np.isfinite(state.velocities).all():
        problems.append("non-finite coordinates")
        return problems
    if float(state.positions[:, 2].min()) < -PENETRATION_TOL:
        problems.append(
            f"table penetration: min z = {state.positions[:, 2].min():.4f} m"
        )
    if len(state.grasps) > MAX_GRASPS:
        problems.append(f"{len(state.grasps)} grasps exceed bimanual limit")
    if settled and len(state.topology.edges):
        worst = float(constraint_residuals(state).max())
        if worst > CONSTRAINT_TOL:
            problems.append(f"constraint residual {worst:.3f} > {CONSTRAINT_TOL}")
    return problems
