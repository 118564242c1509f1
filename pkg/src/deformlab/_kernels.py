"""Numba kernels for the position-based dynamics solver.

Everything here operates in-place on plain float64/int64 arrays so the
hot loop stays allocation-free. Gauss-Seidel constraint order is the
array order, which keeps trajectories bit-reproducible across runs.
"""

import numpy as np
from numba import njit

TABLE_Z = 0.0
CONTACT_EPS = 1e-6


@njit(cache=True, nogil=True)
def run_substeps(
    pos,
    vel,
    inv_mass,
    edges,
    rest,
    bend_pairs,
    bend_min,
    pin_idx,
    pin_from,
    pin_to,
    n_substeps,
    dt_sub,
    gravity,
    damp_sub,
    drag_sub,
    fric_sub,
    iterations,
):
    """Advance the particle system by ``n_substeps`` PBD substeps.

    Pinned particles (inv_mass 0) track a linear interpolation from
    ``pin_from`` to ``pin_to`` over the whole call; their velocity is
    updated from actual displacement so released objects inherit the
    gripper motion.
    """
    n = pos.shape[0]
    m = edges.shape[0]
    b = bend_pairs.shape[0]
    g = pin_idx.shape[0]

    pred = np.empty((n, 3), np.float64)
    contact = np.zeros(n, np.uint8)

    for s in range(n_substeps):
        t1 = (s + 1) / n_substeps

        # external forces + velocity damping/drag
        for i in range(n):
            if inv_mass[i] > 0.0:
                vel[i, 2] -= gravity * dt_sub
                vel[i, 0] *= damp_sub * drag_sub
                vel[i, 1] *= damp_sub * drag_sub
                vel[i, 2] *= damp_sub * drag_sub

        # predict
        for i in range(n):
            pred[i, 0] = pos[i, 0] + vel[i, 0] * dt_sub
            pred[i, 1] = pos[i, 1] + vel[i, 1] * dt_sub
            pred[i, 2] = pos[i, 2] + vel[i, 2] * dt_sub
        for k in range(g):
            i = pin_idx[k]
            pred[i, 0] = pin_from[k, 0] + (pin_to[k, 0] - pin_from[k, 0]) * t1
            pred[i, 1] = pin_from[k, 1] + (pin_to[k, 1] - pin_from[k, 1]) * t1
            pred[i, 2] = pin_from[k, 2] + (pin_to[k, 2] - pin_from[k, 2]) * t1

        for i in range(n):
            contact[i] = 0

        for _ in range(iterations):
            # stretch constraints (equality)
            for c in range(m):
                i = edges[c, 0]
                j = edges[c, 1]
                wi = inv_mass[i]
                wj = inv_mass[j]
                wsum = wi + wj
                if wsum == 0.0:
                    continue
                dx = pred[i, 0] - pred[j, 0]
                dy = pred[i, 1] - pred[j, 1]
                dz = pred[i, 2] - pred[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < 1e-12:
                    continue
                corr = (d - rest[c]) / (d * wsum)
                pred[i, 0] -= wi * corr * dx
                pred[i, 1] -= wi * corr * dy
                pred[i, 2] -= wi * corr * dz
                pred[j, 0] += wj * corr * dx
                pred[j, 1] += wj * corr * dy
                pred[j, 2] += wj * corr * dz

            # bend limiters (inequality: keep second neighbours apart)
            for c in range(b):
                i = bend_pairs[c, 0]
                j = bend_pairs[c, 1]
                wi = inv_mass[i]
                wj = inv_mass[j]
                wsum = wi + wj
                if wsum == 0.0:
                    continue
                dx = pred[i, 0] - pred[j, 0]
                dy = pred[i, 1] - pred[j, 1]
                dz = pred[i, 2] - pred[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d >= bend_min[c]:
                    continue
                if d < 1e-9:
                    # coincident pair: separate vertically so the
                    # correction direction stays well-defined
                    dx, dy, dz = 0.0, 0.0, 1.0
                    d = 1.0
                    corr = -bend_min[c] / wsum
                else:
                    corr = (d - bend_min[c]) / (d * wsum)
                pred[i, 0] -= wi * corr * dx
                pred[i, 1] -= wi * corr * dy
                pred[i, 2] -= wi * corr * dz
                pred[j, 0] += wj * corr * dx
                pred[j, 1] += wj * corr * dy
                pred[j, 2] += wj * corr * dz

            # table plane
            for i in range(n):
                if inv_mass[i] > 0.0 and pred[i, 2] < TABLE_Z:
                    pred[i, 2] = TABLE_Z
                    contact[i] = 1

        # final plane clamp
        for i in range(n):
            if inv_mass[i] > 0.0 and pred[i, 2] < TABLE_Z:
                pred[i, 2] = TABLE_Z
                contact[i] = 1

        # velocity update + contact friction
        inv_dt = 1.0 / dt_sub
        for i in range(n):
            vel[i, 0] = (pred[i, 0] - pos[i, 0]) * inv_dt
            vel[i, 1] = (pred[i, 1] - pos[i, 1]) * inv_dt
            vel[i, 2] = (pred[i, 2] - pos[i, 2]) * inv_dt
            if contact[i] == 1 and pred[i, 2] <= TABLE_Z + CONTACT_EPS:
                vel[i, 0] *= fric_sub
                vel[i, 1] *= fric_sub
            pos[i, 0] = pred[i, 0]
            pos[i, 1] = pred[i, 1]
            pos[i, 2] = pred[i, 2]


@njit(cache=True, nogil=True)
def relax(pos, inv_mass, edges, rest, bend_pairs, bend_min, iterations):
    """Quasi-static constraint polish: projection rounds with no dynamics.

    Used at the end of a settle so crease regions converge instead of
    oscillating under the velocity feedback loop.
    """
    n = pos.shape[0]
    m = edges.shape[0]
    b = bend_pairs.shape[0]
    for _ in range(iterations):
        for c in range(m):
            i = edges[c, 0]
            j = edges[c, 1]
            wi = inv_mass[i]
            wj = inv_mass[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                continue
            corr = (d - rest[c]) / (d * wsum)
            pos[i, 0] -= wi * corr * dx
            pos[i, 1] -= wi * corr * dy
            pos[i, 2] -= wi * corr * dz
            pos[j, 0] += wj * corr * dx
            pos[j, 1] += wj * corr * dy
            pos[j, 2] += wj * corr * dz
        for c in range(b):
            i = bend_pairs[c, 0]
            j = bend_pairs[c, 1]
            wi = inv_mass[i]
            wj = inv_mass[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if d >= bend_min[c]:
                continue
            if d < 1e-9:
                dx, dy, dz = 0.0, 0.0, 1.0
                d = 1.0
                corr = -bend_min[c] / wsum
            else:
                corr = (d - bend_min[c]) / (d * wsum)
            pos[i, 0] -= wi * corr * dx
            pos[i, 1] -= wi * corr * dy
            pos[i, 2] -= wi * corr * dz
            pos[j, 0] += wj * corr * dx
            pos[j, 1] += wj * corr * dy
            pos[j, 2] += wj * corr * dz
        for i in range(n):
            if inv_mass[i] > 0.0 and pos[i, 2] < TABLE_Z:
                pos[i, 2] = TABLE_Z


@njit(cache=True, nogil=True)
def max_speed(vel):
    best = 0.0
    for i in range(vel.shape[0]):
        s = vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
        if s > best:
            best = s
    return np.sqrt(best)
