"""Synthetic top-down orthographic camera.

Renders object states into a binary mask plus a z-buffered depth image.
The camera looks straight down from ``cam_height``, so "closest to the
camera" is simply "maximum z" and depth = cam_height - surface z. Rope
particles are rasterized as flat discs interpolated along segments;
cloth as filled triangles between grid neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .pgm import encode_pgm
from .sim_core import ObjectState, ROPE_RADIUS, WORKSPACE_HALF

PX_PER_M = 1500.0  # 30 px == 2 cm
RESOLUTION = 900
CAM_HEIGHT = 0.5
ROPE_SEGMENT_SAMPLES = 8
DEPTH_PGM_RANGE = 0.5  # 16-bit depth PGM spans 0..0.5 m


class OffMask(ValueError):
    """Backprojection was asked for a pixel with no surface under it."""


@dataclass(frozen=True)
class Calibration:
    scale: float = PX_PER_M  # px per meter
    origin: tuple[float, float] = (-WORKSPACE_HALF, -WORKSPACE_HALF)  # world xy of pixel (0,0)
    resolution: tuple[int, int] = (RESOLUTION, RESOLUTION)  # (width, height)
    cam_height: float = CAM_HEIGHT


@dataclass(frozen=True)
class Observation:
    mask: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W) float64 camera distance; +inf off the mask
    resolution: tuple[int, int]
    scale: float
    origin: tuple[float, float]
    cam_height: float

    def mask_u8(self) -> np.ndarray:
        return np.where(self.mask, 255, 0).astype(np.uint8)

    def mask_pgm(self) -> bytes:
        return encode_pgm(self.mask_u8(), 255)

    def depth_pgm(self) -> bytes:
        clipped = np.clip(
            np.where(np.isfinite(self.depth), self.depth, DEPTH_PGM_RANGE),
            0.0,
            DEPTH_PGM_RANGE,
        )
        scaled = np.round(clipped / DEPTH_PGM_RANGE * 65535.0).astype(np.uint16)
        return encode_pgm(scaled, 65535)


def default_calibration() -> Calibration:
    return Calibration()


def project(points: np.ndarray, calib: Calibration) -> np.ndarray:
    """World xy(z) -> float pixel coordinates (x=column, y=row)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    px = np.empty((pts.shape[0], 2))
    px[:, 0] = (pts[:, 0] - calib.origin[0]) * calib.scale
    px[:, 1] = (pts[:, 1] - calib.origin[1]) * calib.scale
    return px


@njit(cache=True, nogil=True)
def _stamp_discs(zbuf, pts, zs, radius):
    h, w = zbuf.shape
    r2 = radius * radius
    for k in range(pts.shape[0]):
        cx = pts[k, 0]
        cy = pts[k, 1]
        z = zs[k]
        x0 = max(0, int(np.floor(cx - radius)))
        x1 = min(w - 1, int(np.ceil(cx + radius)))
        y0 = max(0, int(np.floor(cy - radius)))
        y1 = min(h - 1, int(np.ceil(cy + radius)))
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                dx = x - cx
                dy = y - cy
                if dx * dx + dy * dy <= r2 and z > zbuf[y, x]:
                    zbuf[y, x] = z


@njit(cache=True, nogil=True)
def _raster_triangles(zbuf, tri_px, tri_z):
    h, w = zbuf.shape
    for t in range(tri_px.shape[0]):
        ax, ay = tri_px[t, 0, 0], tri_px[t, 0, 1]
        bx, by = tri_px[t, 1, 0], tri_px[t, 1, 1]
        cx, cy = tri_px[t, 2, 0], tri_px[t, 2, 1]
        denom = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if abs(denom) < 1e-9:
            continue
        x0 = max(0, int(np.floor(min(ax, bx, cx))))
        x1 = min(w - 1, int(np.ceil(max(ax, bx, cx))))
        y0 = max(0, int(np.floor(min(ay, by, cy))))
        y1 = min(h - 1, int(np.ceil(max(ay, by, cy))))
        inv = 1.0 / denom
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                l1 = ((by - cy) * (x - cx) + (cx - bx) * (y - cy)) * inv
                l2 = ((cy - ay) * (x - cx) + (ax - cx) * (y - cy)) * inv
                l3 = 1.0 - l1 - l2
                eps = -1e-7
                if l1 >= eps and l2 >= eps and l3 >= eps:
                    z = l1 * tri_z[t, 0] + l2 * tri_z[t, 1] + l3 * tri_z[t, 2]
                    if z > zbuf[y, x]:
                        zbuf[y, x] = z


def _rope_samples(state: ObjectState) -> tuple[np.ndarray, np.ndarray]:
    p = state.positions
    if p.shape[0] == 1:
        return p[:, :2], p[:, 2]
    a = p[:-1]
    b = p[1:]
    ts = np.linspace(0.0, 1.0, ROPE_SEGMENT_SAMPLES + 1)[:-1]
    seg = a[:, None, :] + (b - a)[:, None, :] * ts[None, :, None]
    samples = np.concatenate([seg.reshape(-1, 3), p[-1:][:, :]], axis=0)
    return samples[:, :2], samples[:, 2]


def render(state: ObjectState, calib: Calibration) -> Observation:
    """Rasterize a state; out-of-frame geometry simply clips."""
    if not np.isfinite(state.positions).all():
        raise ValueError("cannot render non-finite state")
    w, h = calib.resolution
    zbuf = np.full((h, w), -np.inf)

    if state.topology.kind == "cloth" and state.topology.grid_shape is not None:
        g = state.topology.grid_shape[0]
        px = project(state.positions, calib)
        z = state.positions[:, 2]
        idx = np.arange(g * g).reshape(g, g)
        a = idx[:-1, :-1].ravel()
        b = idx[:-1, 1:].ravel()
        c = idx[1:, :-1].ravel()
        d = idx[1:, 1:].ravel()
        tris = np.concatenate(
            [np.stack([a, b, c], axis=1), np.stack([d, b, c], axis=1)], axis=0
        )
        tri_px = px[tris]
        tri_z = z[tris]
        _raster_triangles(zbuf, np.ascontiguousarray(tri_px), np.ascontiguousarray(tri_z))
    else:
        xy, z = _rope_samples(state)
        pts = project(xy, calib)
        _stamp_discs(zbuf, pts, np.ascontiguousarray(z), ROPE_RADIUS * calib.scale)

    mask = np.isfinite(zbuf)
    depth = np.where(mask, calib.cam_height - zbuf, np.inf)
    return Observation(
        mask=mask,
        depth=depth,
        resolution=calib.resolution,
        scale=calib.scale,
        origin=calib.origin,
        cam_height=calib.cam_height,
    )


def add_edge_noise(obs: Observation, sigma: float, rng: np.random.Generator) -> Observation:
    """Robustness toggle: jitter the mask boundary.

    Pixels on the 1-px inner/outer boundary rings flip where a standard
    normal draw exceeds 1/sigma, approximating a Gaussian-displaced
    silhouette edge. Depth for pixels gaining mask copies the nearest
    existing surface (the camera-height plane as a fallback). The object
    interior and background stay untouched.
    """
    if sigma <= 0:
        return obs
    mask = obs.mask
    inner = mask & ~(
        np.roll(mask, 1, 0) & np.roll(mask, -1, 0) & np.roll(mask, 1, 1) & np.roll(mask, -1, 1)
    )
    outer = ~mask & (
        np.roll(mask, 1, 0) | np.roll(mask, -1, 0) | np.roll(mask, 1, 1) | np.roll(mask, -1, 1)
    )
    boundary = inner | outer
    flips = boundary & (np.abs(rng.standard_normal(mask.shape)) > 1.0 / sigma)
    new_mask = mask ^ flips
    finite = np.where(np.isfinite(obs.depth), obs.depth, obs.cam_height)
    new_depth = np.where(new_mask, np.where(mask, obs.depth, finite), np.inf)
    return Observation(
        mask=new_mask,
        depth=new_depth,
        resolution=obs.resolution,
        scale=obs.scale,
        origin=obs.origin,
        cam_height=obs.cam_height,
    )


def backproject(pixel: tuple[float, float], obs: Observation) -> np.ndarray:
    """Pixel (x=col, y=row) -> world point, z read from the depth buffer."""
    x, y = pixel
    col = int(round(x))
    row = int(round(y))
    w, h = obs.resolution
    if not (0 <= col < w and 0 <= row < h):
        raise OffMask(f"pixel ({x}, {y}) outside resolution {obs.resolution}")
    if not obs.mask[row, col]:
        raise OffMask(f"pixel ({x}, {y}) has no depth (background)")
    wx = obs.origin[0] + x / obs.scale
    wy = obs.origin[1] + y / obs.scale
    wz = obs.cam_height - obs.depth[row, col]
    return np.array([wx, wy, wz])
