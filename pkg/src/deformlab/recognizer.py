"""Keypoint extraction with explicit geometric assumptions.

Rope: morphological thinning of the mask -> pixel adjacency graph ->
degree classification via ring crossing number. Success requires a
single skeleton component shaped like a simple open curve of roughly
the rope's length; the two degree-1 pixels are the endpoints.

Cloth: largest mask contour -> polygon simplification -> corner
candidates at curvature maxima. Success requires a near-convex,
roughly square-perimeter region with 4 +/- 1 corners; the keypoints are
the adjacent corner pair joined by the longest contour edge.

Every failure names exactly one violated assumption from the exported
lists, which is the contract exploration primitives are designed
against. Extraction can also succeed while being geometrically wrong
(fold apexes read as endpoints, fold creases as corners); catching
those is the judge's job, not ours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from skimage.morphology import skeletonize

from .pgm import encode_pgm
from .scene import Observation
from .sim_core import CLOTH_SIZE, ROPE_LENGTH

ROPE_NOMINAL_PX = ROPE_LENGTH * 1500.0
CLOTH_NOMINAL_PERIMETER_PX = 4.0 * CLOTH_SIZE * 1500.0

ROPE_PATH_RANGE = (0.60, 1.40)
CLOTH_AREA_RATIO_MIN = 0.85
CLOTH_PERIMETER_RANGE = (0.80, 1.30)
CLOTH_CORNER_RANGE = (3, 5)
CORNER_MAX_ANGLE_DEG = 150.0
APPROX_EPS_FRAC = 0.02

ROPE_ASSUMPTIONS = ("single-component", "two-endpoints", "no-branches", "path-length")
CLOTH_ASSUMPTIONS = ("area-ratio", "perimeter", "corner-count")

MARKER_RADIUS_PX = 8
OVERLAY_GRAY = 128
BANNER_GRAY = 64
BANNER_ROWS = 20


class EmptyMask(ValueError):
    """No object pixels: the object is out of frame."""


@dataclass(frozen=True)
class Representation:
    kind: str  # "rope" | "cloth"
    status: str  # "extracted" | "extraction_failed"
    keypoints: list[tuple[int, int]] = field(default_factory=list)  # (x, y) pixels
    guideline: list[tuple[int, int]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    failure_reason: str | None = None

    @property
    def extracted(self) -> bool:
        return self.status == "extracted"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "status": self.status,
            "keypoints": [list(k) for k in self.keypoints],
            "guideline": [list(k) for k in self.guideline],
            "diagnostics": self.diagnostics,
            "failure_reason": self.failure_reason,
        }

    @staticmethod
    def from_dict(d: dict) -> "Representation":
        return Representation(
            kind=d["kind"],
            status=d["status"],
            keypoints=[tuple(k) for k in d["keypoints"]],
            guideline=[tuple(k) for k in d["guideline"]],
            diagnostics=d["diagnostics"],
            failure_reason=d["failure_reason"],
        )


@dataclass(frozen=True)
class OverlayImage:
    image: np.ndarray  # (H, W) uint8
    keypoints: list[tuple[int, int]]
    guideline: list[tuple[int, int]]

    def to_pgm(self) -> bytes:
        return encode_pgm(self.image, 255)


# ring order of the 8 neighbours: (drow, dcol), circular
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _crossing_numbers(skel: np.ndarray) -> np.ndarray:
    """Per-pixel count of 0->1 transitions around the 8-neighbour ring."""
    padded = np.pad(skel, 1).astype(np.uint8)
    h, w = skel.shape
    ring = np.stack(
        [padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] for dr, dc in _RING], axis=0
    )
    nxt = np.roll(ring, -1, axis=0)
    transitions = ((ring == 0) & (nxt == 1)).sum(axis=0)
    return np.where(skel, transitions, 0)


def _trace_path_length(skel: np.ndarray, start: tuple[int, int]) -> tuple[float, int]:
    """Walk the skeleton from an endpoint, preferring orthogonal steps.

    Returns (arc length in px, pixels visited).
    """
    visited = np.zeros_like(skel, dtype=bool)
    h, w = skel.shape
    r, c = start
    visited[r, c] = True
    length = 0.0
    count = 1
    while True:
        best = None
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and skel[rr, cc] and not visited[rr, cc]:
                best = (rr, cc, math.hypot(dr, dc))
                break
        if best is None:
            return length, count
        r, c, d = best
        visited[r, c] = True
        length += d
        count += 1


def recognize_rope(obs: Observation) -> Representation:
    mask = obs.mask
    if not mask.any():
        raise EmptyMask("no object pixels in observation")

    skel = skeletonize(mask)
    n_components, _ = cv2.connectedComponents(skel.astype(np.uint8), connectivity=8)
    n_components -= 1  # background label

    crossing = _crossing_numbers(skel)
    end_rows, end_cols = np.nonzero(crossing == 1)
    endpoints = sorted(zip(end_rows.tolist(), end_cols.tolist()))
    branch_count = int((crossing >= 3).sum())
    loop = n_components >= 1 and len(endpoints) == 0

    path_length = 0.0
    path_ratio = 0.0
    if endpoints:
        path_length, _ = _trace_path_length(skel, endpoints[0])
        path_ratio = path_length / ROPE_NOMINAL_PX

    keypoints = [(int(c), int(r)) for r, c in endpoints[:2]]
    separation = 0.0
    if len(keypoints) == 2:
        separation = math.dist(keypoints[0], keypoints[1])

    diagnostics = {
        "skeleton_components": int(n_components),
        "skeleton_endpoints": len(endpoints),
        "skeleton_branches": branch_count,
        "loop": bool(loop),
        "path_length_px": float(path_length),
        "path_length_ratio": float(path_ratio),
        "keypoint_separation_px": float(separation),
        "mask_area_px": int(mask.sum()),
    }

    def fail(reason: str) -> Representation:
        return Representation(
            kind="rope", status="extraction_failed", diagnostics=diagnostics, failure_reason=reason
        )

    if n_components != 1:
        return fail("single-component")
    if len(endpoints) != 2:
        return fail("two-endpoints")
    if branch_count != 0:
        return fail("no-branches")
    if not (ROPE_PATH_RANGE[0] <= path_ratio <= ROPE_PATH_RANGE[1]):
        return fail("path-length")

    return Representation(
        kind="rope", status="extracted", keypoints=keypoints, diagnostics=diagnostics
    )


def _interior_angle(prev_pt, pt, next_pt) -> float:
    """Angle in degrees at ``pt`` between the two incident polygon edges."""
    v1 = np.asarray(prev_pt, dtype=float) - np.asarray(pt, dtype=float)
    v2 = np.asarray(next_pt, dtype=float) - np.asarray(pt, dtype=float)
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 < 1e-9 or n2 < 1e-9:
        return 180.0
    cosang = np.clip(np.dot(v1, v2) / (n1 * n2), -1.0, 1.0)
    return math.degrees(math.acos(cosang))


def recognize_cloth(obs: Observation) -> Representation:
    mask = obs.mask
    if not mask.any():
        raise EmptyMask("no object pixels in observation")

    contours, _ = cv2.findContours(
        obs.mask_u8(), cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE
    )
    contour = max(contours, key=cv2.contourArea)
    area = cv2.contourArea(contour)
    hull = cv2.convexHull(contour)
    hull_area = cv2.contourArea(hull)
    area_ratio = float(area / hull_area) if hull_area > 0 else 0.0
    perimeter = cv2.arcLength(contour, True)
    perimeter_ratio = perimeter / CLOTH_NOMINAL_PERIMETER_PX

    approx = cv2.approxPolyDP(contour, APPROX_EPS_FRAC * perimeter, True).reshape(-1, 2)
    n_vertices = len(approx)
    angles = []
    for i in range(n_vertices):
        angles.append(
            _interior_angle(approx[(i - 1) % n_vertices], approx[i], approx[(i + 1) % n_vertices])
        )
    corner_idx = [i for i in range(n_vertices) if angles[i] <= CORNER_MAX_ANGLE_DEG]

    diagnostics = {
        "contour_area_px": float(area),
        "hull_area_px": float(hull_area),
        "area_ratio": area_ratio,
        "perimeter_px": float(perimeter),
        "perimeter_ratio": float(perimeter_ratio),
        "polygon_vertices": int(n_vertices),
        "corner_count": len(corner_idx),
        "corner_angles_deg": [float(angles[i]) for i in corner_idx],
        "mask_area_px": int(mask.sum()),
    }

    def fail(reason: str) -> Representation:
        return Representation(
            kind="cloth", status="extraction_failed", diagnostics=diagnostics, failure_reason=reason
        )

    if area_ratio < CLOTH_AREA_RATIO_MIN:
        return fail("area-ratio")
    if not (CLOTH_PERIMETER_RANGE[0] <= perimeter_ratio <= CLOTH_PERIMETER_RANGE[1]):
        return fail("perimeter")
    if not (CLOTH_CORNER_RANGE[0] <= len(corner_idx) <= CLOTH_CORNER_RANGE[1]):
        return fail("corner-count")

    # adjacent corner pair with the longest connecting chord; ties broken
    # by the lowest (row, col) endpoint for determinism
    best_pair = None
    best_key = None
    k = len(corner_idx)
    for j in range(k):
        a = approx[corner_idx[j]]
        b = approx[corner_idx[(j + 1) % k]]
        d = float(math.dist(a, b))
        lowest = min((int(a[1]), int(a[0])), (int(b[1]), int(b[0])))
        key = (-d, lowest)
        if best_key is None or key < best_key:
            best_key = key
            best_pair = (j, (j + 1) % k)

    ja, jb = best_pair
    pa = (int(approx[corner_idx[ja]][0]), int(approx[corner_idx[ja]][1]))
    pb = (int(approx[corner_idx[jb]][0]), int(approx[corner_idx[jb]][1]))
    diagnostics["pair_angles_deg"] = [float(angles[corner_idx[ja]]), float(angles[corner_idx[jb]])]
    diagnostics["pair_edge_px"] = float(math.dist(pa, pb))

    return Representation(
        kind="cloth",
        status="extracted",
        keypoints=[pa, pb],
        guideline=[pa, pb],
        diagnostics=diagnostics,
    )


def render_overlay(obs: Observation, rep: Representation) -> OverlayImage:
    img = obs.mask_u8()
    if not rep.extracted:
        img[:BANNER_ROWS, :] = BANNER_GRAY
        return OverlayImage(image=img, keypoints=[], guideline=[])
    if len(rep.guideline) >= 2:
        cv2.line(img, rep.guideline[0], rep.guideline[1], OVERLAY_GRAY, 2)
    for kp in rep.keypoints:
        cv2.circle(img, kp, MARKER_RADIUS_PX, OVERLAY_GRAY, 1)
    return OverlayImage(image=img, keypoints=list(rep.keypoints), guideline=list(rep.guideline))


class RopeSkeletonOrm:
    """Skeleton-graph endpoint extractor; the default rope ORM."""

    kind = "rope"
    assumptions = ROPE_ASSUMPTIONS

    def __call__(self, obs: Observation) -> Representation:
        return recognize_rope(obs)


class ClothCornerOrm:
    """Contour-corner extractor; the default cloth ORM."""

    kind = "cloth"
    assumptions = CLOTH_ASSUMPTIONS

    def __call__(self, obs: Observation) -> Representation:
        return recognize_cloth(obs)


ORM_REGISTRY = {
    "rope_skeleton": RopeSkeletonOrm,
    "cloth_corners": ClothCornerOrm,
}


def resolve_orm(name: str):
    """Look up a registered ORM, or import a ``module:Class`` plugin path."""
    if name in ORM_REGISTRY:
        return ORM_REGISTRY[name]()
    if ":" in name:
        import importlib

        mod_name, cls_name = name.split(":", 1)
        return getattr(importlib.import_module(mod_name), cls_name)()
    raise KeyError(f"unknown ORM {name!r}; registered: {sorted(ORM_REGISTRY)}")
