import numpy as np
import pytest

from deformlab import ood_gen, sim_core
from deformlab.oracle import EPSILON_PX, GroundTruth, ground_truth_of, is_recognizable, is_valid
from deformlab.recognizer import ClothCornerOrm, Representation, RopeSkeletonOrm
from deformlab.scene import project


def rope_rep(kp0, kp1):
    return Representation(kind="rope", status="extracted", keypoints=[kp0, kp1])


def test_rope_ground_truth_is_end_particle_projection(rope_state, calib):
    gt = ground_truth_of(rope_state, calib)
    expected = project(rope_state.positions[[0, 49]], calib)
    assert np.allclose(gt.gt_keypoints, expected)
    assert gt.kind == "rope"
    assert gt.epsilon == EPSILON_PX


def test_cloth_ground_truth_is_grid_corner_projection(cloth_state, calib):
    gt = ground_truth_of(cloth_state, calib)
    corners = sim_core.cloth_corner_indices(cloth_state.topology)
    expected = project(cloth_state.positions[list(corners)], calib)
    assert np.allclose(gt.gt_keypoints, expected)
    assert gt.gt_keypoints.shape == (4, 2)


def test_folded_cloth_still_emits_four_corners(calib):
    folded = ood_gen.folded_cloth_state(flap_fraction=0.5)
    gt = ground_truth_of(folded, calib)
    assert gt.gt_keypoints.shape == (4, 2)


def test_exact_match_is_valid(rope_state, calib):
    gt = ground_truth_of(rope_state, calib)
    kp = [tuple(map(round, p)) for p in gt.gt_keypoints]
    assert is_valid(rope_rep(kp[0], kp[1]), gt)


@pytest.mark.parametrize("offset,expected", [(29, True), (30, False), (31, False)])
def test_epsilon_boundary_strict(offset, expected):
    # strict inequality: a keypoint exactly at 30 px is invalid
    gt = GroundTruth(kind="rope", gt_keypoints=np.array([[100.0, 100.0], [700.0, 100.0]]))
    rep = rope_rep((100 + offset, 100), (700, 100))
    assert is_valid(rep, gt) is expected


def test_swapped_assignment_is_valid():
    gt = GroundTruth(kind="rope", gt_keypoints=np.array([[100.0, 100.0], [700.0, 100.0]]))
    assert is_valid(rope_rep((700, 100), (100, 100)), gt)


def test_extraction_failure_is_never_valid(rope_state, calib):
    gt = ground_truth_of(rope_state, calib)
    failed = Representation(kind="rope", status="extraction_failed", failure_reason="path-length")
    assert not is_valid(failed, gt)


def test_epsilon_monotonicity():
    rng = np.random.default_rng(4)
    for _ in range(50):
        gt_pts = rng.uniform(0, 900, (2, 2))
        kp = [tuple(p + rng.normal(0, 20, 2)) for p in gt_pts]
        for eps in (5.0, 15.0, 45.0):
            small = is_valid(rope_rep(*kp), GroundTruth("rope", gt_pts, eps))
            large = is_valid(rope_rep(*kp), GroundTruth("rope", gt_pts, eps * 2))
            assert not small or large


def test_cloth_adjacent_pair_accepted_any_edge(cloth_state, calib):
    gt = ground_truth_of(cloth_state, calib)
    corners = [tuple(map(round, p)) for p in gt.gt_keypoints]
    for i in range(4):
        rep = Representation(
            kind="cloth", status="extracted", keypoints=[corners[i], corners[(i + 1) % 4]]
        )
        assert is_valid(rep, gt)


def test_cloth_diagonal_pair_rejected(cloth_state, calib):
    gt = ground_truth_of(cloth_state, calib)
    corners = [tuple(map(round, p)) for p in gt.gt_keypoints]
    rep = Representation(kind="cloth", status="extracted", keypoints=[corners[0], corners[2]])
    assert not is_valid(rep, gt)


def test_is_recognizable_chain(rope_state, cloth_state, calib):
    assert is_recognizable(rope_state, RopeSkeletonOrm(), calib)
    assert is_recognizable(cloth_state, ClothCornerOrm(), calib)
    far = sim_core.ObjectState(
        rope_state.positions + np.array([5.0, 0.0, 0.0]),
        rope_state.velocities,
        rope_state.topology,
    )
    assert not is_recognizable(far, RopeSkeletonOrm(), calib)


def test_coincident_fold_not_recognizable(calib):
    folded = ood_gen.hairpin_rope_state(separation=0.001, fold_fraction=0.5)
    assert not is_recognizable(folded, RopeSkeletonOrm(), calib)
