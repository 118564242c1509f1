import numpy as np
import pytest

from deformlab import ood_gen, sim_core
from deformlab.ood_gen import OodSpec, generate_cloth_ood, generate_rope_ood, mask_iou
from deformlab.oracle import is_recognizable
from deformlab.recognizer import ClothCornerOrm, RopeSkeletonOrm
from deformlab.scene import render
from deformlab.sim_core import SimConfig


@pytest.fixture(scope="module")
def rope_corpus():
    cfg = SimConfig()
    return [generate_rope_ood(OodSpec("rope", seed), cfg) for seed in range(100)]


@pytest.fixture(scope="module")
def cloth_corpus():
    cfg = SimConfig()
    return [generate_cloth_ood(OodSpec("cloth", seed), cfg) for seed in range(100)]


def test_spec_validation():
    with pytest.raises(ValueError):
        OodSpec("sponge", 0)
    with pytest.raises(ValueError):
        OodSpec("rope", 0, throw_speed_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        OodSpec("rope", 0, throw_height_range=(0.3, 0.1))
    with pytest.raises(ValueError):
        OodSpec("rope", 0, landing_target_jitter=-1.0)


def test_kind_mismatch_rejected(cfg):
    with pytest.raises(ValueError):
        generate_rope_ood(OodSpec("cloth", 0), cfg)
    with pytest.raises(ValueError):
        generate_cloth_ood(OodSpec("rope", 0), cfg)


def test_rope_seed_determinism(cfg):
    a = generate_rope_ood(OodSpec("rope", 0), cfg)
    b = generate_rope_ood(OodSpec("rope", 0), cfg)
    assert np.array_equal(a.positions, b.positions)


def test_cloth_seed_determinism(cfg):
    a = generate_cloth_ood(OodSpec("cloth", 0), cfg)
    b = generate_cloth_ood(OodSpec("cloth", 0), cfg)
    assert np.array_equal(a.positions, b.positions)


def test_seeds_differ(cfg, calib):
    a = render(generate_rope_ood(OodSpec("rope", 0), cfg), calib).mask
    b = render(generate_rope_ood(OodSpec("rope", 1), cfg), calib).mask
    assert mask_iou(a, b) < 0.9


def test_rope_states_pass_invariants(cfg):
    for seed in range(10):
        state = generate_rope_ood(OodSpec("rope", seed), cfg)
        assert sim_core.check_invariants(state, settled=True) == []
        assert abs(sim_core.rope_arc_length(state) - sim_core.ROPE_LENGTH) < 0.025


def test_cloth_states_pass_invariants(cfg):
    for seed in range(10):
        state = generate_cloth_ood(OodSpec("cloth", seed), cfg)
        assert sim_core.check_invariants(state, settled=True) == []


def test_diversity_median_iou(rope_corpus, calib):
    masks = [render(state, calib).mask for state in rope_corpus[:20]]
    ious = [
        mask_iou(masks[i], masks[j]) for i in range(20) for j in range(i + 1, 20)
    ]
    assert float(np.median(ious)) < 0.5


def test_cloth_footprint_coverage_spread(cloth_corpus, calib):
    coverages = []
    for state in cloth_corpus:
        obs = render(state, calib)
        coverages.append(ood_gen.footprint_coverage(state, obs.mask, calib.scale))
    assert min(coverages) <= 0.4
    assert max(coverages) >= 0.95


def test_rope_census_mostly_unrecognizable(rope_corpus, calib):
    orm = RopeSkeletonOrm()
    recognizable = sum(1 for s in rope_corpus if is_recognizable(s, orm, calib))
    # the throw protocol must defeat the recognizer on >= 40% of seeds
    assert recognizable / len(rope_corpus) <= 0.6


def test_cloth_census_mostly_unrecognizable(cloth_corpus, calib):
    orm = ClothCornerOrm()
    recognizable = sum(1 for s in cloth_corpus if is_recognizable(s, orm, calib))
    assert recognizable / len(cloth_corpus) <= 0.6


def test_corpus_invariants_full_sweep(rope_corpus, cloth_corpus):
    for state in rope_corpus + cloth_corpus:
        assert sim_core.check_invariants(state, settled=True) == []


def test_hairpin_preserves_arc_length():
    pos = ood_gen.hairpin_rope_positions(separation=0.02, fold_fraction=0.5)
    length = float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
    assert length == pytest.approx(sim_core.ROPE_LENGTH, rel=0.02)


def test_folded_cloth_keeps_feasible_edges(cfg):
    state = ood_gen.folded_cloth_state(flap_fraction=0.35)
    settled = sim_core.settle(state, cfg)
    assert sim_core.check_invariants(settled, settled=True) == []
