import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stsc.model import ModelConfig, SegNet, save_checkpoint
from stsc.pseudo import PseudoLabelConfig, generate, generate_dir, harden
from stsc.synthetic import ClipConfig, drop_labels, generate_dataset
from stsc.video import IGNORE, load_dataset, save_dataset

CLIP = ClipConfig(height=16, width=16, num_frames=3, background_change_frame=1, seed=0)


def probs_px(*values):
    return np.asarray(values, dtype=float)[:, None, None]


def test_harden_examples():
    assert harden(probs_px(0.6, 0.3, 0.1), PseudoLabelConfig(0.5))[0, 0] == 0
    assert harden(probs_px(0.5, 0.3, 0.2), PseudoLabelConfig(0.5))[0, 0] == IGNORE
    assert harden(probs_px(0.4, 0.4, 0.2), PseudoLabelConfig(0.3))[0, 0] == 0


def test_harden_extremes():
    p = np.random.default_rng(0).dirichlet(np.ones(4), size=(5, 6)).transpose(2, 0, 1)
    assert not np.any(harden(p, PseudoLabelConfig(0.0)) == IGNORE)
    assert np.all(harden(p, PseudoLabelConfig(1.0)) == IGNORE)


def test_threshold_validated():
    with pytest.raises(ValueError):
        PseudoLabelConfig(1.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_coverage_monotone_and_labels_are_argmax(seed, a, b):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(3, 0.5), size=(4, 4)).transpose(2, 0, 1)
    lo, hi = sorted((a, b))
    h_lo, h_hi = harden(p, PseudoLabelConfig(lo)), harden(p, PseudoLabelConfig(hi))
    assert (h_hi != IGNORE).sum() <= (h_lo != IGNORE).sum()
    keep = h_lo != IGNORE
    np.testing.assert_array_equal(h_lo[keep], np.argmax(p, axis=0)[keep])


class OneHotTeacher(SegNet):
    def predict_proba(self, frames):
        p = super().predict_proba(frames)
        return np.eye(p.shape[1])[np.argmax(p, axis=1)].transpose(0, 3, 1, 2)


def test_generate_coverage_extremes():
    clips = [drop_labels(c) for c in generate_dataset(CLIP, 2, seed=1)]
    cfg = ModelConfig(num_classes=4, widths=(4, 4), feature_dim=4, proj_dim=4)
    _, stats = generate([SegNet(cfg, seed=0)], clips, PseudoLabelConfig(1.0))
    assert stats.coverage == 0.0
    out, stats = generate([OneHotTeacher(cfg, seed=0)], clips, PseudoLabelConfig(0.5))
    assert stats.coverage == 1.0
    assert all(c.pseudo and c.labeled.all() for c in out)


def test_generate_dir_roundtrip_and_monotone(tmp_path):
    clips = [drop_labels(c) for c in generate_dataset(CLIP, 2, seed=2)]
    save_dataset(clips, tmp_path / "in")
    teacher = SegNet(ModelConfig(num_classes=4, widths=(4, 4), feature_dim=4, proj_dim=4), seed=1)
    teacher.params["cls.w"] *= 20
    ck = save_checkpoint(teacher, tmp_path / "teacher")
    s5 = generate_dir([ck], tmp_path / "in", tmp_path / "out5", PseudoLabelConfig(0.5))
    s3 = generate_dir([ck], tmp_path / "in", tmp_path / "out3", PseudoLabelConfig(0.3))
    assert s5.coverage <= s3.coverage
    again = generate_dir([ck], tmp_path / "in", tmp_path / "again", PseudoLabelConfig(0.5))
    assert again.to_json() == s5.to_json()
    for cid in ("clip_0000", "clip_0001"):
        for name in ("labels.bin", "frames.bin"):
            assert (tmp_path / "out5" / cid / name).read_bytes() == (tmp_path / "again" / cid / name).read_bytes()
    loaded = load_dataset(tmp_path / "out5")
    assert all(c.pseudo for c in loaded)
    # labels written at input resolution are the teacher argmax where kept
    c = loaded[0]
    probs = teacher.predict_proba(c.frames)
    arg = np.argmax(probs, axis=1).repeat(4, axis=1).repeat(4, axis=2)
    keep = c.labels != IGNORE
    np.testing.assert_array_equal(c.labels[keep], arg[keep])


def test_ensemble_averages_probabilities():
    clips = [drop_labels(c) for c in generate_dataset(CLIP, 1, seed=3)]
    cfg = ModelConfig(num_classes=4, widths=(4, 4), feature_dim=4, proj_dim=4)
    a, b = SegNet(cfg, seed=0), SegNet(cfg, seed=1)
    out, _ = generate([a, b], clips, PseudoLabelConfig(0.0))
    avg = (a.predict_proba(clips[0].frames) + b.predict_proba(clips[0].frames)) / 2
    np.testing.assert_array_equal(out[0].labels[:, ::4, ::4], np.argmax(avg, axis=1))
