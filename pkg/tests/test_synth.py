"""Unit tests for the synthetic clip generator."""

import numpy as np

from melbp import load_manifest, render_clip, synth_generate
from melbp.synth import class_region


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        m1 = synth_generate(tmp_path / "a", n_classes=2, n_subjects=2,
                            clips_per_subject=2, size=(24, 24), length=6, seed=5)
        m2 = synth_generate(tmp_path / "b", n_classes=2, n_subjects=2,
                            clips_per_subject=2, size=(24, 24), length=6, seed=5)
        files1 = sorted((tmp_path / "a").rglob("*.png"))
        files2 = sorted((tmp_path / "b").rglob("*.png"))
        assert len(files1) == len(files2) == 2 * 2 * 6
        for f1, f2 in zip(files1, files2):
            assert f1.read_bytes() == f2.read_bytes()
        assert m1.read_text() == m2.read_text()

    def test_different_seed_differs(self, tmp_path):
        synth_generate(tmp_path / "a", n_subjects=1, clips_per_subject=1,
                       size=(24, 24), length=4, seed=1)
        synth_generate(tmp_path / "b", n_subjects=1, clips_per_subject=1,
                       size=(24, 24), length=4, seed=2)
        f1 = sorted((tmp_path / "a").rglob("*.png"))[0]
        f2 = sorted((tmp_path / "b").rglob("*.png"))[0]
        assert f1.read_bytes() != f2.read_bytes()


class TestClassIsolation:
    def test_classes_differ_only_inside_motion_regions(self):
        w = h = 48
        a = render_clip(seed=0, subject=1, clip_index=0, class_id=0,
                        width=w, height=h, length=8)
        b = render_clip(seed=0, subject=1, clip_index=0, class_id=1,
                        width=w, height=h, length=8)
        assert a.shape == b.shape == (8, h, w)
        outside = np.ones((h, w), dtype=bool)
        for cid in (0, 1):
            rows, cols = class_region(cid, w, h)
            outside[rows, cols] = False
        assert np.array_equal(a[:, outside], b[:, outside])
        assert np.any(a != b)  # the motion itself does differ

    def test_first_frame_is_rest_state(self):
        a = render_clip(seed=0, subject=2, clip_index=1, class_id=0,
                        width=32, height=32, length=6)
        b = render_clip(seed=0, subject=2, clip_index=1, class_id=2,
                        width=32, height=32, length=6)
        # envelope starts at zero, so frame 0 shows the shared base texture
        assert np.array_equal(a[0], b[0])


class TestManifestLayout:
    def test_counts_and_labels(self, tmp_path):
        path = synth_generate(tmp_path, n_classes=3, n_subjects=4,
                              clips_per_subject=4, size=(20, 20), length=5, seed=9)
        manifest = load_manifest(path)
        assert len(manifest.entries) == 16
        assert manifest.class_names == ["class0", "class1", "class2"]
        subjects = {e.subject_id for e in manifest.entries}
        assert len(subjects) == 4
        for e in manifest.entries:
            assert e.label in manifest.class_names
        # classes cycle within each subject
        by_subject = {}
        for e in manifest.entries:
            by_subject.setdefault(e.subject_id, []).append(e.label)
        for labels in by_subject.values():
            assert labels == ["class0", "class1", "class2", "class0"]
