"""Unit tests for the linear SVM ensemble, metrics, and LOSO protocols."""

import numpy as np
import pytest

import oracles
from melbp import (
    LabeledFeature,
    ProtocolError,
    composite_evaluate,
    compute_metrics,
    loso_evaluate,
    train_linear_svm,
)


def features(rows):
    """rows: (vector, subject, label) triples."""
    return [LabeledFeature(np.asarray(v, dtype=float), s, l, clip_id=f"c{i}")
            for i, (v, s, l) in enumerate(rows)]


def separable_set(rng, n_subjects=8, n_classes=3, reps=3, spread=0.4, dim=4):
    out = []
    for si in range(n_subjects):
        for k in range(n_classes):
            for _ in range(reps):
                v = rng.normal(size=dim) * spread
                v[k] += 4.0
                out.append((v, f"s{si}", f"class{k}"))
    return features(out)


def brute_force_max_margin(X, y):
    """Exhaustive search over unit normals and offsets for the separator
    with the largest minimum margin.  Independent of any SVM solver."""
    best, best_margin = None, -1.0
    for theta in np.linspace(0, np.pi, 721):
        w = np.array([np.cos(theta), np.sin(theta)])
        proj = X @ w
        for b in np.linspace(-8, 8, 1601):
            signed = proj + b
            if np.all(np.sign(signed) == y):
                margin = np.abs(signed).min()
                if margin > best_margin:
                    best, best_margin = (w, b), margin
    return best


class TestTrainLinearSvm:
    def test_separable_matches_margin_oracle(self):
        X = np.array([[0.0, 0], [1, 0], [0, 1], [3, 3], [4, 3], [3, 4]])
        y = np.array([-1, -1, -1, 1, 1, 1])
        samples = features([(x, f"s{i}", "B" if t > 0 else "A")
                            for i, (x, t) in enumerate(zip(X, y))])
        model = train_linear_svm(samples, c=1e6)
        assert model.predict(X) == ["A"] * 3 + ["B"] * 3

        w, b = brute_force_max_margin(X, y)
        probes = np.array([[px, py] for px in np.linspace(-1, 5, 13)
                           for py in np.linspace(-1, 5, 13)])
        # compare signs away from the boundary (beyond the oracle grid error)
        clear = np.abs(probes @ w + b) > 0.25
        oracle_labels = np.where((probes @ w + b) > 0, "B", "A")
        got = np.array(model.predict(probes))
        assert np.array_equal(got[clear], oracle_labels[clear])

    def test_duplicated_points_same_decision(self, rng):
        X = np.vstack([rng.normal(size=(6, 2)) - 2, rng.normal(size=(6, 2)) + 2])
        labels = ["A"] * 6 + ["B"] * 6
        base = features([(x, f"s{i}", l) for i, (x, l) in enumerate(zip(X, labels))])
        doubled = base + features([(x, f"t{i}", l) for i, (x, l) in enumerate(zip(X, labels))])
        m1 = train_linear_svm(base, c=100.0)
        m2 = train_linear_svm(doubled, c=100.0)
        probes = rng.normal(size=(40, 2)) * 3
        np.testing.assert_allclose(
            m1.pair_decisions(probes), m2.pair_decisions(probes), atol=1e-4)

    def test_vanishing_penalty_shrinks_decisions(self, rng):
        rows = []
        for k in range(3):
            for i in range(4):
                rows.append((rng.normal(size=3) + k, f"s{i}", f"class{k}"))
        samples = features(rows)
        probes = rng.normal(size=(20, 3)) * 2
        small = np.abs(train_linear_svm(samples, c=1e-9).pair_decisions(probes)).max()
        large = np.abs(train_linear_svm(samples, c=1.0).pair_decisions(probes)).max()
        assert small < 1e-3
        assert small < large / 100

    def test_exact_ties_default_to_first_class(self):
        """In the zero-decision limit the vote/tie-break rule picks the
        smallest class index."""
        from melbp import LinearSvmModel
        model = LinearSvmModel(
            classes=("a", "b", "c"),
            pairs=((0, 1), (0, 2), (1, 2)),
            weights=[np.zeros(2)] * 3,
            biases=[0.0] * 3,
            penalty=1e-12,
        )
        assert model.predict(np.ones((4, 2))) == ["a"] * 4

    def test_single_class_rejected(self):
        with pytest.raises(ProtocolError):
            train_linear_svm(features([([0, 0], "a", "x"), ([1, 1], "b", "x")]), 1.0)

    def test_deterministic(self, rng):
        samples = separable_set(rng, n_subjects=3)
        probes = rng.normal(size=(10, 4))
        a = train_linear_svm(samples, 10.0)
        b = train_linear_svm(list(samples), 10.0)
        assert np.array_equal(a.pair_decisions(probes), b.pair_decisions(probes))


class TestComputeMetrics:
    def test_all_correct(self):
        m = compute_metrics(["a", "b", "a"], ["a", "b", "a"], ["s1", "s1", "s2"])
        assert m.mean_accuracy == m.f1_macro == m.f1_weighted == m.uar == 1.0

    def test_constant_predictor_uar(self):
        truths = ["a"] * 6 + ["b"] * 3 + ["c"] * 1
        preds = ["a"] * 10
        m = compute_metrics(preds, truths, ["s"] * 10)
        assert np.isclose(m.uar, 1.0 / 3.0)

    def test_quoted_f1_example(self):
        truths = ["A", "A", "B", "B"]
        preds = ["A", "A", "A", "A"]
        m = compute_metrics(preds, truths, ["s1", "s1", "s2", "s2"])
        assert np.isclose(m.uar, 0.5)
        assert np.isclose(m.f1_macro, 1.0 / 3.0)  # (2*0.5*1/1.5 + 0) / 2

    def test_subject_averaged_accuracy(self):
        # subject u: 2/2, subject v: 2/4 -> mean (1.0 + 0.5)/2, pooled 4/6
        truths = ["a", "a", "a", "a", "b", "b"]
        preds = ["a", "a", "a", "a", "a", "a"]
        subjects = ["u", "u", "v", "v", "v", "v"]
        m = compute_metrics(preds, truths, subjects)
        assert np.isclose(m.mean_accuracy, 0.75)
        assert np.isclose(m.pooled_accuracy, 4 / 6)

    def test_identities_against_hand_formulas(self, rng):
        classes = ["a", "b", "c", "d"]
        for _ in range(50):
            n = int(rng.integers(5, 60))
            truths = [classes[i] for i in rng.integers(0, 4, n)]
            preds = [classes[i] for i in rng.integers(0, 4, n)]
            subjects = [f"s{i}" for i in rng.integers(0, 5, n)]
            m = compute_metrics(preds, truths, subjects, class_set=classes)
            ref = oracles.hand_metrics(preds, truths, subjects, classes)
            for key, val in ref.items():
                assert np.isclose(getattr(m, key), val), key
            # structural identities
            assert m.confusion.sum() == n
            row_sums = m.confusion.sum(axis=1)
            for ci, c in enumerate(classes):
                assert row_sums[ci] == truths.count(c)
            assert np.isclose(np.trace(m.confusion) / n, m.pooled_accuracy)

    def test_empty_rejected(self):
        with pytest.raises(ProtocolError):
            compute_metrics([], [], [])


class TestLosoEvaluate:
    def test_perfectly_separable(self, rng):
        data = separable_set(rng)
        report = loso_evaluate(data, c_grid=[0.1, 1.0, 10.0])
        m = report.metrics
        assert m.mean_accuracy == 1.0 and m.f1_macro == 1.0 and m.uar == 1.0
        assert len(report.folds) == 8

    def test_accuracy_and_reproducibility(self, rng):
        data = separable_set(rng, spread=1.5)
        r1 = loso_evaluate(data, c_grid=[0.01, 1.0, 100.0])
        r2 = loso_evaluate(list(data), c_grid=[0.01, 1.0, 100.0])
        assert r1.metrics.mean_accuracy >= 0.9
        assert r1.to_json() == r2.to_json()

    def test_ties_prefer_smallest_penalty(self, rng):
        data = separable_set(rng)
        report = loso_evaluate(data, c_grid=[4.0, 0.5, 2.0])
        for fold in report.folds:
            accs = fold.inner_accuracy
            best = max(accs.values())
            smallest_best = min(c for c, a in accs.items() if a == best)
            assert fold.chosen_c == float(smallest_best)

    def test_unseen_class_subject_still_scored(self, rng):
        data = separable_set(rng, n_subjects=3)
        # extra subject with a label nobody else has
        data += features([(np.full(4, 9.0), "s_odd", "mystery")])
        report = loso_evaluate(data, c_grid=[1.0])
        assert len(report.folds) == 4
        odd = [f for f in report.folds if f.subject == "s_odd"][0]
        assert odd.truths == ["mystery"] and odd.predictions[0] != "mystery"

    def test_too_few_subjects(self, rng):
        data = features([(rng.normal(size=3), "only", "a"),
                         (rng.normal(size=3), "only", "b")])
        with pytest.raises(ProtocolError):
            loso_evaluate(data, c_grid=[1.0])

    def test_no_leakage_recorded_by_hooks(self, rng):
        data = separable_set(rng, n_subjects=5)
        seen = []
        loso_evaluate(data, c_grid=[0.5, 5.0],
                      hooks=lambda stage, fold, clips: seen.append((stage, fold, set(clips))))
        by_clip_subject = {s.clip_id: s.subject_id for s in data}
        assert {stage for stage, _, _ in seen} == {"c_selection", "svm_train"}
        for stage, fold, clips in seen:
            fold_clips = {c for c, s in by_clip_subject.items() if s == fold}
            assert not clips & fold_clips, f"{stage} saw test clips of fold {fold}"


class TestCompositeEvaluate:
    def test_fold_count_over_merged_subjects(self, rng):
        d1 = [LabeledFeature(rng.normal(size=3) + k, "s0", f"l{k}", "dsA", f"a{k}{i}")
              for k in range(2) for i in range(3)]
        d2 = [LabeledFeature(rng.normal(size=3) + k, "s0", f"l{k}", "dsB", f"b{k}{i}")
              for k in range(2) for i in range(3)]
        ident = {"l0": "l0", "l1": "l1"}
        report = composite_evaluate([(d1, ident), (d2, ident)], c_grid=[1.0])
        assert len(report.folds) == 2  # one subject per dataset, namespaced
        assert report.per_source is not None and set(report.per_source) == {"dsA", "dsB"}

    def test_identity_map_single_dataset_degenerates_to_loso(self, rng):
        data = separable_set(rng, n_subjects=4)
        for s in data:
            s.dataset_id = "one"
        plain = loso_evaluate(data, c_grid=[1.0, 10.0])
        comp = composite_evaluate([(data, {f"class{k}": f"class{k}" for k in range(3)})],
                                  c_grid=[1.0, 10.0])
        assert comp.metrics.to_dict() == plain.metrics.to_dict()
        for fp, fc in zip(plain.folds, comp.folds):
            assert fp.predictions == fc.predictions
            assert fp.truths == fc.truths
            assert fp.chosen_c == fc.chosen_c

    def test_three_way_grouping(self, rng):
        # 5 raw classes mapped onto 3 groups
        group = {"happy": "positive", "surprise": "surprise", "disgust": "negative",
                 "fear": "negative", "sad": "negative"}
        rows = []
        centers = {"positive": 0.0, "surprise": 4.0, "negative": 8.0}
        for si in range(4):
            for label, g in group.items():
                rows.append(LabeledFeature(rng.normal(size=3) + centers[g],
                                           f"s{si}", label, "dsA" if si < 2 else "dsB",
                                           f"{si}{label}"))
        report = composite_evaluate([(rows, group)], c_grid=[1.0])
        assert report.metrics.confusion.shape == (3, 3)
        assert set(report.metrics.classes) == {"negative", "positive", "surprise"}
        total = 0
        for src, m in report.per_source.items():
            src_count = sum(1 for s in rows if s.dataset_id == src)
            assert m.confusion.sum() == src_count
            total += src_count
        assert total == len(rows)

    def test_unmapped_label_rejected(self, rng):
        rows = [LabeledFeature(rng.normal(size=2), "s", "weird", "ds", "c0")]
        with pytest.raises(Exception, match="class map"):
            composite_evaluate([(rows, {"other": "x"})], c_grid=[1.0])
