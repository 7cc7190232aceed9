"""Linear max-margin classification and subject-disjoint evaluation.

The classifier is a one-vs-one ensemble of binary soft-margin linear SVMs.
Each pairwise problem is solved by libsvm (via scikit-learn) at a fixed
tolerance; the separating hyperplanes are extracted so prediction is a pure
numpy computation with an explicit, documented aggregation rule: majority
vote, ties broken by the summed signed decision values toward each class,
remaining ties by the smallest class index.

``loso_evaluate`` runs leave-one-subject-out cross-validation with a nested
penalty search: for each held-out subject, an inner leave-one-subject-out
pass over the remaining subjects picks the penalty with the best inner mean
accuracy (ties go to the smallest penalty), the model is retrained on the
full outer training set, and predictions are pooled into the report.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.svm import SVC

from .errors import ConfigurationError, ProtocolError

SOLVER_TOL = 1e-6
SOLVER_MAX_ITER = 1_000_000

DEFAULT_C_GRID = tuple(float(2.0 ** e) for e in range(-5, 17, 2))

# hooks(stage, fold_subject, clip_ids) lets callers audit which clips each
# stage consumed; stages: "wpca_fit" (emitted by pipeline transforms),
# "c_selection", "svm_train".
Hooks = Callable[[str, str, tuple], None]


@dataclass(eq=False)
class LabeledFeature:
    """One clip's feature vector plus evaluation metadata."""

    vector: np.ndarray | None
    subject_id: str
    label: str
    dataset_id: str = ""
    clip_id: str = ""


@dataclass
class LinearSvmModel:
    """One-vs-one ensemble of binary linear separators."""

    classes: tuple
    pairs: tuple[tuple[int, int], ...]
    weights: list[np.ndarray]
    biases: list[float]
    penalty: float
    warnings: list[str] = field(default_factory=list)

    def pair_decisions(self, X: np.ndarray) -> np.ndarray:
        """(n, n_pairs) signed margins; positive favors the later class of the pair."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty((X.shape[0], len(self.pairs)))
        for col, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[:, col] = X @ w + b
        return out

    def predict(self, X: np.ndarray) -> list:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n, k = X.shape[0], len(self.classes)
        votes = np.zeros((n, k), dtype=np.int64)
        sums = np.zeros((n, k))
        decisions = self.pair_decisions(X)
        for col, (i, j) in enumerate(self.pairs):
            d = decisions[:, col]
            pos = d > 0
            votes[pos, j] += 1
            votes[~pos, i] += 1
            sums[:, j] += d
            sums[:, i] -= d
        out = []
        for r in range(n):
            cand = np.flatnonzero(votes[r] == votes[r].max())
            if len(cand) > 1:
                s = sums[r, cand]
                cand = cand[s == s.max()]
            out.append(self.classes[cand[0]])
        return out


def train_linear_svm(train: Sequence[LabeledFeature], c: float) -> LinearSvmModel:
    """Fit the one-vs-one linear SVM ensemble with penalty ``c``.

    Deterministic for a fixed sample order; pairwise solves that hit the
    iteration cap are recorded in ``model.warnings`` rather than silently
    accepted.
    """
    if c <= 0:
        raise ConfigurationError(f"penalty must be positive, got {c}")
    classes = tuple(sorted({s.label for s in train}))
    if len(classes) < 2:
        raise ProtocolError(f"training set holds a single class: {classes}")
    X = np.stack([np.asarray(s.vector, dtype=np.float64) for s in train])
    y = np.array([classes.index(s.label) for s in train])

    pairs, weights, biases, notes = [], [], [], []
    for i in range(len(classes)):
        for j in range(i + 1, len(classes)):
            mask = (y == i) | (y == j)
            target = (y[mask] == j).astype(np.int64)
            svc = SVC(kernel="linear", C=c, tol=SOLVER_TOL, max_iter=SOLVER_MAX_ITER)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                svc.fit(X[mask], target)
            if svc.fit_status_ != 0:
                notes.append(
                    f"pair ({classes[i]}, {classes[j]}) c={c}: solver hit iteration cap"
                )
            pairs.append((i, j))
            # svc classes_ == [0, 1]; positive decision favors target 1 == class j
            weights.append(svc.coef_.ravel().copy())
            biases.append(float(svc.intercept_[0]))
    return LinearSvmModel(
        classes=classes,
        pairs=tuple(pairs),
        weights=weights,
        biases=biases,
        penalty=c,
        warnings=notes,
    )


@dataclass
class MetricBundle:
    """Evaluation metrics plus the confusion matrix they derive from."""

    mean_accuracy: float
    pooled_accuracy: float
    f1_macro: float
    f1_weighted: float
    uar: float
    confusion: np.ndarray
    classes: tuple

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "pooled_accuracy": self.pooled_accuracy,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "uar": self.uar,
            "confusion": self.confusion.tolist(),
            "classes": list(self.classes),
        }


def compute_metrics(predictions: Sequence, truths: Sequence, subjects: Sequence,
                    class_set: Sequence | None = None) -> MetricBundle:
    """Metric bundle over pooled predictions.

    ``mean_accuracy`` averages per-subject accuracies (not pooled), the F1
    scores use per-class precision/recall with precision 0 when a class is
    never predicted, and UAR is the mean per-class recall.  Macro averages
    run over classes that actually occur in the truth; classes with no true
    samples carry no weight.
    """
    predictions = list(predictions)
    truths = list(truths)
    subjects = list(subjects)
    if not predictions:
        raise ProtocolError("cannot compute metrics on empty input")
    if not len(predictions) == len(truths) == len(subjects):
        raise ProtocolError("predictions, truths, and subjects must have equal length")

    classes = tuple(class_set) if class_set is not None else tuple(sorted(set(truths)))
    idx = {c: i for i, c in enumerate(classes)}
    n_cls = len(classes)

    conf = np.zeros((n_cls, n_cls), dtype=np.int64)
    for p, t in zip(predictions, truths):
        if t not in idx or p not in idx:
            raise ProtocolError(f"label outside the declared class set: truth={t} pred={p}")
        conf[idx[t], idx[p]] += 1

    per_subject = {}
    for p, t, s in zip(predictions, truths, subjects):
        hits, total = per_subject.get(s, (0, 0))
        per_subject[s] = (hits + (p == t), total + 1)
    mean_acc = float(np.mean([h / t for h, t in per_subject.values()]))

    pooled = float(np.trace(conf) / conf.sum())

    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    tp = np.diag(conf).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros(n_cls), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(n_cls, dtype=np.float64), where=support > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(n_cls), where=pr > 0)

    present = support > 0
    f1_macro = float(f1[present].mean())
    f1_weighted = float((f1[present] * support[present]).sum() / support.sum())
    uar = float(recall[present].mean())

    return MetricBundle(
        mean_accuracy=mean_acc,
        pooled_accuracy=pooled,
        f1_macro=f1_macro,
        f1_weighted=f1_weighted,
        uar=uar,
        confusion=conf,
        classes=classes,
    )


@dataclass
class FoldRecord:
    """Held-out subject, its predictions, and the penalty chosen for it."""

    subject: str
    clip_ids: list[str]
    truths: list
    predictions: list
    chosen_c: float
    inner_accuracy: dict

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "clip_ids": self.clip_ids,
            "truths": list(self.truths),
            "predictions": list(self.predictions),
            "chosen_c": self.chosen_c,
            "inner_accuracy": {str(k): v for k, v in self.inner_accuracy.items()},
        }


@dataclass
class EvalReport:
    """Pooled evaluation result: metrics, per-fold details, warnings."""

    protocol: str
    metrics: MetricBundle
    folds: list[FoldRecord]
    c_grid: tuple
    per_source: dict | None = None
    convergence_warnings: list[str] = field(default_factory=list)
    config_echo: dict | None = None

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "metrics": self.metrics.to_dict(),
            "folds": [f.to_dict() for f in self.folds],
            "c_grid": list(self.c_grid),
            "per_source": (
                {k: v.to_dict() for k, v in self.per_source.items()}
                if self.per_source is not None else None
            ),
            "convergence_warnings": list(self.convergence_warnings),
            "config_echo": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def text_table(self) -> str:
        rows = [("overall", self.metrics)]
        if self.per_source:
            rows += sorted(self.per_source.items())
        lines = [
            f"{'scope':<14} {'Acc. (%)':>9} {'F1':>6} {'wF1':>6} {'UAR':>6}",
            "-" * 46,
        ]
        for name, m in rows:
            lines.append(
                f"{name:<14} {100 * m.mean_accuracy:>9.2f} {m.f1_macro:>6.2f} "
                f"{m.f1_weighted:>6.2f} {m.uar:>6.2f}"
            )
        return "\n".join(lines)


def _fold_arrays(data: Sequence[LabeledFeature], indices: np.ndarray) -> np.ndarray:
    return np.stack([np.asarray(data[i].vector, dtype=np.float64) for i in indices])


def _subject_accuracy(model: LinearSvmModel, X: np.ndarray, labels: Sequence) -> float:
    pred = model.predict(X)
    return float(np.mean([p == t for p, t in zip(pred, labels)]))


def _select_penalty(samples: list[LabeledFeature], X: np.ndarray, c_grid: Sequence[float],
                    notes: list[str]) -> tuple[float, dict]:
    """Inner leave-one-subject-out search for the best penalty.

    Returns the smallest penalty achieving the highest inner mean accuracy.
    Degenerate inner splits (fewer than two subjects, or an inner training
    set collapsing to one class) fall back to the smallest grid value.
    """
    c_grid = sorted(set(float(c) for c in c_grid))
    if len(c_grid) == 1:
        return c_grid[0], {}
    subjects = sorted({s.subject_id for s in samples})
    inner_splits = []
    if len(subjects) >= 2:
        subj_arr = np.array([s.subject_id for s in samples])
        for held in subjects:
            tr = np.flatnonzero(subj_arr != held)
            te = np.flatnonzero(subj_arr == held)
            if len({samples[i].label for i in tr}) >= 2:
                inner_splits.append((held, tr, te))
    if not inner_splits:
        return c_grid[0], {}

    inner_acc = {}
    for c in c_grid:
        accs = []
        for _, tr, te in inner_splits:
            model = train_linear_svm([_vec_sample(samples[i], X[i]) for i in tr], c)
            notes.extend(model.warnings)
            accs.append(_subject_accuracy(model, X[te], [samples[i].label for i in te]))
        inner_acc[c] = float(np.mean(accs))

    best = max(inner_acc.values())
    chosen = next(c for c in c_grid if inner_acc[c] == best)
    return chosen, inner_acc


def _vec_sample(sample: LabeledFeature, vector: np.ndarray) -> LabeledFeature:
    return LabeledFeature(
        vector=vector,
        subject_id=sample.subject_id,
        label=sample.label,
        dataset_id=sample.dataset_id,
        clip_id=sample.clip_id,
    )


def loso_evaluate(data: Sequence[LabeledFeature], c_grid: Sequence[float] = DEFAULT_C_GRID,
                  *, fold_transform=None, hooks: Hooks | None = None,
                  class_set: Sequence | None = None,
                  protocol_name: str = "loso") -> EvalReport:
    """Leave-one-subject-out evaluation with nested penalty selection.

    ``fold_transform(train_indices, test_indices, held_subject)`` may map
    raw per-clip features to fold-specific vectors (e.g. a whitening fit on
    the training fold); without it the samples' own vectors are used.
    Subjects whose classes never occur in training are still scored.
    """
    data = list(data)
    for i, s in enumerate(data):
        if not s.clip_id:
            s.clip_id = f"clip{i:04d}"
    subjects = sorted({s.subject_id for s in data})
    if len(subjects) < 2:
        raise ProtocolError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")

    subj_arr = np.array([s.subject_id for s in data])
    folds = []
    notes: list[str] = []
    all_pred, all_true, all_subj = [], [], []

    for held in subjects:
        tr_idx = np.flatnonzero(subj_arr != held)
        te_idx = np.flatnonzero(subj_arr == held)
        if fold_transform is not None:
            X_tr, X_te = fold_transform(tr_idx, te_idx, held)
        else:
            X_tr, X_te = _fold_arrays(data, tr_idx), _fold_arrays(data, te_idx)

        train_samples = [data[i] for i in tr_idx]
        if hooks:
            hooks("c_selection", held, tuple(s.clip_id for s in train_samples))
        chosen_c, inner_acc = _select_penalty(train_samples, X_tr, c_grid, notes)

        if hooks:
            hooks("svm_train", held, tuple(s.clip_id for s in train_samples))
        model = train_linear_svm(
            [_vec_sample(s, X_tr[i]) for i, s in enumerate(train_samples)], chosen_c
        )
        notes.extend(model.warnings)
        preds = model.predict(X_te)

        truths = [data[i].label for i in te_idx]
        folds.append(FoldRecord(
            subject=held,
            clip_ids=[data[i].clip_id for i in te_idx],
            truths=truths,
            predictions=preds,
            chosen_c=chosen_c,
            inner_accuracy=inner_acc,
        ))
        all_pred.extend(preds)
        all_true.extend(truths)
        all_subj.extend(held for _ in te_idx)

    metrics = compute_metrics(all_pred, all_true, all_subj, class_set=class_set)
    per_source = _per_source_metrics(data, folds, metrics.classes)
    return EvalReport(
        protocol=protocol_name,
        metrics=metrics,
        folds=folds,
        c_grid=tuple(sorted(set(float(c) for c in c_grid))),
        per_source=per_source,
        convergence_warnings=notes,
    )


def _per_source_metrics(data, folds, classes) -> dict | None:
    sources = {s.dataset_id for s in data if s.dataset_id}
    if len(sources) < 2:
        return None
    by_clip = {s.clip_id: s.dataset_id for s in data}
    buckets: dict[str, list] = {src: [] for src in sorted(sources)}
    for fold in folds:
        for clip, t, p in zip(fold.clip_ids, fold.truths, fold.predictions):
            buckets[by_clip[clip]].append((p, t, fold.subject))
    out = {}
    for src, rows in buckets.items():
        if rows:
            p, t, s = zip(*rows)
            out[src] = compute_metrics(p, t, s, class_set=classes)
    return out


def composite_evaluate(datasets: Sequence[tuple[Sequence[LabeledFeature], dict]],
                       protocol: str = "megc2018",
                       c_grid: Sequence[float] = DEFAULT_C_GRID,
                       *, fold_transform=None, hooks: Hooks | None = None) -> EvalReport:
    """Merge datasets under class maps and evaluate the union with LOSO.

    Every dataset comes with a total label map (unmapped labels raise a
    configuration error); subject ids are namespaced by the sample's
    dataset id so same-named subjects from different sources stay distinct.
    The report carries a per-source metric breakdown.
    """
    merged: list[LabeledFeature] = []
    for samples, class_map in datasets:
        for s in samples:
            if s.label not in class_map:
                raise ConfigurationError(
                    f"label {s.label!r} of dataset {s.dataset_id!r} missing from class map"
                )
            merged.append(LabeledFeature(
                vector=s.vector,
                subject_id=f"{s.dataset_id}::{s.subject_id}",
                label=class_map[s.label],
                dataset_id=s.dataset_id,
                clip_id=s.clip_id,
            ))
    report = loso_evaluate(
        merged, c_grid,
        fold_transform=fold_transform, hooks=hooks,
        protocol_name=f"composite-{protocol}",
    )
    return report
