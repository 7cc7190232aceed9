"""End-to-end runs: configuration, feature computation, protocols, search.

``run_pipeline`` executes preprocess -> descriptor extraction -> per-fold
whitening -> fusion -> subject-disjoint evaluation for one configuration.
Descriptor features are cached on disk per (clip, descriptor settings); a
warm cache reproduces a cold run bit for bit because features always
round-trip through the cache's float32 representation.

``fusion_search`` enumerates every combination of the three descriptors
with six plane options each (five plane sets or absent), evaluates all 215
non-empty schemes under the configured protocol, and ranks them by
descending mean accuracy.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import FeatureCache
from .classify import (
    DEFAULT_C_GRID,
    EvalReport,
    Hooks,
    LabeledFeature,
    composite_evaluate,
    loso_evaluate,
)
from .embed import wpca_fit, wpca_transform
from .errors import ConfigurationError
from .manifest import DatasetManifest, ingest, load_manifest
from .preprocess import EvmParams, TimParams, magnify, tim_interpolate
from .volume import PLANE_ORDER, DescriptorConfig, PlaneSet, VideoVolume, extract_descriptor

CACHE_DIR_ENV = "MELBP_CACHE_DIR"

PLANE_OPTIONS = (None, "TOP", "XYOT", "XOT", "YOT", "XY")

# parameter bundles mirroring the published experimental settings; these
# only fill defaults, they do not load any dataset
PRESETS = {
    "casme2": {
        "blocks": [8, 8, 2],
        "evm": {"alpha": 20.0, "omega_low": 0.05, "omega_high": 0.4,
                "units": "per_frame", "lambda_c": 16.0, "levels": 3},
        "tim": {"target_length": 10},
    },
    "samm": {
        "blocks": [5, 5, 2],
        "evm": {"alpha": 20.0, "omega_low": 0.05, "omega_high": 0.4,
                "units": "per_frame", "lambda_c": 16.0, "levels": 3},
        "tim": {"target_length": 10},
    },
    "smic": {
        "blocks": [8, 8, 2],
        "evm": {"alpha": 8.0, "omega_low": 0.05, "omega_high": 0.4,
                "units": "per_frame", "lambda_c": 16.0, "levels": 3},
        "tim": {"target_length": 10},
    },
}

PROTOCOLS = ("loso", "composite-megc2018", "composite-megc2019")


@dataclass(frozen=True)
class WpcaSettings:
    """Whitening options: requested dimension and fit scope.

    ``transductive=True`` fits the embedding once on the whole dataset (the
    historically common but leaky variant) instead of per training fold;
    ``renormalize_fused=False`` keeps the fused vector as concatenated
    (there is no evidence renormalizing helps, so it is off by default).
    """

    k: int | None = None
    transductive: bool = False
    renormalize_fused: bool = False

    def to_dict(self) -> dict:
        return {"k": self.k, "transductive": self.transductive,
                "renormalize_fused": self.renormalize_fused}


@dataclass
class RunConfig:
    """Fully resolved settings for one pipeline run."""

    descriptors: list[DescriptorConfig]
    tim: TimParams | None = field(default_factory=TimParams)
    evm: EvmParams | None = None
    resize: tuple[int, int] | None = None
    wpca: WpcaSettings = field(default_factory=WpcaSettings)
    protocol: str = "loso"
    c_grid: tuple = DEFAULT_C_GRID
    seed: int = 0
    cache_dir: str | None = None
    class_maps: dict | None = None  # dataset_id -> {label: grouped label}

    def __post_init__(self):
        if not self.descriptors:
            raise ConfigurationError("at least one descriptor must be configured")
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(
                f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}"
            )

    def to_dict(self) -> dict:
        return {
            "descriptors": [d.to_dict() for d in self.descriptors],
            "tim": self.tim.to_dict() if self.tim else None,
            "evm": self.evm.to_dict() if self.evm else None,
            "resize": list(self.resize) if self.resize else None,
            "wpca": self.wpca.to_dict(),
            "protocol": self.protocol,
            "c_grid": [float(c) for c in self.c_grid],
            "seed": self.seed,
            "cache_dir": self.cache_dir,
            "class_maps": self.class_maps,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        preset = PRESETS.get(doc.pop("preset", "") or "", {})
        default_blocks = preset.get("blocks")

        descriptors = []
        for d in doc.get("descriptors", []):
            d = dict(d)
            if "blocks" not in d and default_blocks:
                d["blocks"] = default_blocks
            descriptors.append(DescriptorConfig.from_dict(d))

        evm_doc = doc.get("evm", preset.get("evm"))
        tim_doc = doc.get("tim", preset.get("tim", {"target_length": 10}))
        wpca_doc = doc.get("wpca", {})
        return cls(
            descriptors=descriptors,
            tim=TimParams.from_dict(tim_doc) if tim_doc else None,
            evm=EvmParams.from_dict(evm_doc) if evm_doc else None,
            resize=tuple(doc["resize"]) if doc.get("resize") else None,
            wpca=WpcaSettings(**wpca_doc),
            protocol=doc.get("protocol", "loso"),
            c_grid=tuple(doc.get("c_grid", DEFAULT_C_GRID)),
            seed=int(doc.get("seed", 0)),
            cache_dir=doc.get("cache_dir"),
            class_maps=doc.get("class_maps"),
        )

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def preprocess_dict(self) -> dict:
        return {
            "resize": list(self.resize) if self.resize else None,
            "evm": self.evm.to_dict() if self.evm else None,
            "tim": self.tim.to_dict() if self.tim else None,
        }

    def feature_hash(self, descriptor: DescriptorConfig, frame_rate: float | None) -> str:
        payload = {
            "preprocess": self.preprocess_dict(),
            "frame_rate": frame_rate,
            "descriptor": descriptor.to_dict(),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def resolve_cache_dir(self) -> str | None:
        return os.environ.get(CACHE_DIR_ENV) or self.cache_dir


def preprocess_volume(config: RunConfig, volume: VideoVolume) -> VideoVolume:
    """Apply the configured conditioning chain (magnify, then resample)."""
    if config.evm is not None:
        volume = magnify(volume, config.evm)
    if config.tim is not None:
        volume = tim_interpolate(volume, config.tim)
    return volume


def compute_feature_matrices(
    config: RunConfig, manifest: DatasetManifest,
) -> tuple[list[LabeledFeature], list[np.ndarray]]:
    """Per-descriptor feature matrices (rows = clips sorted by clip id).

    Values always pass through the cache's float32 representation, so runs
    with and without a warm cache agree bitwise.
    """
    volumes = ingest(manifest, resize=config.resize)
    cache_dir = config.resolve_cache_dir()
    cache = FeatureCache(cache_dir) if cache_dir else None

    samples = [
        LabeledFeature(vector=None, subject_id=v.subject_id, label=v.label,
                       dataset_id=v.dataset_id, clip_id=v.clip_id)
        for v in volumes
    ]
    matrices = [np.empty((len(volumes), d.dim)) for d in config.descriptors]
    for ci, vol in enumerate(volumes):
        pre = None
        for di, desc in enumerate(config.descriptors):
            fhash = config.feature_hash(desc, vol.frame_rate)
            record = f"{vol.dataset_id}::{vol.clip_id}::d{di}"
            values = cache.load(record, fhash) if cache else None
            if values is None:
                if pre is None:
                    pre = preprocess_volume(config, vol)
                values = extract_descriptor(pre, desc).values.astype(np.float32)
                if cache:
                    cache.store(record, fhash, values, desc.layout)
            matrices[di][ci] = values.astype(np.float64)
    return samples, matrices


def make_wpca_fold_transform(matrices: list[np.ndarray], samples: list[LabeledFeature],
                             settings: WpcaSettings, hooks: Hooks | None = None):
    """Per-fold whitening of each descriptor matrix followed by fusion."""

    def fold_transform(tr_idx, te_idx, held_subject):
        if hooks:
            hooks("wpca_fit", held_subject, tuple(samples[i].clip_id for i in tr_idx))
        tr_parts, te_parts = [], []
        for M in matrices:
            model = wpca_fit(M[tr_idx], k=settings.k)
            tr_parts.append(wpca_transform(model, M[tr_idx]))
            te_parts.append(wpca_transform(model, M[te_idx]))
        X_tr = np.hstack(tr_parts)
        X_te = np.hstack(te_parts)
        if settings.renormalize_fused:
            X_tr = X_tr / np.maximum(np.linalg.norm(X_tr, axis=1, keepdims=True), 1e-12)
            X_te = X_te / np.maximum(np.linalg.norm(X_te, axis=1, keepdims=True), 1e-12)
        return X_tr, X_te

    return fold_transform


def _transductive_vectors(matrices, samples, settings) -> None:
    parts = []
    for M in matrices:
        model = wpca_fit(M, k=settings.k)
        parts.append(wpca_transform(model, M))
    fused = np.hstack(parts)
    if settings.renormalize_fused:
        fused = fused / np.maximum(np.linalg.norm(fused, axis=1, keepdims=True), 1e-12)
    for row, s in zip(fused, samples):
        s.vector = row


def run_pipeline(config: RunConfig, manifests, hooks: Hooks | None = None) -> EvalReport:
    """Execute the full chain on one or more manifests and build the report."""
    if isinstance(manifests, (str, Path, DatasetManifest)):
        manifests = [manifests]
    manifests = [m if isinstance(m, DatasetManifest) else load_manifest(m) for m in manifests]

    all_samples: list[LabeledFeature] = []
    per_desc: list[list[np.ndarray]] = [[] for _ in config.descriptors]
    class_names: list[str] = []
    for man in manifests:
        samples, matrices = compute_feature_matrices(config, man)
        all_samples.extend(samples)
        for di, M in enumerate(matrices):
            per_desc[di].append(M)
        for c in man.class_names:
            if c not in class_names:
                class_names.append(c)
    matrices = [np.vstack(parts) for parts in per_desc]

    if config.wpca.transductive:
        _transductive_vectors(matrices, all_samples, config.wpca)
        fold_transform = None
    else:
        fold_transform = make_wpca_fold_transform(matrices, all_samples, config.wpca, hooks)

    if config.protocol.startswith("composite"):
        if config.class_maps is None:
            raise ConfigurationError("composite protocols require class_maps")
        groups: dict[str, list[LabeledFeature]] = {}
        for s in all_samples:
            groups.setdefault(s.dataset_id, []).append(s)
        # composite_evaluate namespaces subjects and remaps labels; the
        # sample order (and therefore matrix row order) is preserved
        ordered = []
        datasets = []
        for ds_id in groups:
            if ds_id not in config.class_maps:
                raise ConfigurationError(f"no class map for dataset {ds_id!r}")
            datasets.append((groups[ds_id], config.class_maps[ds_id]))
            ordered.extend(groups[ds_id])
        if fold_transform is not None:
            index_of = {id(s): i for i, s in enumerate(all_samples)}
            order = [index_of[id(s)] for s in ordered]
            if order != list(range(len(all_samples))):
                matrices = [M[order] for M in matrices]
            fold_transform = make_wpca_fold_transform(matrices, ordered, config.wpca, hooks)
        report = composite_evaluate(
            datasets, protocol=config.protocol.split("-", 1)[1],
            c_grid=config.c_grid, fold_transform=fold_transform, hooks=hooks,
        )
    else:
        report = loso_evaluate(
            all_samples, config.c_grid,
            fold_transform=fold_transform, hooks=hooks,
            class_set=tuple(sorted(set(s.label for s in all_samples))),
        )
    report.config_echo = config.to_dict()
    return report


@dataclass
class SchemeResult:
    """One fusion candidate and its evaluation metrics."""

    scheme: dict
    mean_accuracy: float
    f1_macro: float
    f1_weighted: float
    uar: float

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "mean_accuracy": self.mean_accuracy,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "uar": self.uar,
        }


def _plane_columns(descriptor: DescriptorConfig, plane_set: str) -> np.ndarray:
    """Column indices of a plane subset inside a TOP-extracted histogram."""
    seg = descriptor.blocks.count * descriptor.n_bins
    planes = PlaneSet.from_spec(plane_set)
    cols = []
    for plane in planes:
        i = PLANE_ORDER.index(plane)
        cols.append(np.arange(i * seg, (i + 1) * seg))
    return np.concatenate(cols)


def fusion_search(config: RunConfig, manifests, hooks: Hooks | None = None,
                  progress=None) -> list[SchemeResult]:
    """Evaluate all 215 descriptor/plane fusion schemes and rank them.

    The template must configure exactly three descriptors; each is
    extracted once over all three planes, and every scheme is a choice of
    plane set (or absence) per descriptor.  Whitening fits are shared
    across schemes per (descriptor, plane set, fold).
    """
    if len(config.descriptors) != 3:
        raise ConfigurationError(
            f"fusion search needs exactly 3 template descriptors, got {len(config.descriptors)}"
        )
    top_config = RunConfig(
        descriptors=[
            DescriptorConfig(kind=d.kind, spec=d.spec, encoding=d.encoding,
                             planes=PlaneSet.from_spec("TOP"), blocks=d.blocks)
            for d in config.descriptors
        ],
        tim=config.tim, evm=config.evm, resize=config.resize, wpca=config.wpca,
        protocol="loso", c_grid=config.c_grid, seed=config.seed,
        cache_dir=config.cache_dir,
    )
    if isinstance(manifests, (str, Path, DatasetManifest)):
        manifests = [manifests]
    manifests = [m if isinstance(m, DatasetManifest) else load_manifest(m) for m in manifests]

    all_samples: list[LabeledFeature] = []
    per_desc: list[list[np.ndarray]] = [[] for _ in top_config.descriptors]
    for man in manifests:
        samples, mats = compute_feature_matrices(top_config, man)
        all_samples.extend(samples)
        for di, M in enumerate(mats):
            per_desc[di].append(M)
    top_matrices = [np.vstack(parts) for parts in per_desc]

    component_cols = {
        (di, ps): _plane_columns(top_config.descriptors[di], ps)
        for di in range(3) for ps in PLANE_OPTIONS if ps is not None
    }
    memo: dict = {}

    def component_transform(di, ps, tr_idx, te_idx, held):
        key = (di, ps, held)
        if key not in memo:
            M = top_matrices[di][:, component_cols[(di, ps)]]
            model = wpca_fit(M[tr_idx], k=config.wpca.k)
            memo[key] = (wpca_transform(model, M[tr_idx]), wpca_transform(model, M[te_idx]))
        return memo[key]

    results = []
    combos = [c for c in itertools.product(PLANE_OPTIONS, repeat=3) if any(c)]
    for combo in combos:
        active = [(di, ps) for di, ps in enumerate(combo) if ps is not None]

        def fold_transform(tr_idx, te_idx, held, _active=active):
            parts = [component_transform(di, ps, tr_idx, te_idx, held) for di, ps in _active]
            return np.hstack([p[0] for p in parts]), np.hstack([p[1] for p in parts])

        report = loso_evaluate(all_samples, config.c_grid, fold_transform=fold_transform)
        m = report.metrics
        kinds = [d.kind for d in top_config.descriptors]
        keys = [k if kinds.count(k) == 1 else f"{k}#{di}" for di, k in enumerate(kinds)]
        results.append(SchemeResult(
            scheme={keys[di]: combo[di] for di in range(3)},
            mean_accuracy=m.mean_accuracy,
            f1_macro=m.f1_macro,
            f1_weighted=m.f1_weighted,
            uar=m.uar,
        ))
        if progress:
            progress(len(results), len(combos), results[-1])

    results.sort(key=lambda r: -r.mean_accuracy)
    return results
