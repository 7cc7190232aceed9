"""Integration tests: configuration, caching, full runs, fusion search, CLI."""

import json

import cv2
import numpy as np
import pytest

from melbp import (
    BlockGrid,
    ConfigurationError,
    DescriptorConfig,
    EvmParams,
    NeighborSpec,
    RunConfig,
    TimParams,
    WpcaSettings,
    fusion_search,
    load_manifest,
    run_pipeline,
)
from melbp.cli import main as cli_main
from melbp.pipeline import CACHE_DIR_ENV, PRESETS


def small_descriptors(blocks=(2, 2, 1), encoding="riu2"):
    return [
        DescriptorConfig("lbp", NeighborSpec(1, 8), encoding, "TOP", BlockGrid(*blocks)),
        DescriptorConfig("adlbp", NeighborSpec(1, 8), encoding, "TOP", BlockGrid(*blocks)),
        DescriptorConfig("rdlbp", NeighborSpec(2, 8, 1), encoding, "TOP", BlockGrid(*blocks)),
    ]


def small_config(**overrides):
    base = dict(
        descriptors=small_descriptors(),
        tim=TimParams(8),
        evm=EvmParams(alpha=8.0, omega_low=0.05, omega_high=0.4, units="per_frame"),
        c_grid=(0.1, 10.0),
    )
    base.update(overrides)
    return RunConfig(**base)


def temporal_only_dataset(root, n_subjects=6, reps=2, side=24, length=8, seed=0):
    """Two classes that differ only in temporal direction: a sub-region ramps
    up in one class and down in the other; every clip's frame multiset is
    identical across classes, so XY planes carry no class signal."""
    (root / "clips").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(n_subjects):
        for rep in range(reps):
            rng = np.random.default_rng([seed, s, rep])  # class-independent base
            base = np.round(rng.random((side, side)) * 120 + 60)
            bump = np.zeros((side, side))
            bump[8:16, 8:16] = 1.0
            for cls in range(2):
                ramp = np.linspace(0, 30, length)
                if cls == 1:
                    ramp = ramp[::-1]
                name = f"s{s}_r{rep}_c{cls}"
                d = root / "clips" / name
                d.mkdir(exist_ok=True)
                for t in range(length):
                    frame = np.clip(base + ramp[t] * bump, 0, 255).astype(np.uint8)
                    cv2.imwrite(str(d / f"f_{t:03d}.png"), frame)
                entries.append({"clip_path": f"clips/{name}", "subject_id": f"s{s}",
                                "label": f"cls{cls}", "dataset_id": "tmp"})
    doc = {"class_names": ["cls0", "cls1"], "frame_rate": 30.0, "dataset_id": "tmp",
           "entries": entries}
    path = root / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestRunConfig:
    def test_round_trip(self):
        cfg = small_config()
        again = RunConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_presets_fill_defaults(self):
        doc = {
            "preset": "samm",
            "descriptors": [{"kind": "lbp", "r": 2, "p": 8}],
        }
        cfg = RunConfig.from_dict(doc)
        assert (cfg.descriptors[0].blocks.m, cfg.descriptors[0].blocks.q) == (5, 5)
        assert cfg.evm is not None and cfg.evm.alpha == 20.0
        assert cfg.tim.target_length == 10
        smic = RunConfig.from_dict({"preset": "smic",
                                    "descriptors": [{"kind": "lbp", "r": 2, "p": 8}]})
        assert smic.evm.alpha == 8.0
        assert PRESETS["casme2"]["blocks"] == [8, 8, 2]

    def test_explicit_fields_override_preset(self):
        doc = {
            "preset": "casme2",
            "descriptors": [{"kind": "lbp", "r": 2, "p": 8, "blocks": [2, 2, 1]}],
            "evm": None,
        }
        cfg = RunConfig.from_dict(doc)
        assert cfg.descriptors[0].blocks.m == 2
        assert cfg.evm is None

    def test_feature_hash_sensitive_to_every_parameter(self):
        base = small_config()
        d0 = base.descriptors[0]
        h0 = base.feature_hash(d0, 30.0)
        variants = [
            DescriptorConfig("adlbp", d0.spec, d0.encoding, d0.planes, d0.blocks),
            DescriptorConfig(d0.kind, NeighborSpec(2, 8), d0.encoding, d0.planes, d0.blocks),
            DescriptorConfig(d0.kind, NeighborSpec(1, 4), d0.encoding, d0.planes, d0.blocks),
            DescriptorConfig(d0.kind, d0.spec, "full", d0.planes, d0.blocks),
            DescriptorConfig(d0.kind, d0.spec, d0.encoding, "XYOT", d0.blocks),
            DescriptorConfig(d0.kind, d0.spec, d0.encoding, d0.planes, BlockGrid(3, 2, 1)),
        ]
        hashes = {base.feature_hash(v, 30.0) for v in variants}
        assert h0 not in hashes and len(hashes) == len(variants)

        assert small_config(tim=TimParams(9)).feature_hash(d0, 30.0) != h0
        assert small_config(evm=None).feature_hash(d0, 30.0) != h0
        alt_evm = EvmParams(alpha=12.0, omega_low=0.05, omega_high=0.4, units="per_frame")
        assert small_config(evm=alt_evm).feature_hash(d0, 30.0) != h0
        assert small_config(resize=(32, 32)).feature_hash(d0, 30.0) != h0
        assert base.feature_hash(d0, 25.0) != h0

    def test_requires_descriptor_and_known_protocol(self):
        with pytest.raises(ConfigurationError):
            RunConfig(descriptors=[])
        with pytest.raises(ConfigurationError):
            small_config(protocol="bogus")


class TestRunPipeline:
    def test_report_and_config_echo(self, tiny_dataset):
        cfg = small_config()
        report = run_pipeline(cfg, tiny_dataset)
        assert report.config_echo == cfg.to_dict()
        assert len(report.folds) == 4
        assert 0.0 <= report.metrics.mean_accuracy <= 1.0
        assert report.metrics.mean_accuracy > 1 / 3  # above chance on easy data

    def test_warm_cache_bitwise_identical(self, tiny_dataset, tmp_path):
        cfg = small_config(cache_dir=str(tmp_path / "cache"))
        cold = run_pipeline(cfg, tiny_dataset)
        assert any((tmp_path / "cache").glob("*.feat"))
        warm = run_pipeline(cfg, tiny_dataset)
        assert cold.to_json() == warm.to_json()

    def test_two_cold_runs_identical(self, tiny_dataset, tmp_path):
        r1 = run_pipeline(small_config(cache_dir=str(tmp_path / "c1")), tiny_dataset)
        r2 = run_pipeline(small_config(cache_dir=str(tmp_path / "c2")), tiny_dataset)
        assert r1.to_json() == r2.to_json()
        f1 = sorted(p.name for p in (tmp_path / "c1").glob("*.feat"))
        f2 = sorted(p.name for p in (tmp_path / "c2").glob("*.feat"))
        assert f1 == f2
        for name in f1:
            assert (tmp_path / "c1" / name).read_bytes() == (tmp_path / "c2" / name).read_bytes()

    def test_env_var_overrides_cache_dir(self, tiny_dataset, tmp_path, monkeypatch):
        monkeypatch.setenv(CACHE_DIR_ENV, str(tmp_path / "env_cache"))
        cfg = small_config(cache_dir=str(tmp_path / "cfg_cache"))
        run_pipeline(cfg, tiny_dataset)
        assert any((tmp_path / "env_cache").glob("*.feat"))
        assert not (tmp_path / "cfg_cache").exists()

    def test_transductive_flag(self, tiny_dataset):
        cfg = small_config(wpca=WpcaSettings(transductive=True))
        report = run_pipeline(cfg, tiny_dataset)
        assert report.metrics.mean_accuracy > 1 / 3

    def test_composite_protocol(self, tiny_dataset, tmp_path):
        from melbp import synth_generate
        other = synth_generate(tmp_path / "other", n_classes=3, n_subjects=3,
                               clips_per_subject=3, size=(40, 40), length=10,
                               seed=11, dataset_id="synthB")
        ident = {f"class{k}": f"class{k}" for k in range(3)}
        cfg = small_config(protocol="composite-megc2019",
                           class_maps={"synth": ident, "synthB": ident})
        report = run_pipeline(cfg, [tiny_dataset, other])
        assert len(report.folds) == 7  # 4 + 3 namespaced subjects
        assert set(report.per_source) == {"synth", "synthB"}
        assert report.protocol == "composite-megc2019"

    def test_composite_requires_class_maps(self, tiny_dataset):
        cfg = small_config(protocol="composite-megc2018")
        with pytest.raises(ConfigurationError):
            run_pipeline(cfg, tiny_dataset)


class TestFusionSearch:
    def test_enumeration_and_ranking(self, tmp_path):
        manifest = temporal_only_dataset(tmp_path)
        cfg = RunConfig(
            descriptors=[
                DescriptorConfig("lbp", NeighborSpec(1, 4), "full", "TOP", BlockGrid(2, 2, 1)),
                DescriptorConfig("adlbp", NeighborSpec(1, 4), "full", "TOP", BlockGrid(2, 2, 1)),
                DescriptorConfig("rdlbp", NeighborSpec(2, 4, 1), "full", "TOP",
                                 BlockGrid(2, 2, 1)),
            ],
            tim=None, evm=None, c_grid=(1.0,),
        )
        results = fusion_search(cfg, manifest)
        assert len(results) == 215
        accs = [r.mean_accuracy for r in results]
        assert all(a >= b for a, b in zip(accs, accs[1:]))

        def active_planes(r):
            return [v for v in r.scheme.values() if v]

        # the candidate set contains every single-descriptor scheme
        singles = [r for r in results if len(active_planes(r)) == 1]
        assert len(singles) == 15
        assert results[0].mean_accuracy >= max(r.mean_accuracy for r in singles)

        # class signal lives on the temporal planes only
        xy_only = [r for r in results if set(active_planes(r)) == {"XY"}]
        temporal = [r for r in results if any(p != "XY" for p in active_planes(r))]
        assert max(r.mean_accuracy for r in xy_only) < max(r.mean_accuracy for r in temporal)
        assert any(p != "XY" for p in active_planes(results[0]))

    def test_template_must_have_three_descriptors(self, tiny_dataset):
        cfg = small_config(descriptors=small_descriptors()[:2])
        with pytest.raises(ConfigurationError):
            fusion_search(cfg, tiny_dataset)


class TestCli:
    def test_full_verb_chain(self, tmp_path, capsys):
        data_dir = tmp_path / "data"
        rc = cli_main(["synth", "--out", str(data_dir), "--classes", "2",
                       "--subjects", "3", "--clips-per-subject", "2",
                       "--width", "32", "--height", "32", "--length", "8",
                       "--seed", "4"])
        assert rc == 0
        manifest = data_dir / "manifest.json"
        assert manifest.exists()

        config_doc = {
            "descriptors": [
                {"kind": "lbp", "r": 1, "p": 8, "encoding": "riu2", "blocks": [2, 2, 1]},
                {"kind": "adlbp", "r": 1, "p": 8, "encoding": "riu2", "blocks": [2, 2, 1]},
            ],
            "tim": {"target_length": 8},
            "evm": {"alpha": 8.0, "omega_low": 0.05, "omega_high": 0.4,
                    "units": "per_frame"},
            "c_grid": [0.1, 10.0],
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config_doc))

        rc = cli_main(["extract", "--manifest", str(manifest), "--config", str(config_path),
                       "--cache-dir", str(tmp_path / "cache")])
        assert rc == 0
        assert any((tmp_path / "cache").glob("*.feat"))

        report_path = tmp_path / "report.json"
        rc = cli_main(["evaluate", "--manifest", str(manifest), "--config", str(config_path),
                       "--cache-dir", str(tmp_path / "cache"), "--out", str(report_path),
                       "--table"])
        assert rc == 0
        doc = json.loads(report_path.read_text())
        assert "metrics" in doc and "config_echo" in doc

        rc = cli_main(["report", "--report", str(report_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "Acc. (%)" in out

    def test_error_exit_code(self, tmp_path):
        config_path = tmp_path / "bad.json"
        config_path.write_text(json.dumps({"descriptors": []}))
        (tmp_path / "m.json").write_text(json.dumps({"class_names": [], "entries": []}))
        rc = cli_main(["evaluate", "--manifest", str(tmp_path / "m.json"),
                       "--config", str(config_path)])
        assert rc == 2
