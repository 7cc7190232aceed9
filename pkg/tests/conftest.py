import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from melbp import synth_generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small synthetic dataset shared by pipeline-level tests."""
    out = tmp_path_factory.mktemp("tiny")
    manifest = synth_generate(
        out, n_classes=3, n_subjects=4, clips_per_subject=3,
        size=(40, 40), length=10, seed=7,
    )
    return manifest
