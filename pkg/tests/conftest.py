import numpy as np
import pytest

from attn_cropnet import datagen, ingest
from attn_cropnet.model import ModelConfig


def tiny_model_cfg(**kw) -> ModelConfig:
    base = dict(patch_h=4, patch_w=4, channels=(3, 4, 4), mlp_hidden=(4, 4), d_e=3,
                d_a=4, head_hidden=4)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    datagen.generate_dataset(datagen.GenConfig(seed=11, n_fields=6, patch_h=4, patch_w=4), out)
    return out


@pytest.fixture(scope="session")
def small_dataset(small_dataset_dir):
    return ingest.load_dataset(small_dataset_dir)


@pytest.fixture(scope="session")
def small_samples(small_dataset):
    samples, report = ingest.dataset_samples(small_dataset, 1)
    assert len(report) == 0
    return samples


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
