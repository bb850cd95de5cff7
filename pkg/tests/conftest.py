import numpy as np
import pytest

from foleysketch.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from foleysketch.config import ModelConfig
from foleysketch.synthdata import make_dataset, save_dataset
from foleysketch.training import TrainConfig, train


@pytest.fixture(scope="session")
def cfg() -> ModelConfig:
    return ModelConfig()


@pytest.fixture(scope="session")
def small_examples(cfg):
    return make_dataset(16, seed=101, cfg=cfg)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory, cfg, small_examples):
    d = tmp_path_factory.mktemp("data") / "train"
    save_dataset(small_examples, d, cfg, seed=101)
    return d


@pytest.fixture(scope="session")
def small_ckpt_path(tmp_path_factory, cfg, small_examples):
    """A briefly trained checkpoint for CLI/service plumbing tests."""
    result = train(small_examples, TrainConfig(steps=40, seed=5), cfg)
    path = tmp_path_factory.mktemp("ckpt") / "small.ckpt"
    save_checkpoint(path, cfg, result.params, result.norm_mean, result.norm_std,
                    meta={"train_steps": 40})
    return path


@pytest.fixture(scope="session")
def small_ckpt(small_ckpt_path) -> Checkpoint:
    return load_checkpoint(small_ckpt_path)
