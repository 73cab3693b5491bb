import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

import simsupport
from scot.backends import synthetic_questions
from scot.pipeline import PipelineConfig


@pytest.fixture
def sim_backends():
    """Calibrated draft/selector/target trio; drafts fail only on [hard]."""
    return simsupport.standard_backends()


@pytest.fixture
def pipeline_cfg():
    return PipelineConfig()


@dataclass(frozen=True)
class WorkDir:
    root: Path
    config: Path
    dataset: Path


@pytest.fixture
def workdir(tmp_path):
    """Factory for an on-disk run setup (scripts, config, dataset)."""

    def build(
        *,
        count: int = 40,
        hard_rate: float = 0.098,
        seed: int = 7,
        parallelism: int = 1,
        pipeline_extra: dict = None,
        with_answers: bool = True,
        dataset_name: str = "dataset",
        subdir: str = "",
    ) -> WorkDir:
        root = tmp_path / subdir if subdir else tmp_path
        root.mkdir(parents=True, exist_ok=True)
        simsupport.write_sim_scripts(root / "sim_scripts.json")
        config = root / "config.json"
        simsupport.write_config(
            config, parallelism=parallelism, pipeline_extra=pipeline_extra
        )
        dataset = root / f"{dataset_name}.jsonl"
        questions = synthetic_questions(count, hard_rate=hard_rate, seed=seed)
        simsupport.write_dataset(dataset, questions, with_answers=with_answers)
        return WorkDir(root=root, config=config, dataset=dataset)

    return build
