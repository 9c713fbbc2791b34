import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reply_sentinel.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_synth():
    """Small labeled corpus shared by pipeline tests (not the benchmark one)."""
    config = SynthConfig(
        n_targets=8, posts_per_target=6, n_io_repliers=40, n_organic_repliers=200,
        seed=11,
    )
    corpus, truth = generate(config, self_check=False)
    return corpus, truth, config


@pytest.fixture(scope="session")
def bench_synth():
    """The frozen default benchmark corpus (seed 7) used by acceptance tests."""
    corpus, truth = generate(SynthConfig(), self_check=False)
    return corpus, truth
