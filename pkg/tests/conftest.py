import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_checkpoints(tmp_dir, ratio=2, seed=0):
    """Untrained completion and small super-resolution checkpoints on disk."""
    from dataclasses import asdict

    from adaconv.checkpoint import Checkpoint, save_checkpoint
    from adaconv.networks import CompletionConfig, CompletionNet, SRConfig, SuperResolutionNet, init_weights

    gen = np.random.default_rng(seed)
    ccfg = CompletionConfig()
    scfg = SRConfig(ratio=ratio, features=8, blocks=1)
    comp = Checkpoint(init_weights(CompletionNet(ccfg).spec, gen), {"network": asdict(ccfg)})
    sr = Checkpoint(init_weights(SuperResolutionNet(scfg).spec, gen), {"network": asdict(scfg)})
    save_checkpoint(tmp_dir / "c.bin", comp)
    save_checkpoint(tmp_dir / "s.bin", sr)
    return tmp_dir / "c.bin", tmp_dir / "s.bin"


@pytest.fixture
def checkpoints(tmp_path):
    return make_checkpoints(tmp_path)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
