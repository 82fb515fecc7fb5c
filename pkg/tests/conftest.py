import numpy as np
import pytest
import torch

from trajcodec import ModelConfig, build_model
from trajcodec.synthetic import moving_disc_clip
from trajcodec.training import FramePairDataset, RandomFeatureBackend, Schedule, train

TOY = dict(num_features=4, max_resolution=64, depth=2, num_resolutions=1,
           extractor_width=16, predictor_width=16, motion_width=16, generator_width=16)


@pytest.fixture
def toy_config():
    return ModelConfig(**TOY)


@pytest.fixture
def toy_model(toy_config):
    return build_model(toy_config, seed=0)


@pytest.fixture(scope="session")
def trained_toy():
    """Toy model overfit on one 8-frame moving-disc clip (500 Adam steps).

    Shared by the trainability and end-to-end codec checks; returns
    (model, per-step log rows, wall-clock seconds).
    """
    import time

    torch.set_num_threads(max(1, torch.get_num_threads()))
    model = build_model(ModelConfig(**TOY), seed=0)
    clip = moving_disc_clip(8, 64)
    start = time.perf_counter()
    rows = train(model, FramePairDataset([clip]),
                 Schedule(epochs=1, steps_per_epoch=500, batch_size=4, milestones=(), seed=0),
                 backend=RandomFeatureBackend(seed=0))
    return model, rows, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion

ACCEPTANCE = {}
CRITERIA = {
    1: "entropy round-trip", 2: "closed-loop no-drift", 3: "container round-trip and corruption",
    4: "motion-transform oracle", 5: "dense-motion composition", 6: "warp correctness",
    7: "route plan and sharing", 8: "occlusion limits", 9: "loss suite", 10: "trainability smoke test",
    11: "end-to-end toy codec", 12: "BD-rate",
}


@pytest.fixture
def acceptance():
    def report(number, checks):
        """checks: list of (description, passed)."""
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{d}{'' if p else ' [FAILED]'}" for d, p in checks)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {CRITERIA[number]}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    ran = [item for item in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
           if "test_acceptance" in item.nodeid]
    if not ran and not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        terminalreporter.write_line(ACCEPTANCE.get(number, f"[FAIL] criterion {number:2d} {CRITERIA[number]}: "
                                                           "did not report (raised or not run)"))
