import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pie.learned import MlpDenoiser, TrainConfig, train
from pie.metrics import train_classifier
from pie.schedule import linear_schedule
from pie.synthdata import BlobImageSpec, make_dataset

settings.register_profile("pie", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pie")


class TrainedImageWorld:
    """One trained denoiser + classifier shared by every image-regime test."""

    def __init__(self):
        self.spec = BlobImageSpec()
        self.schedule = linear_schedule()
        t0 = time.perf_counter()
        self.dataset = make_dataset(self.spec, 400, rng=np.random.default_rng(0))
        self.model = MlpDenoiser(self.spec.size ** 2, 2, self.schedule.T, seed=0)
        _, self.losses = train(self.model, self.dataset.images, self.dataset.labels, self.schedule,
                               TrainConfig())
        self.train_seconds = time.perf_counter() - t0
        self.classifier = train_classifier(self.dataset)


@pytest.fixture(scope="session")
def image_world() -> TrainedImageWorld:
    return TrainedImageWorld()


@pytest.fixture(scope="session")
def checkpoint(image_world, tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("ckpt") / "denoiser.bin"
    image_world.model.save(str(path))
    return str(path)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
