import numpy as np
import pytest
import torch

from spectro_explain.model import TrainConfig, train
from spectro_explain.synthgen import SignalBank, default_manifest

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def manifest():
    return default_manifest(seed=0)


@pytest.fixture(scope="session")
def bank(manifest):
    return SignalBank.render(manifest)


@pytest.fixture(scope="session")
def trained(bank):
    """Reference CNN trained with the default config, seed 0."""
    return train(bank, TrainConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}"
        request.config.stash.setdefault(_CRITERIA, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
