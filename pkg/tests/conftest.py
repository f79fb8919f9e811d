import numpy as np
import pytest
import torch

from adgan.model import Generator, GeneratorConfig


@pytest.fixture
def desk_cfg():
    return GeneratorConfig(scale_preset="desk")


@pytest.fixture
def desk_gen(desk_cfg):
    torch.manual_seed(0)
    return Generator(desk_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_circle_count(cx, cy, r, h, w):
    """Pixel-centre membership count by explicit double loop."""
    n = 0
    for y in range(h):
        for x in range(w):
            if (x + 0.5 - cx) ** 2 + (y + 0.5 - cy) ** 2 <= r * r:
                n += 1
    return n


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE_LINES.append(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
