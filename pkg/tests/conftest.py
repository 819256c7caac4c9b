import numpy as np
import pytest

from panelcp.panel import PanelData

ACCEPTANCE_LINES: list[str] = []


def random_panel(rng, N=20, T=6, p=3, intercept=False):
    x = rng.normal(size=(T, N, p))
    if intercept:
        x[:, :, 0] = 1.0
    y = x @ rng.normal(size=p) + rng.normal(size=(T, N))
    return PanelData(y=y, x=x, has_intercept=intercept)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
