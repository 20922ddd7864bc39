import numpy as np
import pytest

from mfgmesh.env import GridConfig, TaskKind


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid10():
    return GridConfig(10, 10, TaskKind.CLUSTER, 4)


def make_grid(task=TaskKind.CLUSTER, n=4, width=10, height=10, **kw):
    if task is TaskKind.TARGET_AGREEMENT and "targets" not in kw:
        kw["targets"] = GridConfig.corner_targets(width, height)
    return GridConfig(width, height, task, n, **kw)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
