import pytest

from helpers import one_target
from iatrack.cli import load_policies
from iatrack.config import RunConfig
from iatrack.features import FeatureConfig
from iatrack.kcf import KcfConfig


@pytest.fixture(scope="session")
def bundled_policies():
    return load_policies(RunConfig())


@pytest.fixture
def feat_cfg():
    return FeatureConfig()


@pytest.fixture
def kcf_cfg():
    return KcfConfig()


@pytest.fixture(scope="session")
def stationary_seq():
    return one_target(((1, 160.0, 120.0), (12, 160.0, 120.0)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
