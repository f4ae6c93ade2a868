import pytest

from wavedet.experiment import ExperimentConfig, calibrate_max_threshold


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def base_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def max_d4(base_config):
    """Max-Detector on d4 calibrated with the default 10^6 noise-only trials."""
    return calibrate_max_threshold(base_config, 4)
