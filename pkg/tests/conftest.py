import numpy as np
import pytest

from scanres.metrics import _gaussian_kernel1d, _smooth_replicate
from scanres.raster import GrayImage


def random_gray(rng, h, w, dpi=300):
    return GrayImage(rng.integers(0, 256, (h, w), dtype=np.uint8), dpi)


def textured_gray(seed, size=48, sigma=1.2, dpi=300):
    """Smoothed noise texture; behaves like scanned photo content."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 255, (size, size))
    x = _smooth_replicate(x, _gaussian_kernel1d(sigma, max(2, int(3 * sigma))))
    x = 20 + (x - x.min()) / max(float(np.ptp(x)), 1e-9) * 215
    return GrayImage(np.floor(x + 0.5).astype(np.uint8), dpi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_acceptance_results = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in item.nodeid:
        name = item.name.replace("test_", "", 1)
        _acceptance_results.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
