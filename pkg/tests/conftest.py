import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted(rng, m, n, k, noise=0.0, density=0.3):
    """Sparse non-negative W (every row covered) times dense H."""
    W = rng.random((m, k)) * (rng.random((m, k)) < density)
    W[np.arange(m), rng.integers(0, k, m)] += rng.uniform(0.5, 1.5, m)
    H = rng.random((k, n))
    X = W @ H
    if noise:
        X = np.maximum(X + noise * np.sqrt(np.mean(X**2)) * rng.standard_normal(X.shape), 0)
    return X, W, H


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
