import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def sphere_directions(n, rng):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def static_scan(v, omega=(0.0, 0.0, 0.0), n=500, seed=0, sigma=0.0, r_lo=2.0, r_hi=60.0, t=0.0):
    """Points on random rays with exact static-world Doppler."""
    from doppler_odom import DopplerScan

    rng = np.random.default_rng(seed)
    u = sphere_directions(n, rng)
    p = u * rng.uniform(r_lo, r_hi, n)[:, None]
    s = -(u @ np.asarray(v, float)) - np.sum(u * np.cross(omega, p), axis=1)
    if sigma:
        s = s + rng.normal(0, sigma, n)
    return DopplerScan(t, p, u, s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
