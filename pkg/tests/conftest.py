import numpy as np
import pytest

from isogeo.bodies import make_body

CATALOG = [
    ("cube", None),
    ("ball", None),
    ("cross_polytope", None),
    ("lp_ball", 3.0),
    ("lp_ball", 1.5),
    ("simplex", None),
]
SYMMETRIC = [kp for kp in CATALOG if kp[0] != "simplex"]

_acceptance_lines = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(name, ok, detail=""):
        _acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def body_id(kp):
    kind, p = kp
    return kind if p is None else f"{kind}{p:g}"


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def cube(n):
    return make_body("cube", n)


def batch_means_se(x, batches=50):
    """Standard error of the mean of a correlated chain by batch means."""
    x = np.asarray(x, dtype=float)
    size = x.shape[0] // batches
    means = x[: size * batches].reshape(batches, size, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(batches)
