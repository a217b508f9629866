import numpy as np
import pytest

from hrpareto import validate_hr
from hrpareto.core import complement_basis


def random_hr(rng, d, alpha=None, scale=1.0):
    """Random valid (Q, l): Q = U A U^T with A positive definite on the complement."""
    U = complement_basis(d)
    B = rng.normal(size=(d - 1, d - 1))
    A = scale * (B @ B.T / d + 0.5 * np.eye(d - 1))
    Q = U @ A @ U.T
    alpha = rng.uniform(0.5, 2.0) if alpha is None else alpha
    w = rng.dirichlet(np.full(d, 4.0))
    return validate_hr(Q, -alpha * w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def example_hr():
    return validate_hr([[1.0, -1.0], [-1.0, 1.0]], [-0.5, -0.5])


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.getreports(outcome):
            props = dict(rep.user_properties)
            if "criterion" not in props or (rep.when != "call" and rep.passed):
                continue
            num, title = props["criterion"]
            verdict = "PASS" if rep.passed else "FAIL"
            lines.append((num, f"criterion {num:>2} {verdict}  {title}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line.rstrip())


@pytest.fixture
def criterion(request, record_property):
    """Registers the acceptance criterion of a test and returns a detail recorder."""
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", marker.args)

    def detail(text):
        record_property("detail", text)
        print(f"criterion {marker.args[0]}: {text}")

    return detail
