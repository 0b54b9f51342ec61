import numpy as np
import pytest

from snscl.autodiff import Tensor


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


def check_grad(build, *arrays, h=1e-5):
    """Compare autodiff gradients of ``build(*tensors)`` against central differences.

    Returns the worst relative error over all inputs.
    """
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = build(*leaves)
    out.backward()
    worst = 0.0
    for k, leaf in enumerate(leaves):
        def f(v, k=k):
            args = [Tensor(np.array(a, dtype=np.float64)) for a in arrays]
            args[k] = Tensor(v)
            return build(*args).item()

        num = numeric_grad(f, arrays[k], h)
        ana = leaf.grad if leaf.grad is not None else np.zeros_like(num)
        worst = max(worst, rel_err(ana, num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[str, str] = {}


def report(criterion: str, ok: bool, detail: str) -> None:
    """Record one acceptance line; printed at the end of the session."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip('ab')), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
