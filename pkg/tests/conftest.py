import sys
import numpy as np
import pytest

from okoc.kernels import Family, KernelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ALL_FAMILIES = [Family.GAUSSIAN, Family.WENDLAND_C2, Family.WENDLAND_C4]


def kernel(family, dim, scale=1.0):
    return KernelConfig(family, dim, shape=scale, support_radius=scale)


def make_spec(dynamics, running="0", terminal="0", n=1, m=1, T=1.0, x0=(1.0,), X=None, U=None, families=("gaussian",) * 3, scale=1.0):
    from okoc import exprlang
    from okoc.assembly import Box, ProblemSpec

    X = Box(*(X or ((-2.0,) * n, (2.0,) * n)))
    Ub = Box(*(U or ((-1.0,) * m, (1.0,) * m))) if m else None
    kS, kSig, kD = (KernelConfig(fam, d, shape=scale, support_radius=scale) for fam, d in zip(families, (1 + n + m, 1 + n, n)))
    return ProblemSpec(
        n, m, T, tuple(x0), X, Ub, X,
        tuple(exprlang.parse(s, n, m) for s in dynamics),
        exprlang.parse(running, n, m),
        exprlang.parse(terminal, n, 0),
        kS, kSig, kD,
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "LINES", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[num])
