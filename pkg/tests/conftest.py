import numpy as np
import pytest

from qkdpost.budget import KeyPool, ProtocolParams
from qkdpost.channel import ChannelModel
from qkdpost.gf2core import BitString
from qkdpost.planner import optimize_plan


@pytest.fixture(scope="session")
def desk_params():
    return ProtocolParams(N=10**8, eta=1e-3, e_bx_cal=0.04, e_bz_cal=0.04, eps_target=1e-7, p_x=0.84,
                          f_model=1.2)


@pytest.fixture(scope="session")
def desk_model():
    return ChannelModel(eta=1e-3, qber_x=0.04, qber_z=0.04, double_click_prob=0.001, seed=7)


@pytest.fixture(scope="session")
def desk_plan(desk_params):
    return optimize_plan(desk_params, optimize_q=False)


@pytest.fixture(scope="session")
def make_pools():
    def make(n_bits=200_000, seed=0):
        bits = BitString.random(n_bits, np.random.default_rng(seed))
        return KeyPool(bits), KeyPool(bits)

    return make


_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
