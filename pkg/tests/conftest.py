from fractions import Fraction

import pytest

from ammflow.amm import AssetId, NumericMode, PoolState

TOKA = AssetId("TOKA", 18)
TOKB = AssetId("TOKB", 18)


def make_pool(pool_id, r0, r1, fee_bps=0, mode=NumericMode.RATIONAL):
    return PoolState(pool_id, TOKA, TOKB, r0, r1, fee_bps, mode)


@pytest.fixture
def sym_pool():
    """The symmetric 100/100 zero-fee fixture pool."""
    return make_pool("pool1", Fraction(100), Fraction(100))


@pytest.fixture
def sym_pools(sym_pool):
    return sym_pool, make_pool("pool2", Fraction(100), Fraction(100))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # surface the one-line acceptance verdicts even when capture is on
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
