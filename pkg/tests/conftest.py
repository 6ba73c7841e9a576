import numpy as np
import pytest

from simra.analog import ChipConfig, ChipInstance
from simra.dram import DramGeometry
from simra.engine import CommandEngine


def small_config(subarrays=3, rows=64, blocks=2, banks=4, **kw) -> ChipConfig:
    geometry = DramGeometry(banks_per_chip=banks, subarrays_per_bank=subarrays, rows_per_subarray=rows,
                            cache_blocks_per_row=blocks)
    return ChipConfig(geometry=geometry, **kw)


@pytest.fixture
def chip():
    return ChipInstance(small_config(), seed=11)


@pytest.fixture
def engine(chip):
    return CommandEngine(chip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, text = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")
