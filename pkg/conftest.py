import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from purcell import DesignParams, DragModel, optimal_design  # noqa: E402


@pytest.fixture
def drag():
    return DragModel(1.0, 2.0)


@pytest.fixture
def optimal_params(drag):
    best = optimal_design(4.0)
    return DesignParams(best.L, best.L2, drag)


@pytest.fixture
def purcell_params(drag):
    return DesignParams(1.0, 2.0, drag)
