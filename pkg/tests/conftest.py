"""
Shared fixtures for the ICU-SIR test suite.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir.costs import AffineCost, MultiplicativeCost, StateProductCost
from src.icusir.params import EXAMPLE1, EpidemicParams


@pytest.fixture
def p() -> EpidemicParams:
    """Example-1 parameters (beta=1/3, gamma=1/14, abar=0.6, i*=0.056)."""
    return EXAMPLE1


@pytest.fixture
def p_lp() -> EpidemicParams:
    """Example-1 parameters with discount q = 0.1."""
    return EXAMPLE1.with_discount(0.1)


@pytest.fixture
def affine() -> AffineCost:
    return AffineCost(1.0)


@pytest.fixture
def si_cost() -> MultiplicativeCost:
    return MultiplicativeCost.si(1.0)


@pytest.fixture
def state_cost() -> StateProductCost:
    """Control-independent l1 = s * i."""
    return StateProductCost(1.0, 1, 1)
