"""Shared fixtures: the standard families and a clean configuration per test."""

import pytest

from src.config import config
from src.core.family import FamilySpec
from src.core.numerics import Tolerance


@pytest.fixture(autouse=True)
def default_settings():
    config.reset_to_defaults()
    yield
    config.reset_to_defaults()


@pytest.fixture
def tolerance():
    return Tolerance()


@pytest.fixture
def legendre():
    """y^2 = x (x - 1) (x - lam), punctures 0 and 1."""
    return FamilySpec.from_dict({"factors": ["lam"], "base": {"basepoint": [0.5, 0.5]}})


@pytest.fixture
def fiber_product():
    """Legendre factors lam and 2 - lam, punctures 0, 1 and 2."""
    return FamilySpec.from_dict({"factors": ["lam", "2 - lam"], "base": {"basepoint": [0.5, 1.0]}})


@pytest.fixture
def square_root_cover():
    """Legendre family pulled back to mu^2 = 2 - lam."""
    return FamilySpec.from_dict({
        "factors": ["lam"],
        "base": {"basepoint": [0.5, 0.5]},
        "cover": {"variables": ["mu"], "equations": ["mu**2 - (2 - lam)"], "degree": 2},
    })
