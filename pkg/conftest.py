from fractions import Fraction
from pathlib import Path

import pytest

from config import Settings
from market_model import Claim, derive_delayed_view, read_claim, read_market

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def exact_settings() -> Settings:
    return Settings(mode="exact")


@pytest.fixture
def binomial():
    return read_market(FIXTURES / "binomial_market.json")


@pytest.fixture
def binomial_view(binomial):
    return derive_delayed_view(binomial)


@pytest.fixture
def binomial_call(binomial):
    return read_claim(FIXTURES / "binomial_call.json", binomial)


@pytest.fixture
def two_period():
    return read_market(FIXTURES / "two_period_market.json")


@pytest.fixture
def two_period_call(two_period):
    return read_claim(FIXTURES / "two_period_call.json", two_period)


@pytest.fixture
def chain():
    return read_market(FIXTURES / "chain_market.json")


@pytest.fixture
def chain_claim(chain):
    return Claim(values={"c4": Fraction(5)})


@pytest.fixture
def dominant():
    return read_market(FIXTURES / "dominant_market.json")
