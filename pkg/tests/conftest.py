"""Shared fixtures: simulated samples, the bundled heart-transplant data,
and session-cached population tables (those are expensive to build, so the
same instance serves every test that needs one)."""

import pathlib

import pytest

from rankbounds import CsvSchema, dgp_spec, load_csv, population_table, simulate_dgp

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data"

STANFORD_SCHEMA = CsvSchema(
    duration="time", event="death", continuous=("age",), discrete=("transplant",)
)


@pytest.fixture(scope="session")
def stanford_sample():
    return load_csv(str(DATA_DIR / "stanford_heart.csv"), STANFORD_SCHEMA)


@pytest.fixture(scope="session")
def dgp1_sample():
    """One moderate draw from the continuous-X1 censored design (n=80)."""
    return simulate_dgp(dgp_spec("dgp1", seed=11), 80, seed=11)


@pytest.fixture(scope="session")
def dgp2_sample():
    """Heavier censoring variant, smaller n, used for engine edge cases."""
    return simulate_dgp(dgp_spec("dgp2", seed=13), 60, seed=13)


@pytest.fixture(scope="session")
def pop_tables():
    """Factory for population tables keyed by (model, support).

    Tables are built lazily at the default 20,000 draws per support point
    with seed 0 and cached for the whole session; the dense supports take
    tens of seconds each.
    """
    cache = {}

    def get(model, support):
        key = (model, support)
        if key not in cache:
            cache[key] = population_table(dgp_spec(model, support=support, seed=0))
        return cache[key]

    return get
