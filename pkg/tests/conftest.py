import pytest

from antonov.steady_state import (
    DistributionFunction,
    SteadyState,
    harmonic_potential,
    isochrone_potential,
    kepler_potential,
    plummer_potential,
    solve_equilibrium,
)
from antonov.response import build_frequency_map


@pytest.fixture(scope="session")
def kepler_state():
    return SteadyState.vacuum(kepler_potential())


@pytest.fixture(scope="session")
def harmonic_state():
    return SteadyState.vacuum(harmonic_potential(1.0, -10.0))


@pytest.fixture(scope="session")
def isochrone_state():
    return SteadyState.vacuum(isochrone_potential(1.0))


@pytest.fixture(scope="session")
def poly1():
    """Solved n = 1 polytrope, the workhorse fixture."""
    df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
    return solve_equilibrium(df, y_central=1.0)


@pytest.fixture(scope="session")
def poly05():
    df = DistributionFunction(kind="polytrope", n=0.5, amplitude=1.0, E0=0.0)
    return solve_equilibrium(df, y_central=1.0)


@pytest.fixture(scope="session")
def poly2():
    df = DistributionFunction(kind="polytrope", n=2.0, amplitude=1.0, E0=0.0)
    return solve_equilibrium(df, y_central=0.8)


@pytest.fixture(scope="session")
def weak_plummer():
    """Shallow kinetic component in a Plummer background (trace bound < 1)."""
    df = DistributionFunction(kind="polytrope", n=1.0, amplitude=0.015, E0=0.0)
    return solve_equilibrium(df, ext=plummer_potential(1.0, 1.0), y_central=0.3)


@pytest.fixture(scope="session")
def fm_poly1(poly1):
    return build_frequency_map(poly1, (24, 18))


@pytest.fixture(scope="session")
def fm_poly1_tiny(poly1):
    return build_frequency_map(poly1, (8, 8))
