import warnings

import pytest

from weylrg.lattice import build_params


@pytest.fixture(scope="session")
def p_star():
    """Reference semimetal: t=1, t_perp=1/2, t'=2, r=1/2 (mu=1.75, p_F=pi/3)."""
    return build_params(1.0, 0.5, 2.0, r=0.5)


@pytest.fixture(scope="session")
def p_insulator():
    return build_params(1.0, 0.5, 2.0, r=-0.2)


@pytest.fixture(scope="session")
def p_small_r():
    """Deep two-regime point: h* = -4 at t_perp = 1/2."""
    return build_params(1.0, 0.5, 2.0, r=3.125e-4)


@pytest.fixture(autouse=True)
def _quiet_band_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield
