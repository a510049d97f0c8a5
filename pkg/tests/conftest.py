from fractions import Fraction

import pytest

from perfektor.rates import (
    example_model,
    geometric_q,
    heat_bath_model,
    ising_heat_bath_spec,
    spontaneous_model,
)

Q0, QINF, RATIO = Fraction(5, 8), Fraction(1, 2), Fraction(1, 4)


@pytest.fixture(scope="session")
def em1_r3():
    return example_model(1, geometric_q(Q0, QINF, RATIO), QINF, 3)


@pytest.fixture(scope="session")
def em1_fine():
    return example_model(1, geometric_q(Q0, QINF, RATIO), QINF, 25)


@pytest.fixture(scope="session")
def em1_r3_dec(em1_r3):
    from perfektor.decompose import decompose

    return decompose(em1_r3)


@pytest.fixture(scope="session")
def hb1():
    return heat_bath_model(ising_heat_bath_spec(0.1, d=1))


@pytest.fixture(scope="session")
def spont3():
    return spontaneous_model(1, (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)))
