import numpy as np
import pytest

from ems_forge import (Direction, EmsLayout, Frequency, IncidentWave,
                       MetaAtomGeometry, SurrogateProvider, two_state_table)

F0 = 5.5e9
C0 = 299792458.0
LAMBDA0 = C0 / F0


@pytest.fixture
def f0_wave():
    return IncidentWave(Frequency(F0), Direction.from_degrees(0.0, 0.0))


@pytest.fixture
def reference_geometry():
    return MetaAtomGeometry.reference()


@pytest.fixture
def surrogate():
    return SurrogateProvider()


@pytest.fixture
def split145_provider():
    """Two-state atom with unit magnitude and the paper-style 145 deg split."""
    return two_state_table(1.0 + 0.0j, np.exp(1j * np.radians(145.0)))


@pytest.fixture
def ideal_binary_provider():
    """Ideal 1-bit atom: unit magnitude, 0/180 deg states."""
    return two_state_table(1.0 + 0.0j, -1.0 + 0.0j)


def layout_cells(P, Q, spacing_lambda=0.45):
    return EmsLayout(P, Q, spacing_lambda * LAMBDA0, spacing_lambda * LAMBDA0)
