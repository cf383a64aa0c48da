import numpy as np
import pytest

from netfdm.networks import WeightsMatrix
from netfdm.sar import IDENTITY, NoiseModel, SarSpec


@pytest.fixture
def three_cycle():
    w = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    return WeightsMatrix(3, w, normalized=True, provenance={"model": "3-cycle"})


@pytest.fixture
def three_cycle_spec(three_cycle):
    return SarSpec(three_cycle, IDENTITY, 0.5, NoiseModel("gaussian", (1.0,)))
