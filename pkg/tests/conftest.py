import numpy as np
import pytest

from flowsculpt.dit.model import DiTConfig, VelocityTransformer
from flowsculpt.synth.portrait import render_portrait


@pytest.fixture(scope="session")
def dit():
    """The frozen default velocity model, shared across the whole run."""
    return VelocityTransformer(DiTConfig())


@pytest.fixture(scope="session")
def portrait():
    return render_portrait(21)


@pytest.fixture(scope="session")
def lips_mask(portrait):
    lips = (
        portrait.regions["lip_upper"]
        | portrait.regions["lip_lower"]
        | portrait.regions["mouth"]
    )
    return lips.astype(np.float64)
