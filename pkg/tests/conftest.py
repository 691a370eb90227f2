import numpy as np
import pytest

from qhinf.cli import cavity_plant
from qhinf.qmodel import (
    OpenPlant,
    UncertaintyModel,
    canonical_theta,
)


@pytest.fixture
def cavity():
    return cavity_plant()


@pytest.fixture
def cavity_nominal():
    return cavity_plant(uncertain=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_plant(
    rng: np.random.Generator,
    n: int = 4,
    n_v: int = 2,
    n_w: int = 2,
    n_u: int = 2,
    n_z: int = 2,
    n_y: int = 2,
    m: int = 2,
) -> OpenPlant:
    """Dimensionally consistent plant with generic entries (not realizable)."""
    return OpenPlant(
        A=rng.standard_normal((n, n)),
        B0=rng.standard_normal((n, n_v)),
        B1=rng.standard_normal((n, n_w)),
        B2=rng.standard_normal((n, n_u)),
        C1=rng.standard_normal((n_z, n)),
        D12=rng.standard_normal((n_z, n_u)),
        C2=rng.standard_normal((n_y, n)),
        D20=rng.standard_normal((n_y, n_v)),
        D21=rng.standard_normal((n_y, n_w)),
        theta=canonical_theta(n),
        uncertainty=UncertaintyModel(rng.standard_normal((m, n))),
    )
