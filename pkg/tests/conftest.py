from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from skewmix.density import invariant_density
from skewmix.maps import ExpandingMap, FiberRotation
from skewmix.trig import TrigPoly

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def poly1(*terms) -> TrigPoly:
    """Real polynomial on T^1 from (k, a, b) triples."""
    return TrigPoly.from_real_terms([((k,), a, b) for k, a, b in terms], 1)


def coboundary_poly(tmap: ExpandingMap, c: float, u: TrigPoly) -> TrigPoly:
    return TrigPoly.constant(c, u.dim) + u - u.compose_linear(tmap.matrix)


@pytest.fixture(scope="session")
def doubling():
    return ExpandingMap.linear([[2]])


@pytest.fixture(scope="session")
def tripling():
    return ExpandingMap.linear([[3]])


@pytest.fixture(scope="session")
def diag23():
    return ExpandingMap.linear([[2, 0], [0, 3]])


@pytest.fixture(scope="session")
def perturbed():
    return ExpandingMap.perturbed(2, poly1((1, 0.0, 0.04), (2, 0.01, 0.0)))


@pytest.fixture(scope="session")
def h_perturbed(perturbed):
    return invariant_density(perturbed)


@pytest.fixture(scope="session")
def h_one(doubling):
    return invariant_density(doubling)


@pytest.fixture(scope="session")
def tau_cos():
    return FiberRotation.from_components([poly1((1, 1.0, 0.0))])


@pytest.fixture(scope="session")
def u_sin():
    """u = sin(2 pi x) / (2 pi)."""
    return poly1((1, 0.0, 1.0 / (2 * np.pi)))


@pytest.fixture(scope="session")
def tau_cob(doubling, u_sin):
    return FiberRotation.from_components([coboundary_poly(doubling, 0.3, u_sin)])


@pytest.fixture(scope="session")
def tau_sqrt3():
    t1 = poly1((1, 1.0, 0.0))
    return FiberRotation.from_components([t1, t1.scale(np.sqrt(3.0))])
