import numpy as np
import pytest
import sympy as sp

from reggecurv import build_structured
from reggecurv.fields import X, Y, SymbolicField

UNIT = (0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def mesh2():
    return build_structured(UNIT, 2)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured(UNIT, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def conformal(amplitude=sp.Rational(1, 5)):
    phi = amplitude * sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
    return phi, SymbolicField(sp.exp(2 * phi) * sp.eye(2), (2, 2))


def brioschi(E, F, G):
    """Gaussian curvature of E dx^2 + 2F dx dy + G dy^2 (Brioschi formula), sympy."""
    Ex, Ey = sp.diff(E, X), sp.diff(E, Y)
    Fx, Fy = sp.diff(F, X), sp.diff(F, Y)
    Gx, Gy = sp.diff(G, X), sp.diff(G, Y)
    a = sp.Matrix([
        [-sp.diff(E, Y, 2) / 2 + sp.diff(F, X, Y) - sp.diff(G, X, 2) / 2, Ex / 2, Fx - Ey / 2],
        [Fy - Gx / 2, E, F],
        [Gy / 2, F, G],
    ])
    b = sp.Matrix([[0, Ey / 2, Gx / 2], [Ey / 2, E, F], [Gx / 2, F, G]])
    return (a.det() - b.det()) / (E * G - F**2) ** 2
