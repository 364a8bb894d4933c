"""Shared fixtures and the single-mode flat test harness."""

import numpy as np
import pytest

from frsde.fracop import FracOperator, SpaceConfig


def flat_harness(lam: float = 1.0, n_quad: int = 8, p: float = 4.0) -> FracOperator:
    """One-mode operator whose basis function is identically 1 on the unit
    interval, with unit mass.  Closed forms for norms and projections become
    trivial, which makes scheme arithmetic directly checkable.
    """
    gx, gw = np.polynomial.legendre.leggauss(n_quad)
    x = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    return FracOperator(
        mode="SpectralPower",
        space=SpaceConfig(0.0, 1.0, N=2, s=0.5, p=p),
        stiffness=np.array([[lam]]),
        mass=np.array([[1.0]]),
        eigenvalues=np.array([lam]),
        eigenvectors=np.array([[1.0]]),
        gagliardo_const=0.0,
        quad_x=x,
        quad_w=w,
        basis_at_quad=np.ones((n_quad, 1)),
        eigen_at_quad=np.ones((n_quad, 1)),
    )


@pytest.fixture
def unit_mode():
    return flat_harness()
