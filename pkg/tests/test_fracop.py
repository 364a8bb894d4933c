"""Tests for operator assembly, eigendecompositions, and discrete norms."""

import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from frsde.fracop import (
    SpaceConfig,
    assemble_integral_operator,
    assemble_spectral_operator,
    gagliardo_constant,
    norms,
)

mp.mp.dps = 40


def fourier_side_entry(d, s, h):
    """Stiffness entry for hat functions at offset d, computed from the
    Fourier symbol instead of the real-space double integral.

    The hat transform gives A_d = (2^(1+2s) h^(1-2s) / pi) * I(d, s) with
    I = int_0^inf t^(2s) sinc^4(t) cos(2dt) dt.  Expanding sin^4 into
    cosines turns I into a finite combination of Mellin transforms of
    cos(w t), each equal to Gamma(a) cos(pi a / 2) / w^a with a = 2s - 3.
    Scaleless w = 0 terms drop out, and the Gamma pole at a = -2 cancels
    because the cosine coefficients annihilate w^2.
    """
    a = mp.mpf(2 * s) - 3
    terms = [
        (mp.mpf(3) / 8, 2 * d),
        (mp.mpf(-1) / 4, 2 * d + 2),
        (mp.mpf(-1) / 4, abs(2 * d - 2)),
        (mp.mpf(1) / 16, 2 * d + 4),
        (mp.mpf(1) / 16, abs(2 * d - 4)),
    ]
    live = [(c, w) for c, w in terms if w > 0]
    if abs(float(a) + 2) < 1e-12:
        val = mp.mpf(1) / 2 * mp.fsum(c * w**2 * mp.log(w) for c, w in live)
    else:
        val = mp.gamma(a) * mp.cos(mp.pi * a / 2) * mp.fsum(
            c * mp.mpf(w) ** (-a) for c, w in live
        )
    return float(2 ** (1 + 2 * s) * mp.mpf(h) ** (1 - 2 * s) / mp.pi * val)


class TestGagliardoConstant:
    def test_known_values(self):
        assert gagliardo_constant(1, 0.5) == pytest.approx(1.0 / math.pi, rel=1e-12)
        assert gagliardo_constant(2, 0.5) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)
        expected = 0.25 * 4.0**0.25 / math.sqrt(math.pi)
        assert gagliardo_constant(1, 0.25) == pytest.approx(expected, rel=1e-12)

    def test_matches_high_precision_gamma(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            s = float(rng.uniform(0.05, 0.95))
            ref = (
                mp.mpf(s)
                * mp.mpf(4) ** s
                * mp.gamma((n + 2 * mp.mpf(s)) / 2)
                / (mp.pi ** (mp.mpf(n) / 2) * mp.gamma(1 - mp.mpf(s)))
            )
            assert gagliardo_constant(n, s) == pytest.approx(float(ref), rel=1e-12)

    def test_rejects_order_outside_open_interval(self):
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                gagliardo_constant(1, bad)


class TestSpaceConfig:
    def test_mesh_geometry(self):
        cfg = SpaceConfig(0.0, 2.0, N=3, s=0.5, p=4.0)
        assert cfg.h == pytest.approx(0.5)
        assert cfg.length == pytest.approx(2.0)
        np.testing.assert_allclose(cfg.nodes, [0.5, 1.0, 1.5])

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            SpaceConfig(1.0, 0.0, N=8, s=0.5, p=4.0)
        with pytest.raises(ValueError):
            SpaceConfig(0.0, 1.0, N=1, s=0.5, p=4.0)
        with pytest.raises(ValueError):
            SpaceConfig(0.0, 1.0, N=8, s=1.2, p=4.0)
        with pytest.raises(ValueError):
            SpaceConfig(0.0, 1.0, N=8, s=0.5, p=2.0)


@pytest.fixture(scope="module")
def spectral_op():
    return assemble_spectral_operator(SpaceConfig(0.0, 1.0, N=31, s=0.5, p=4.0))


@pytest.fixture(scope="module")
def integral_op():
    return assemble_integral_operator(SpaceConfig(0.0, 1.0, N=16, s=0.6, p=4.0))


@pytest.fixture(scope="module")
def norm_op():
    return assemble_spectral_operator(SpaceConfig(0.0, 1.0, N=63, s=0.5, p=4.0))


class TestSpectralOperator:
    @pytest.fixture
    def op(self, spectral_op):
        return spectral_op

    def test_first_eigenvalue_is_pi(self, op):
        # (1 * pi / 1) ** (2 * 0.5) is exactly pi in floating point
        assert op.eigenvalues[0] == math.pi

    def test_fourth_eigenvalue(self, op):
        assert op.eigenvalues[3] == pytest.approx(4.0 * math.pi, rel=1e-14)

    def test_mass_orthonormal_basis(self, op):
        gram = op.eigenvectors.T @ op.mass @ op.eigenvectors
        assert np.max(np.abs(gram - np.eye(op.dim))) <= 1e-10

    def test_eigen_residual(self, op):
        resid = op.stiffness @ op.eigenvectors - op.mass @ op.eigenvectors * op.eigenvalues
        scale = np.abs(op.eigenvalues) * np.linalg.norm(op.mass @ op.eigenvectors, axis=0)
        assert np.max(np.linalg.norm(resid, axis=0) / scale) <= 1e-8

    def test_eigenvalues_increase_with_order(self):
        lo = assemble_spectral_operator(SpaceConfig(0.0, 1.0, N=15, s=0.3, p=4.0))
        hi = assemble_spectral_operator(SpaceConfig(0.0, 1.0, N=15, s=0.7, p=4.0))
        # every continuous frequency k*pi exceeds 1 on the unit interval,
        # so raising the exponent raises every eigenvalue
        assert np.all(hi.eigenvalues > lo.eigenvalues)

    def test_parseval(self, op):
        rng = np.random.default_rng(11)
        z = rng.standard_normal(op.dim)
        c = op.nodal_to_eigen(z)
        assert float(z @ op.mass @ z) == pytest.approx(float(np.sum(c * c)), rel=1e-10)

    def test_roundtrip_through_eigenbasis(self, op):
        rng = np.random.default_rng(12)
        z = rng.standard_normal(op.dim)
        back = op.eigen_to_nodal(op.nodal_to_eigen(z))
        np.testing.assert_allclose(back, z, atol=1e-10)

    def test_sine_mode_norms(self, op):
        z = np.sin(math.pi * op.space.nodes)
        # discrete orthogonality of the sine samples makes both exact
        assert norms(op, z, "H") == pytest.approx(math.sqrt(0.5), rel=1e-12)
        assert norms(op, z, "V1") == pytest.approx(math.sqrt(math.pi / 2.0), rel=1e-10)


class TestIntegralOperator:
    @pytest.fixture
    def op(self, integral_op):
        return integral_op

    def test_symmetric_toeplitz(self, op):
        A = op.stiffness
        assert np.array_equal(A, A.T)
        first = A[0]
        for i in range(1, op.dim):
            np.testing.assert_allclose(A[i, i:], first[: op.dim - i], rtol=1e-14)

    def test_positive_definite(self, op):
        eigs = np.linalg.eigvalsh(op.stiffness)
        assert eigs.min() > 0.0

    def test_two_node_mesh(self):
        small = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=2, s=0.4, p=4.0))
        A = small.stiffness
        assert A.shape == (2, 2)
        assert A[0, 1] == A[1, 0]
        assert A[0, 0] > 0.0 and A[1, 1] > 0.0

    def test_single_hat_has_positive_energy(self, op):
        for i in (0, op.dim // 2, op.dim - 1):
            e = np.zeros(op.dim)
            e[i] = 1.0
            assert float(e @ op.stiffness @ e) > 0.0

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_entries_match_fourier_oracle(self, s):
        cfg = SpaceConfig(0.0, 1.0, N=16, s=s, p=4.0)
        op = assemble_integral_operator(cfg)
        for d in range(op.dim):
            ref = fourier_side_entry(d, s, cfg.h)
            assert op.stiffness[0, d] == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_mesh_scaling(self):
        s = 0.35
        coarse = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=15, s=s, p=4.0))
        fine = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=31, s=s, p=4.0))
        ratio = (coarse.space.h / fine.space.h) ** (1.0 - 2.0 * s)
        for d in range(8):
            assert coarse.stiffness[0, d] / fine.stiffness[0, d] == pytest.approx(
                ratio, rel=1e-12
            )

    def test_translation_invariance(self):
        base = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=12, s=0.5, p=4.0))
        moved = assemble_integral_operator(SpaceConfig(5.0, 6.0, N=12, s=0.5, p=4.0))
        np.testing.assert_allclose(moved.stiffness, base.stiffness, rtol=1e-14)

    def test_near_local_limit_recovers_classical_stencil(self):
        cfg = SpaceConfig(0.0, 1.0, N=31, s=0.999, p=4.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            op = assemble_integral_operator(cfg)
        assert op.stiffness[0, 0] * cfg.h == pytest.approx(2.0, rel=0.02)
        assert op.stiffness[0, 1] * cfg.h == pytest.approx(-1.0, rel=0.02)

    def test_guard_band_warning(self):
        with pytest.warns(UserWarning):
            flagged = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=8, s=0.02, p=4.0))
        assert flagged.warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            clean = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=8, s=0.5, p=4.0))
        assert not clean.warnings

    def test_assembly_error_estimate_is_tiny(self, op):
        assert 0.0 <= op.assembly_error_estimate <= 1e-9

    def test_generalized_eigenpairs(self, op):
        gram = op.eigenvectors.T @ op.mass @ op.eigenvectors
        assert np.max(np.abs(gram - np.eye(op.dim))) <= 1e-10
        resid = op.stiffness @ op.eigenvectors - op.mass @ op.eigenvectors * op.eigenvalues
        scale = np.abs(op.eigenvalues) * np.linalg.norm(op.mass @ op.eigenvectors, axis=0)
        assert np.max(np.linalg.norm(resid, axis=0) / scale) <= 1e-8

    def test_smallest_eigenvalue_mesh_cauchy(self):
        lam = []
        for n in (64, 128):
            op = assemble_integral_operator(SpaceConfig(0.0, 1.0, N=n, s=0.5, p=4.0))
            lam.append(op.eigenvalues[0])
        assert abs(lam[1] - lam[0]) / lam[1] < 0.01


class TestNorms:
    @pytest.fixture
    def op(self, norm_op):
        return norm_op

    def test_lp_norm_of_sine_is_exact(self, op):
        z = np.sin(math.pi * op.space.nodes)
        # sum of sin^4 over a full period of equispaced samples is exact
        assert norms(op, z, "V2", p=4.0) == pytest.approx(0.375**0.25, rel=1e-12)

    def test_lp_norm_homogeneous(self, op):
        rng = np.random.default_rng(3)
        z = rng.standard_normal(op.dim)
        assert norms(op, 2.5 * z, "V2", p=4.0) == pytest.approx(
            2.5 * norms(op, z, "V2", p=4.0), rel=1e-12
        )

    def test_holder_pairing(self, op):
        rng = np.random.default_rng(4)
        z = rng.standard_normal(op.dim)
        lhs = norms(op, z, "H") ** 2
        rhs = norms(op, z, "V2", p=4.0) * norms(op, z, "V2dual", p=4.0)
        assert lhs <= rhs * (1.0 + 1e-12)

    def test_quadratic_exponent_collapses_to_h(self, op):
        rng = np.random.default_rng(5)
        z = rng.standard_normal(op.dim)
        assert norms(op, z, "V2", p=2.0) == pytest.approx(norms(op, z, "H"), rel=1e-10)

    def test_dual_seminorm_from_eigen_coefficients(self, op):
        rng = np.random.default_rng(6)
        c = rng.standard_normal(op.dim)
        z = op.eigen_to_nodal(c)
        expected = math.sqrt(float(np.sum(c * c / (1.0 + op.eigenvalues))))
        assert norms(op, z, "V1dual") == pytest.approx(expected, rel=1e-10)
        assert norms(op, np.zeros(op.dim), "V1dual") == 0.0

    def test_exponent_defaults_to_space_setting(self, op):
        rng = np.random.default_rng(8)
        z = rng.standard_normal(op.dim)
        assert norms(op, z, "V2") == norms(op, z, "V2", p=op.space.p)

    def test_rejects_bad_requests(self, op):
        z = np.zeros(op.dim)
        with pytest.raises(ValueError):
            norms(op, z, "V2", p=1.0)
        with pytest.raises(ValueError):
            norms(op, z[:-1], "H")
        with pytest.raises(ValueError):
            norms(op, z, "W1")
