import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from qgcyl.geometry import (DiskBasis, DomainSpec, GeometryError, RectangleBasis, VerticalBasis, bessel_zeros,
                            build_basis, cgl_nodes, clenshaw_curtis_weights, lagrange_matrix)


def test_domain_rejects_bad_height():
    with pytest.raises(GeometryError, match="height"):
        DomainSpec(height=-1.0)


def test_domain_rejects_stratification_outside_bounds():
    with pytest.raises(GeometryError, match="ellipticity"):
        DomainSpec(stratification=lambda z: 0.01 + 0 * z, Lambda_bound=10.0)


def test_variable_stratification_profile_and_derivative():
    d = DomainSpec(stratification=lambda z: 1.0 + 0.5 * np.sin(np.pi * z))
    z = np.linspace(0, 1, 7)
    assert np.allclose(d.lam(z), 1.0 + 0.5 * np.sin(np.pi * z), atol=1e-12)
    assert np.allclose(d.dlam(z), 0.5 * np.pi * np.cos(np.pi * z), atol=1e-10)
    assert not d.lambda_is_constant


def test_bessel_zeros_match_scipy():
    for m in (0, 1, 5):
        z = bessel_zeros(m, 40.0)
        ref = special.jn_zeros(m, len(z))
        assert np.allclose(z, ref, rtol=0, atol=1e-12)


def test_rectangle_eigenvalues_and_means():
    d = DomainSpec(Lx=2.0, Ly=1.0)
    hb = RectangleBasis(d, (4, 3))
    lam = (np.pi * hb.jj / 2.0) ** 2 + (np.pi * hb.kk / 1.0) ** 2
    assert np.allclose(hb.eigenvalues, lam)
    assert np.all(np.diff(hb.eigenvalues) >= -1e-12)
    # numerical mean of each mode on a fine grid
    x = np.linspace(0, 2, 2001)
    y = np.linspace(0, 1, 1001)
    X, Y = np.meshgrid(x, y)
    for n in range(hb.N):
        e = hb.evaluate_points(np.eye(hb.N)[n], X.ravel(), Y.ravel()).reshape(X.shape)
        assert np.trapezoid(np.trapezoid(e, x, axis=1), y) == pytest.approx(hb.means[n], abs=1e-5)


def test_rectangle_analyze_inverts_synthesize():
    hb = RectangleBasis(DomainSpec(), (6, 5))
    a = np.random.default_rng(0).standard_normal(hb.N)
    assert np.allclose(hb.analyze(hb.synthesize(a)), a, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(-2, 2))
def test_rectangle_integral_exact_on_constant_plus_modes(coeffs, c):
    hb = RectangleBasis(DomainSpec(), (4, 2))
    a = np.array(coeffs)
    vals = c + hb.synthesize(a)
    assert hb.integrate(vals) == pytest.approx(c * hb.area + a @ hb.means, abs=1e-11)


def test_rectangle_integer_mode_count_picks_lowest():
    hb = RectangleBasis(DomainSpec(), 10)
    assert hb.N == 10
    full = RectangleBasis(DomainSpec(), (6, 6))
    assert np.allclose(hb.eigenvalues, np.sort(full.eigenvalues)[:10])


def test_rectangle_underresolved_grid_rejected():
    with pytest.raises(GeometryError, match="under-resolved"):
        RectangleBasis(DomainSpec(), (8, 8), grid_resolution=10)


def test_disk_modes_orthonormal_and_eigen():
    hb = DiskBasis(DomainSpec(shape="disk", R=1.3), 20)
    G = (hb._E * hb.weights.ravel()) @ hb._E.T
    assert np.allclose(G, np.eye(hb.N), atol=1e-11)
    assert np.allclose(np.sqrt(hb.eigenvalues) * 1.3, hb.zeros)
    # mean of m = 0 modes
    ones = np.ones(hb.grid_shape)
    assert np.allclose(hb.analyze(ones), hb.means, atol=1e-12)


def test_disk_laplacian_by_finite_differences():
    hb = DiskBasis(DomainSpec(shape="disk"), 12)
    x0, y0, h = 0.31, -0.22, 1e-3
    pts = np.array([[x0, y0], [x0 + h, y0], [x0 - h, y0], [x0, y0 + h], [x0, y0 - h]])
    for n in range(hb.N):
        v = hb.evaluate_points(np.eye(hb.N)[n], pts[:, 0], pts[:, 1])
        lap = (v[1] + v[2] + v[3] + v[4] - 4 * v[0]) / h**2
        assert lap == pytest.approx(-hb.eigenvalues[n] * v[0], abs=2e-4 * (1 + hb.eigenvalues[n]))


def test_cgl_clenshaw_curtis_exact_on_polynomials():
    z = cgl_nodes(9, 2.0)
    w = clenshaw_curtis_weights(9, 2.0)
    for p in range(9):
        assert w @ z**p == pytest.approx(2.0 ** (p + 1) / (p + 1), rel=1e-13)


def test_lagrange_matrix_reproduces_nodes_and_polynomials():
    z = cgl_nodes(6, 1.0)
    assert np.allclose(lagrange_matrix(z, z), np.eye(7))
    pts = np.linspace(0, 1, 11)
    assert np.allclose(lagrange_matrix(z, pts) @ z**5, pts**5, atol=1e-13)


@pytest.mark.parametrize("kind", ["legendre", "cosine"])
def test_vertical_matrices(kind):
    d = DomainSpec(height=1.5)
    vb = VerticalBasis(d, 6, kind)
    # mass and stiffness against brute-force quadrature
    z = np.linspace(0, 1.5, 20001)
    P = vb.eval(z)
    D = vb.eval(z, 1)
    C = np.trapezoid(P[:, :, None] * P[:, None, :], z, axis=0)
    S = np.trapezoid(D[:, :, None] * D[:, None, :], z, axis=0)
    assert np.allclose(vb.C, C, atol=1e-7)
    assert np.allclose(vb.S, S, atol=1e-6)
    assert vb.S_error < 1e-10


def test_vertical_stiffness_closed_form_for_constant_lambda():
    vb = VerticalBasis(DomainSpec(stratification=2.0), 8)
    assert np.allclose(2.0 * vb.stiffness_closed_form(), vb.S, atol=1e-12)


def test_build_basis_shapes():
    hb, vb = build_basis(DomainSpec(), (3, 3), 4)
    assert hb.N == 9 and vb.M == 4 and vb.n_levels == 5
