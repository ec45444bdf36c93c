import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from igchaos.errors import DomainError, SingularMetricError, UnsupportedError
from igchaos.geometry import (
    FDPolicy, Reparametrization, analytic_metric, christoffel, curvature, curvature_report,
    euclidean_metric, explicit_metric, fisher_metric, identity_reparametrization,
    killing_residual, log_reparametrization, orthonormal_frame, pullback_metric,
    quadrature_metric, sectional_curvature, wigner_dyson_reparametrization,
)
from igchaos.models import (
    Brody, ChaoticComposite, CorrelatedGaussian, Exponential, Gaussian, GaussianProduct,
    IntegrableComposite, Weibull, WignerDyson, power_map, pushforward, random_point,
)

CLOSED_FORM = [Gaussian(), GaussianProduct(1), CorrelatedGaussian(0.0), CorrelatedGaussian(0.6),
               Exponential(), Weibull(0.8), Weibull(3.0), WignerDyson(), IntegrableComposite(),
               ChaoticComposite()]


def gaussian_block_fd():
    """Gaussian half-plane metric with no exact derivatives (exercises the FD path)."""
    return explicit_metric(lambda x: np.diag([1 / x[1] ** 2, 2 / x[1] ** 2]), 2,
                           [-np.inf, 0.0], [np.inf, np.inf], "gaussian block", diagonal=True)


def test_correlated_r_values_are_rejected_near_one():
    with pytest.raises(DomainError):
        CorrelatedGaussian(-0.9995)


# fisher_metric

def test_fisher_gaussian():
    g = fisher_metric(Gaussian(), [0.7, 1.0]).matrix
    np.testing.assert_allclose(g, np.diag([1.0, 2.0]), atol=1e-10)


def test_fisher_exponential():
    assert fisher_metric(Exponential(), [2.0]).matrix[0, 0] == pytest.approx(0.25, abs=1e-10)


def test_fisher_wigner_dyson():
    assert fisher_metric(WignerDyson(), [1.0]).matrix[0, 0] == pytest.approx(4.0, abs=1e-9)


def test_fisher_equals_score_covariance_monte_carlo():
    from igchaos.models import sample
    x = sample(ChaoticComposite(), [1.2, 0.3, 0.8], seed=3, count=200_000)
    s = ChaoticComposite().scores([1.2, 0.3, 0.8], x)
    g = fisher_metric(ChaoticComposite(), [1.2, 0.3, 0.8]).matrix
    np.testing.assert_allclose(np.cov(s.T), g, atol=0.05 * np.max(g))


def test_fisher_brody_positive():
    g = fisher_metric(Brody(), [0.5]).matrix
    assert g[0, 0] > 0


# analytic_metric

def test_analytic_correlated_r0_is_diagonal():
    g = analytic_metric(CorrelatedGaussian(0.0))([0.0, 1.3, 0.5, 0.7]).matrix
    assert np.count_nonzero(g - np.diag(np.diag(g))) == 0


def test_analytic_integrable():
    g = analytic_metric(IntegrableComposite())([2.0, 5.0]).matrix
    np.testing.assert_allclose(g, np.diag([1 / 4, 1 / 25]), rtol=1e-15)


def test_analytic_chaotic():
    g = analytic_metric(ChaoticComposite())([2.0, -1.0, 0.5]).matrix
    np.testing.assert_allclose(g, np.diag([4 / 4, 1 / 0.25, 2 / 0.25]), rtol=1e-15)


def test_analytic_unsupported():
    with pytest.raises(UnsupportedError):
        analytic_metric(Brody())


@pytest.mark.parametrize("family", CLOSED_FORM, ids=repr)
def test_analytic_matches_quadrature(family):
    rng = np.random.default_rng(21)
    field = analytic_metric(family)
    for _ in range(10):
        theta = random_point(family, rng)
        np.testing.assert_allclose(fisher_metric(family, theta).matrix, field(theta).matrix,
                                   atol=1e-6, rtol=0)


@pytest.mark.parametrize("family", CLOSED_FORM, ids=repr)
def test_exact_derivatives_match_finite_differences(family):
    field = analytic_metric(family)
    theta = random_point(family, np.random.default_rng(1)).as_array()
    dg = field.derivative(theta)
    d2g = field.second_derivative(theta)
    for k in range(theta.size):
        h = 1e-5 * max(1.0, abs(theta[k]))
        e = np.zeros_like(theta)
        e[k] = h
        fd = (field.matrix(theta + e) - field.matrix(theta - e)) / (2 * h)
        np.testing.assert_allclose(dg[k], fd, rtol=1e-7, atol=1e-7)
        fd2 = (field.derivative(theta + e) - field.derivative(theta - e)) / (2 * h)
        np.testing.assert_allclose(d2g[k], fd2, rtol=1e-6, atol=1e-6)


def test_random_variable_invariance():
    fam = Exponential()
    push = pushforward(fam, [1.7], power_map(0.6, 2.0))
    np.testing.assert_allclose(fisher_metric(push, [1.7]).matrix, fisher_metric(fam, [1.7]).matrix,
                               atol=1e-6)


def test_quadrature_metric_field():
    field = quadrature_metric(WignerDyson())
    assert field([2.0]).matrix[0, 0] == pytest.approx(1.0, abs=1e-9)


# christoffel

def test_christoffel_gaussian_block():
    for field in (analytic_metric(Gaussian()), gaussian_block_fd()):
        G = christoffel(field, [0.3, 2.0]).gamma
        s = 2.0
        assert G[0, 0, 1] == pytest.approx(-1 / s, abs=1e-8)
        assert G[0, 1, 0] == pytest.approx(-1 / s, abs=1e-8)
        assert G[1, 0, 0] == pytest.approx(1 / (2 * s), abs=1e-8)
        assert G[1, 1, 1] == pytest.approx(-1 / s, abs=1e-8)
        assert abs(G[0, 0, 0]) < 1e-8 and abs(G[0, 1, 1]) < 1e-8 and abs(G[1, 0, 1]) < 1e-8


def test_christoffel_euclidean():
    flat = explicit_metric(lambda x: np.array([[2.0, 0.5], [0.5, 1.0]]), 2)
    assert np.max(np.abs(christoffel(flat, [0.3, -4.0]).gamma)) < 1e-9


def test_christoffel_exponential():
    assert christoffel(analytic_metric(Exponential()), [1.7]).gamma[0, 0, 0] == pytest.approx(-1 / 1.7, rel=1e-12)


def test_christoffel_symmetric_lower_indices():
    G = christoffel(analytic_metric(CorrelatedGaussian(0.4)), [0.1, 1.2, -0.3, 0.8]).gamma
    np.testing.assert_allclose(G, np.transpose(G, (0, 2, 1)), atol=1e-12)


def test_christoffel_guard_and_singular():
    with pytest.raises(DomainError):
        christoffel(analytic_metric(Gaussian()), [0.0, 1e-7])
    singular = explicit_metric(lambda x: np.array([[1.0, 1.0], [1.0, 1.0]]), 2)
    with pytest.raises(SingularMetricError):
        christoffel(singular, [0.0, 0.0])


def test_christoffel_stencil_leaves_domain():
    field = explicit_metric(lambda x: np.diag([1 / x[0] ** 2]), 1, [0.0], [np.inf])
    with pytest.raises(DomainError):
        curvature(field, [1.00001e-6 * 1.5], FDPolicy(rel_step=1.0))


# curvature

@pytest.mark.parametrize("l", [1, 2])
def test_scalar_gaussian_product(l):
    point = GaussianProduct.point(np.linspace(-1, 1, 3 * l), np.linspace(0.5, 2.0, 3 * l))
    assert curvature(analytic_metric(GaussianProduct(l)), point).scalar == pytest.approx(-3 * l, abs=1e-4)


def test_scalar_gaussian_product_fd_path():
    field = analytic_metric(GaussianProduct(1))
    fd = explicit_metric(field.evaluator, 6, field.lower, field.upper)
    point = GaussianProduct.point([0.1, 0.2, 0.3], [0.9, 1.1, 1.4])
    assert curvature(fd, point).scalar == pytest.approx(-3.0, abs=1e-4)


def test_scalar_correlated_r0():
    assert curvature(analytic_metric(CorrelatedGaussian(0.0)), [0.0, 1.0, 0.0, 1.0]).scalar == pytest.approx(-2.0, abs=1e-4)


def reference_correlated_scalar(r):
    return -(8 * (r**2 - 2) + 2 * r**2 * (3 * r**2 - 2)) / (8 * (r**2 - 1))


def test_scalar_correlated_r05_closed_form():
    # reference closed form R(r) = -2.4375 at r = 0.5; the metric itself gives -2 for all r
    R = curvature(analytic_metric(CorrelatedGaussian(0.5)), [0.0, 1.0, 0.0, 1.0]).scalar
    assert R == pytest.approx(reference_correlated_scalar(0.5), abs=1e-4)


def _sympy_scalar(metric, coords):
    n = len(coords)
    ginv = metric.inv()
    Gam = [[[sum(ginv[a, d] * (sp.diff(metric[d, b], coords[c]) + sp.diff(metric[d, c], coords[b])
                               - sp.diff(metric[b, c], coords[d])) for d in range(n)) / 2
             for c in range(n)] for b in range(n)] for a in range(n)]

    def riem(a, b, c, d):
        val = sp.diff(Gam[a][d][b], coords[c]) - sp.diff(Gam[a][c][b], coords[d])
        val += sum(Gam[a][c][e] * Gam[e][d][b] - Gam[a][d][e] * Gam[e][c][b] for e in range(n))
        return val

    ric = sp.Matrix(n, n, lambda b, d: sum(riem(a, b, a, d) for a in range(n)))
    return sp.simplify(sum(ginv[i, j] * ric[i, j] for i in range(n) for j in range(n)))


def test_correlated_scalar_symbolic_oracle():
    # independent symbolic evaluation of the closed-form correlated metric at r = 1/2
    r = sp.Rational(1, 2)
    mx, sx, my, sy = sp.symbols("mx sx my sy", positive=True)
    q = 1 - r**2
    g = sp.Matrix([
        [1 / (sx**2 * q), 0, -r / (sx * sy * q), 0],
        [0, (2 - r**2) / (sx**2 * q), 0, -r**2 / (sx * sy * q)],
        [-r / (sx * sy * q), 0, 1 / (sy**2 * q), 0],
        [0, -r**2 / (sx * sy * q), 0, (2 - r**2) / (sy**2 * q)],
    ])
    R_sym = float(_sympy_scalar(g, [mx, sx, my, sy]))
    R_num = curvature(analytic_metric(CorrelatedGaussian(0.5)), [0.2, 1.3, -0.4, 0.7]).scalar
    assert R_num == pytest.approx(R_sym, abs=1e-10)


def test_scalar_exponential_flat():
    b = curvature(analytic_metric(Exponential()), [1.3])
    assert b.scalar == 0.0
    assert np.all(b.weyl_projective == 0.0)


def test_curvature_symmetries():
    for field, point in [(analytic_metric(GaussianProduct(1)), GaussianProduct.point([0, 1, 2], [1, 2, 0.5])),
                         (analytic_metric(CorrelatedGaussian(0.3)), [0.1, 1.2, -0.3, 0.8]),
                         (gaussian_block_fd(), [0.4, 1.5])]:
        b = curvature(field, point)
        R = b.riemann_lower
        assert np.max(np.abs(R + np.transpose(R, (0, 1, 3, 2)))) < 1e-6
        assert np.max(np.abs(R + np.transpose(R, (1, 0, 2, 3)))) < 1e-6
        assert np.max(np.abs(b.ricci - b.ricci.T)) < 1e-6
        ginv = np.linalg.inv(b.metric)
        assert b.scalar == pytest.approx(float(np.sum(ginv * b.ricci)), abs=1e-10)


def test_weyl_vanishes_in_two_dimensions():
    for field, point in [(analytic_metric(Gaussian()), [0.2, 0.9]), (gaussian_block_fd(), [0.2, 0.9]),
                         (analytic_metric(IntegrableComposite()), [1.0, 2.0])]:
        assert curvature(field, point).weyl_max_abs < 1e-6


def test_weyl_nonzero_on_gaussian_product():
    point = GaussianProduct.point([0.3, -0.2, 1.0], [0.8, 1.3, 2.1])
    assert curvature(analytic_metric(GaussianProduct(1)), point).weyl_max_abs > 0.01


# sectional curvature

def test_sectional_gaussian_block():
    field = analytic_metric(Gaussian())
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b = rng.standard_normal((2, 2))
        assert sectional_curvature(field, [0.0, 1.7], a, b) == pytest.approx(-0.5, abs=1e-6)


def test_sectional_euclidean():
    assert sectional_curvature(euclidean_metric(3), [0, 0, 0], [1, 2, 0], [0, 1, 5]) == pytest.approx(0.0, abs=1e-12)


def test_sectional_equals_half_scalar_in_2d():
    field = analytic_metric(IntegrableComposite())
    assert sectional_curvature(field, [1.0, 2.0], [1, 0], [0, 1]) == pytest.approx(
        curvature(field, [1.0, 2.0]).scalar / 2, abs=1e-12)


@pytest.mark.parametrize("field,point", [
    (analytic_metric(GaussianProduct(1)), GaussianProduct.point([0.3, -0.2, 1.0], [0.8, 1.3, 2.1])),
    (analytic_metric(CorrelatedGaussian(0.5)), [0.0, 1.1, 0.3, 0.9]),
    (analytic_metric(ChaoticComposite()), [1.0, 0.2, 0.7]),
])
def test_sectional_orthonormal_sum_is_scalar(field, point):
    b = curvature(field, point)
    E = orthonormal_frame(b.metric)
    n = E.shape[1]
    total = sum(sectional_curvature(field, point, E[:, i], E[:, j], bundle=b)
                for i in range(n) for j in range(n) if i != j)
    assert total == pytest.approx(b.scalar, abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(coef=st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_sectional_basis_independent(coef):
    field = analytic_metric(GaussianProduct(1))
    point = GaussianProduct.point([0.3, -0.2, 1.0], [0.8, 1.3, 2.1])
    rng = np.random.default_rng(8)
    a, b = rng.standard_normal((2, 6))
    M = np.array(coef).reshape(2, 2)
    if abs(np.linalg.det(M)) < 1e-2:
        return
    a2, b2 = M[0, 0] * a + M[0, 1] * b, M[1, 0] * a + M[1, 1] * b
    bundle = curvature(field, point)
    assert sectional_curvature(field, point, a2, b2, bundle=bundle) == pytest.approx(
        sectional_curvature(field, point, a, b, bundle=bundle), abs=1e-8)


def test_sectional_degenerate_plane():
    with pytest.raises(DomainError):
        sectional_curvature(analytic_metric(Gaussian()), [0.0, 1.0], [1.0, 2.0], [2.0, 4.0])


# Killing residual

def test_killing_euclidean_translation():
    assert np.max(np.abs(killing_residual(euclidean_metric(2), [0.3, 0.1], lambda x: np.array([1.0, 0.0])))) < 1e-9


@pytest.mark.parametrize("field", [analytic_metric(Gaussian()), gaussian_block_fd()])
def test_killing_gaussian_translation_and_dilation(field):
    assert np.max(np.abs(killing_residual(field, [0.4, 1.3], lambda x: np.array([1.0, 0.0])))) < 1e-8
    assert np.max(np.abs(killing_residual(field, [0.4, 1.3], lambda x: np.array(x)))) < 1e-8


def test_killing_detects_non_killing_field():
    res = killing_residual(analytic_metric(Gaussian()), [0.4, 1.3], lambda x: np.array([0.0, 1.0]))
    assert np.max(np.abs(res)) > 0.1


# pullback

def test_pullback_wigner_dyson():
    for lam in (0.3, 1.0, 2.5):
        field = pullback_metric(analytic_metric(Exponential()), wigner_dyson_reparametrization(lam))
        for phi in (0.4, 1.0, 3.0):
            assert field([phi]).matrix[0, 0] == pytest.approx(4 / phi**2, rel=1e-10)


def test_pullback_identity():
    base = analytic_metric(CorrelatedGaussian(0.4))
    field = pullback_metric(base, identity_reparametrization(4))
    x = [0.1, 1.2, -0.3, 0.8]
    np.testing.assert_allclose(field(x).matrix, base(x).matrix, atol=1e-12)


def test_pullback_log_is_euclidean():
    field = pullback_metric(analytic_metric(Exponential()), log_reparametrization(1))
    for u in (-2.0, 0.0, 3.0):
        assert field([u]).matrix[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_pullback_scalar_invariance():
    base = analytic_metric(Gaussian())
    rep = Reparametrization(lambda u: np.array([u[0] + u[1] ** 2, np.exp(u[1])]),
                            lambda u: np.array([[1.0, 2 * u[1]], [0.0, math.exp(u[1])]]),
                            np.array([-np.inf, -np.inf]), np.array([np.inf, np.inf]), "warp")
    field = pullback_metric(base, rep)
    u = np.array([0.3, 0.2])
    assert curvature(field, u).scalar == pytest.approx(curvature(base, rep.forward(u)).scalar, abs=1e-4)


def test_pullback_singular_jacobian():
    rep = Reparametrization(lambda u: np.array([u[0] ** 3 + 1.0]), lambda u: np.array([[3 * u[0] ** 2]]),
                            np.array([-np.inf]), np.array([np.inf]), "cube")
    with pytest.raises(SingularMetricError):
        pullback_metric(analytic_metric(Exponential()), rep)([0.0])


# report

def test_curvature_report_shape():
    rep = curvature_report(analytic_metric(GaussianProduct(1)), [0, 1, 0, 1, 0, 1])
    assert set(rep) == {"point", "scalar", "ricci", "sectional_samples", "weyl_max_abs"}
    assert rep["scalar"] == pytest.approx(-3.0, abs=1e-10)
    assert len(rep["sectional_samples"]) == 15
