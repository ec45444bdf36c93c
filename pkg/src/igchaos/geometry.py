"""Fisher-Rao metrics and the curvature stack on statistical manifolds.

Index conventions (0-based arrays):

* ``gamma[r, m, n]``          = Gamma^r_{mn}
* ``dgamma[l, r, m, n]``      = d_l Gamma^r_{mn}
* ``riemann[r, s, m, n]``     = R^r_{smn} = d_m Gamma^r_{ns} - d_n Gamma^r_{ms}
                                + Gamma^r_{ml} Gamma^l_{ns} - Gamma^r_{nl} Gamma^l_{ms}
* ``riemann_lower[a, s, m, n]`` = g_{ar} R^r_{smn}
* ``ricci[s, n]``             = R^r_{srn}

With these conventions the Gaussian half-plane diag(1/sigma^2, 2/sigma^2) has
scalar curvature -1 and sectional curvature -1/2, and the product of 3l such
blocks has scalar curvature -3l.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import models as _m
from .errors import DomainError, SingularMetricError, UnsupportedError
from .models import ParamPoint, as_coords
from .quadrature import DEFAULT_QUADRATURE, integrate_box


@dataclass(frozen=True)
class FDPolicy:
    """Finite-difference settings for metric and connection derivatives."""

    rel_step: float = 1e-5
    connection_factor: float = 10.0
    boundary_guard: float = 1e-6

    def step(self, x):
        return self.rel_step * np.maximum(1.0, np.abs(x))


DEFAULT_FD = FDPolicy()


@dataclass(frozen=True)
class MetricValue:
    point: ParamPoint
    matrix: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=float)
        if g.shape != (self.point.chart_dim,) * 2:
            raise ValueError("metric shape does not match the chart dimension")
        scale = max(1.0, float(np.max(np.abs(g))))
        if np.max(np.abs(g - g.T)) > 1e-12 * scale:
            raise SingularMetricError("metric matrix is not symmetric")
        object.__setattr__(self, "matrix", g)


@dataclass(frozen=True)
class MetricField:
    """A metric field on a coordinate box.

    ``derivative(x)[k, i, j]`` = d_k g_ij and ``second_derivative(x)[k, l, i, j]``
    are optional exact callbacks; without them finite differences are used.
    ``volume_factors`` lists, per coordinate, a pair ``(f, F)`` of a one-variable
    factor of sqrt(det g) and its antiderivative, when sqrt(det g) separates.
    """

    chart_dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    provenance: str
    lower: np.ndarray
    upper: np.ndarray
    derivative: Optional[Callable] = None
    second_derivative: Optional[Callable] = None
    diagonal: bool = False
    volume_factors: Optional[Sequence] = None
    family: object = field(default=None, repr=False)

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.evaluator(x), dtype=float)
        return 0.5 * (g + g.T)

    def __call__(self, point):
        point = point if isinstance(point, ParamPoint) else ParamPoint(point)
        x = self.check(point)
        return MetricValue(point, self.matrix(x))

    def check(self, point, guard=0.0):
        x = as_coords(point)
        if x.size != self.chart_dim:
            raise DomainError(f"expected {self.chart_dim} coordinates, got {x.size}")
        margin = guard * np.maximum(1.0, np.abs(x))
        if np.any(x - self.lower <= margin) or np.any(self.upper - x <= margin):
            raise DomainError(f"point {x} outside (or too close to the edge of) the domain")
        return x


@dataclass(frozen=True)
class ChristoffelValue:
    point: ParamPoint
    gamma: np.ndarray


@dataclass(frozen=True)
class CurvatureBundle:
    point: ParamPoint
    metric: np.ndarray
    riemann: np.ndarray
    riemann_lower: np.ndarray
    ricci: np.ndarray
    scalar: float
    weyl_projective: np.ndarray

    @property
    def weyl_max_abs(self):
        return float(np.max(np.abs(self.weyl_projective))) if self.weyl_projective.size else 0.0


# ---------------------------------------------------------------------------
# metric constructors

def _scale_metric(C, scale_index, lower, upper, provenance, family=None, volume_factors=None):
    """g_ij(x) = C_ij u_i(x) u_j(x) with u_i = 1/x[scale_index[i]] (or 1 when None).

    Every closed-form metric of the built-in families has this shape, which
    makes exact first and second derivatives cheap.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    idx = [(-1 if s is None else int(s)) for s in scale_index]

    def parts(x):
        u = np.ones(n)
        du = np.zeros((n, n))      # du[k, i] = d_k u_i
        d2u = np.zeros((n, n, n))  # d2u[k, l, i]
        for i, s in enumerate(idx):
            if s >= 0:
                u[i] = 1.0 / x[s]
                du[s, i] = -1.0 / x[s] ** 2
                d2u[s, s, i] = 2.0 / x[s] ** 3
        return u, du, d2u

    def g(x):
        u, _, _ = parts(x)
        return C * np.outer(u, u)

    def dg(x):
        u, du, _ = parts(x)
        return C * (du[:, :, None] * u[None, None, :] + u[None, :, None] * du[:, None, :])

    def d2g(x):
        u, du, d2u = parts(x)
        t = (d2u[:, :, :, None] * u[None, None, None, :]
             + du[:, None, :, None] * du[None, :, None, :]
             + du[None, :, :, None] * du[:, None, None, :]
             + u[None, None, :, None] * d2u[:, :, None, :])
        return C * t

    diag = bool(np.all(C == np.diag(np.diag(C))))
    return MetricField(n, g, provenance, np.asarray(lower, float), np.asarray(upper, float),
                       dg, d2g, diag, volume_factors, family)


def _inv_factor(c):
    r = math.sqrt(c)
    return (lambda t: r / t, lambda t: r * np.log(t))


def _inv_sq_factor(c):
    r = math.sqrt(c)
    return (lambda t: r / t**2, lambda t: -r / t)


_UNIT_FACTOR = (lambda t: 1.0, lambda t: t)


def analytic_metric(family):
    """Closed-form Fisher-Rao metric field of a built-in family."""
    lo, hi = family.bounds()
    prov = f"analytic({family.name})"
    if isinstance(family, _m.TransformedFamily):
        base = analytic_metric(family.base)
        return MetricField(base.chart_dim, base.evaluator, f"analytic({family.name})",
                           base.lower, base.upper, base.derivative, base.second_derivative,
                           base.diagonal, base.volume_factors, family)
    if isinstance(family, _m.GaussianProduct) or isinstance(family, _m.Gaussian):
        blocks = family.chart_dim // 2
        C = np.diag([1.0, 2.0] * blocks)
        scale = [2 * (i // 2) + 1 for i in range(2 * blocks)]
        vf = [_UNIT_FACTOR, _inv_sq_factor(2.0)] * blocks
        return _scale_metric(C, scale, lo, hi, prov, family, vf)
    if isinstance(family, _m.CorrelatedGaussian):
        r = family.r
        q = 1.0 - r * r
        C = np.array([
            [1.0, 0.0, -r, 0.0],
            [0.0, 2.0 - r * r, 0.0, -r * r],
            [-r, 0.0, 1.0, 0.0],
            [0.0, -r * r, 0.0, 2.0 - r * r],
        ]) / q
        vf = None
        if r == 0.0:
            vf = [_UNIT_FACTOR, _inv_sq_factor(2.0), _UNIT_FACTOR, _inv_sq_factor(2.0)]
        return _scale_metric(C, [1, 1, 3, 3], lo, hi, prov, family, vf)
    if isinstance(family, _m.Exponential):
        return _scale_metric([[1.0]], [0], lo, hi, prov, family, [_inv_factor(1.0)])
    if isinstance(family, _m.Weibull):
        c = family.shape_n**2
        return _scale_metric([[c]], [0], lo, hi, prov, family, [_inv_factor(c)])
    if isinstance(family, _m.WignerDyson):
        return _scale_metric([[4.0]], [0], lo, hi, prov, family, [_inv_factor(4.0)])
    if isinstance(family, _m.IntegrableComposite):
        return _scale_metric(np.eye(2), [0, 1], lo, hi, prov, family,
                             [_inv_factor(1.0), _inv_factor(1.0)])
    if isinstance(family, _m.ChaoticComposite):
        return _scale_metric(np.diag([4.0, 1.0, 2.0]), [0, 2, 2], lo, hi, prov, family,
                             [_inv_factor(4.0), _UNIT_FACTOR, _inv_sq_factor(2.0)])
    raise UnsupportedError(f"no closed-form metric for {family.name}")


def _outer_scores(family, theta, spec):
    n = family.chart_dim
    iu = np.triu_indices(n)
    lo, hi = family.support_box(theta)

    def f(X):
        p = np.exp(family._logpdf(theta, X))
        s = family._score(theta, X)
        with np.errstate(invalid="ignore"):
            out = p[:, None] * (s[:, iu[0]] * s[:, iu[1]])
        return np.where(p[:, None] > 0, out, 0.0)

    est, _ = integrate_box(f, lo, hi, spec)
    g = np.zeros((n, n))
    g[iu] = est
    g.T[iu] = est
    return g


def _fisher_matrix(family, theta, spec):
    if family.micro_dim <= 2:
        return _outer_scores(family, theta, spec)
    factors = family.factor_list()
    if factors is None:
        raise UnsupportedError(f"{family.name}: no quadrature beyond two microvariables")
    g = np.zeros((family.chart_dim, family.chart_dim))
    for part, cs, _ in factors:
        g[cs, cs] = _fisher_matrix(part, theta[cs], spec)
    return g


def fisher_metric(family, params, quadrature=DEFAULT_QUADRATURE):
    """Fisher-Rao metric as the quadrature covariance of the score."""
    theta = family.check(params)
    g = _fisher_matrix(family, theta, quadrature)
    eig = np.linalg.eigvalsh(g)
    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        raise SingularMetricError(f"{family.name}: Fisher metric not positive definite ({eig[0]:.3e})")
    return MetricValue(ParamPoint(theta), g)


def quadrature_metric(family, quadrature=DEFAULT_QUADRATURE):
    """Metric field evaluated by quadrature at every point; derivatives by finite differences."""
    lo, hi = family.bounds()
    return MetricField(family.chart_dim, lambda x: _fisher_matrix(family, x, quadrature),
                       f"quadrature({family.name})", lo, hi, family=family)


def euclidean_metric(n):
    n = int(n)
    return MetricField(n, lambda x: np.eye(n), "explicit(euclidean)",
                       np.full(n, -np.inf), np.full(n, np.inf),
                       lambda x: np.zeros((n, n, n)), lambda x: np.zeros((n, n, n, n)),
                       True, [_UNIT_FACTOR] * n)


def explicit_metric(formula, chart_dim, lower=None, upper=None, name="formula",
                    diagonal=None):
    """Metric field from a user formula ``x -> g(x)``."""
    n = int(chart_dim)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    return MetricField(n, formula, f"explicit({name})", lower, upper,
                       diagonal=bool(diagonal))


@dataclass(frozen=True)
class Reparametrization:
    """Coordinate change theta = forward(u) with Jacobian d theta / d u."""

    forward: Callable
    jacobian: Callable
    lower: np.ndarray
    upper: np.ndarray
    name: str = "reparam"


def wigner_dyson_reparametrization(lam=1.0):
    """theta(phi) = 4 phi^2 lam / pi linking the Poisson and Wigner-Dyson charts."""
    c = 4.0 * lam / math.pi
    return Reparametrization(lambda u: c * np.asarray(u) ** 2,
                             lambda u: np.array([[2.0 * c * float(np.asarray(u)[0])]]),
                             np.array([0.0]), np.array([np.inf]), f"wigner_dyson(lam={lam})")


def log_reparametrization(n=1):
    return Reparametrization(lambda u: np.exp(np.asarray(u)), lambda u: np.diag(np.exp(u)),
                             np.full(n, -np.inf), np.full(n, np.inf), "exp")


def identity_reparametrization(n):
    return Reparametrization(lambda u: np.asarray(u, float), lambda u: np.eye(n),
                             np.full(n, -np.inf), np.full(n, np.inf), "identity")


def pullback_metric(base, reparam):
    """g_hat(u) = J(u)^T g(theta(u)) J(u)."""

    def evaluator(u):
        J = np.atleast_2d(np.asarray(reparam.jacobian(u), dtype=float))
        det = np.linalg.det(J)
        if not np.isfinite(det) or abs(det) < 1e-14 * max(1.0, np.max(np.abs(J))) ** J.shape[0]:
            raise SingularMetricError(f"{reparam.name}: singular Jacobian at {u}")
        theta = np.atleast_1d(np.asarray(reparam.forward(u), dtype=float))
        return J.T @ base.matrix(base.check(theta)) @ J

    return MetricField(base.chart_dim, evaluator, f"pullback({base.provenance}, {reparam.name})",
                       np.asarray(reparam.lower, float), np.asarray(reparam.upper, float),
                       diagonal=base.diagonal and base.chart_dim == 1)


# ---------------------------------------------------------------------------
# connection and curvature

def _inverse(g):
    try:
        c = cho_factor(g)
    except LinAlgError:
        raise SingularMetricError("metric is not positive definite") from None
    return cho_solve(c, np.eye(g.shape[0]))


def _stencil_check(field, x, steps, reach):
    for k in range(x.size):
        for s in (-reach, reach):
            y = x.copy()
            y[k] += s * steps[k]
            if not (field.lower[k] < y[k] < field.upper[k]):
                raise DomainError("finite-difference stencil leaves the domain")


def metric_derivative(field, x, policy=DEFAULT_FD):
    """dg[k, i, j] = d_k g_ij."""
    if field.derivative is not None:
        return np.asarray(field.derivative(x), dtype=float)
    n = x.size
    h = policy.step(x)
    out = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h[k]
        out[k] = (field.matrix(x + e) - field.matrix(x - e)) / (2.0 * h[k])
    return out


def _gamma_from(ginv, dg):
    # T[s, m, n] = d_m g_sn + d_n g_ms - d_s g_mn
    T = np.einsum("msn->smn", dg) + np.einsum("nms->smn", dg) - dg
    return 0.5 * np.einsum("rs,smn->rmn", ginv, T)


def _gamma_at(field, x, policy):
    g = field.matrix(x)
    return _gamma_from(_inverse(g), metric_derivative(field, x, policy))


def christoffel(field, point, policy=DEFAULT_FD):
    """Levi-Civita connection Gamma^r_{mn} at a point."""
    x = field.check(point, policy.boundary_guard)
    if field.derivative is None:
        _stencil_check(field, x, policy.step(x), 1.0)
    return ChristoffelValue(ParamPoint(x), _gamma_at(field, x, policy))


def connection_derivatives(field, point, policy=DEFAULT_FD):
    """dgamma[l, r, m, n] = d_l Gamma^r_{mn}."""
    x = field.check(point, policy.boundary_guard)
    n = x.size
    if field.second_derivative is not None and field.derivative is not None:
        g = field.matrix(x)
        ginv = _inverse(g)
        dg = np.asarray(field.derivative(x), float)
        d2g = np.asarray(field.second_derivative(x), float)  # [k, l, i, j] = d_k d_l g_ij
        T = np.einsum("msn->smn", dg) + np.einsum("nms->smn", dg) - dg
        # dT[l, s, m, n] = d_l (d_m g_sn + d_n g_ms - d_s g_mn)
        dT = np.einsum("lmsn->lsmn", d2g) + np.einsum("lnms->lsmn", d2g) - d2g
        dginv = -np.einsum("ra,lab,bs->lrs", ginv, dg, ginv)
        return 0.5 * (np.einsum("lrs,smn->lrmn", dginv, T) + np.einsum("rs,lsmn->lrmn", ginv, dT))
    H = policy.connection_factor * policy.step(x)
    reach = policy.connection_factor + (0.0 if field.derivative is not None else 1.0)
    _stencil_check(field, x, policy.step(x), reach)
    out = np.empty((n, n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = H[l]
        out[l] = (_gamma_at(field, x + e, policy) - _gamma_at(field, x - e, policy)) / (2.0 * H[l])
    return out


def riemann_from_connection(gamma, dgamma):
    """R^r_{smn} from Gamma and its first derivatives."""
    term = (np.einsum("mrns->rsmn", dgamma) - np.einsum("nrms->rsmn", dgamma)
            + np.einsum("rml,lns->rsmn", gamma, gamma) - np.einsum("rnl,lms->rsmn", gamma, gamma))
    return term


def _weyl(riem_low, scalar, g):
    n = g.shape[0]
    if n < 2:
        return np.zeros_like(riem_low)
    G = np.einsum("mr,ns->mnrs", g, g) - np.einsum("ms,nr->mnrs", g, g)
    return riem_low - scalar / (n * (n - 1)) * G


def curvature(field, point, policy=DEFAULT_FD):
    """Riemann, Ricci, scalar and projective Weyl curvature at a point."""
    x = field.check(point, policy.boundary_guard)
    gamma = christoffel(field, x, policy).gamma
    dgamma = connection_derivatives(field, x, policy)
    g = field.matrix(x)
    ginv = _inverse(g)
    riem = riemann_from_connection(gamma, dgamma)
    low = np.einsum("ar,rsmn->asmn", g, riem)
    ricci = np.einsum("rsrn->sn", riem)
    ricci = 0.5 * (ricci + ricci.T)
    scalar = float(np.einsum("sn,sn->", ginv, ricci))
    return CurvatureBundle(ParamPoint(x), g, riem, low, ricci, scalar, _weyl(low, scalar, g))


def sectional_curvature(field, point, a, b, policy=DEFAULT_FD, bundle=None):
    """Sectional curvature of the plane spanned by ``a`` and ``b``."""
    if bundle is None:
        bundle = curvature(field, point, policy)
    g = bundle.metric
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    gaa, gbb, gab = a @ g @ a, b @ g @ b, a @ g @ b
    denom = gaa * gbb - gab * gab
    if denom <= 1e-12 * max(gaa * gbb, 1e-300):
        raise DomainError("vectors do not span a plane")
    num = np.einsum("mnrs,m,n,r,s->", bundle.riemann_lower, a, b, a, b)
    return float(num / denom)


def orthonormal_frame(g):
    """Columns form a g-orthonormal basis."""
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).T


def killing_residual(field, point, k_field, policy=DEFAULT_FD):
    """D_m K_n + D_n K_m for a contravariant vector field ``k_field(x) -> K^n``."""
    x = field.check(point, policy.boundary_guard)
    n = x.size
    gamma = christoffel(field, x, policy).gamma
    g = field.matrix(x)
    K_up = np.asarray(k_field(x), dtype=float)
    K = g @ K_up
    h = policy.step(x)
    dK = np.empty((n, n))  # dK[m, n] = d_m K_n
    if field.derivative is not None:
        dg = metric_derivative(field, x, policy)
        for m in range(n):
            e = np.zeros(n)
            e[m] = h[m]
            dKup = (np.asarray(k_field(x + e), float) - np.asarray(k_field(x - e), float)) / (2 * h[m])
            dK[m] = dg[m] @ K_up + g @ dKup
    else:
        for m in range(n):
            e = np.zeros(n)
            e[m] = h[m]
            kp = field.matrix(x + e) @ np.asarray(k_field(x + e), float)
            km = field.matrix(x - e) @ np.asarray(k_field(x - e), float)
            dK[m] = (kp - km) / (2 * h[m])
    D = dK - np.einsum("rnm,r->mn", gamma, K)
    return D + D.T


def curvature_report(field, point, policy=DEFAULT_FD, max_planes=15):
    """JSON-ready summary {point, scalar, ricci, sectional_samples, weyl_max_abs}."""
    bundle = curvature(field, point, policy)
    n = field.chart_dim
    samples = []
    for i in range(n):
        for j in range(i + 1, n):
            if len(samples) >= max_planes:
                break
            a = np.zeros(n)
            b = np.zeros(n)
            a[i] = 1.0
            b[j] = 1.0
            samples.append({"plane": [i, j],
                            "K": sectional_curvature(field, point, a, b, bundle=bundle)})
    return {
        "point": list(bundle.point.coords),
        "scalar": bundle.scalar,
        "ricci": bundle.ricci.tolist(),
        "sectional_samples": samples,
        "weyl_max_abs": bundle.weyl_max_abs,
    }


__all__ = [
    "FDPolicy", "DEFAULT_FD", "MetricValue", "MetricField", "ChristoffelValue",
    "CurvatureBundle", "analytic_metric", "fisher_metric", "quadrature_metric",
    "euclidean_metric", "explicit_metric", "Reparametrization", "pullback_metric",
    "wigner_dyson_reparametrization", "log_reparametrization", "identity_reparametrization",
    "christoffel", "connection_derivatives", "curvature", "sectional_curvature",
    "killing_residual", "curvature_report", "orthonormal_frame", "metric_derivative",
]
