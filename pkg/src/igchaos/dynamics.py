"""Geodesic flow, Jacobi fields and the exponential instability rate.

The geodesic equation is integrated as a first-order system in
``(Theta, dTheta/dtau)``. Jacobi fields solve the linearized deviation equation
written with ordinary tau-derivatives of J:

    J''^m + 2 G^m_ab J'^a T'^b + G^m_ab J^a T''^b + d_n G^m_ab T'^n T'^b J^a
          + G^m_ab G^a_rs T'^s T'^b J^r + R^m_nrs T'^n J^r T'^s = 0

where T is the base geodesic and T'' = -G T' T'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, DomainExitError, NumericalError, SingularMetricError, StiffnessError, UnsupportedError
from .geometry import DEFAULT_FD, _gamma_at, connection_derivatives, riemann_from_connection
from .models import ParamPoint, as_coords


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-9
    atol: float = 1e-9

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class GeodesicState:
    tau: float
    point: ParamPoint
    velocity: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        p = self.point if isinstance(self.point, ParamPoint) else ParamPoint(self.point)
        if v.size != p.chart_dim or not np.all(np.isfinite(v)):
            raise DomainError("velocity must be finite with one component per coordinate")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class JacobiField:
    j: np.ndarray
    djdtau: np.ndarray

    def __post_init__(self):
        j = np.atleast_1d(np.asarray(self.j, dtype=float))
        dj = np.atleast_1d(np.asarray(self.djdtau, dtype=float))
        if j.shape != dj.shape or not (np.all(np.isfinite(j)) and np.all(np.isfinite(dj))):
            raise DomainError("Jacobi field components must be finite and of equal length")
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "djdtau", dj)


@dataclass
class Trajectory:
    """Sampled geodesic (optionally carrying a Jacobi field).

    ``interpolant(tau)`` returns ``(points, velocities)`` for scalar or array tau.
    """

    grid: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    interpolant: Optional[Callable] = None
    jacobi: Optional[np.ndarray] = None
    djacobi: Optional[np.ndarray] = None
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 1 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("trajectory grid must be strictly increasing")

    @property
    def chart_dim(self):
        return self.points.shape[1]

    def state(self, i):
        return GeodesicState(self.grid[i], ParamPoint(self.points[i]), self.velocities[i])

    def states(self):
        return [self.state(i) for i in range(self.grid.size)]

    def jacobi_fields(self):
        if self.jacobi is None:
            return []
        return [JacobiField(j, dj) for j, dj in zip(self.jacobi, self.djacobi)]

    def at(self, tau):
        if self.interpolant is None:
            raise UnsupportedError("trajectory carries no dense output")
        return self.interpolant(tau)

    def csv_columns(self):
        n = self.chart_dim
        header = ["tau"] + [f"theta{i + 1}" for i in range(n)] + [f"dtheta{i + 1}" for i in range(n)]
        cols = [self.grid[:, None], self.points, self.velocities]
        if self.jacobi is not None:
            header += [f"J{i + 1}" for i in range(n)] + ["J_norm"]
            cols += [self.jacobi, self.intensity[:, None]]
        return header, np.hstack(cols)


@dataclass(frozen=True)
class GaussianGeodesicParams:
    xi: float
    lam: float
    c: float = 0.0

    def __post_init__(self):
        if not (self.xi > 0 and self.lam > 0):
            raise DomainError("xi and lam must be positive")


# ---------------------------------------------------------------------------
# geodesics

def _accel(field, x, v, policy):
    gamma = _gamma_at(field, x, policy)
    return -np.einsum("mab,a,b->m", gamma, v, v)


def _boundary_distance(field, x):
    d = np.inf
    for k in range(x.size):
        m = 1e-6 * max(1.0, abs(x[k]))
        if np.isfinite(field.lower[k]):
            d = min(d, x[k] - field.lower[k] - m)
        if np.isfinite(field.upper[k]):
            d = min(d, field.upper[k] - x[k] - m)
    return d


def integrate_geodesic(field, initial, tau_end, tolerances=DEFAULT_TOL, grid=None,
                       policy=DEFAULT_FD):
    """Integrate the geodesic equation from ``initial`` to ``tau_end``.

    Uses an adaptive 4(5) Runge-Kutta pair with its dense output. The result is
    sampled on ``grid`` when given, otherwise on the accepted steps.
    """
    x0 = field.check(initial.point, 1e-6)
    n = x0.size
    t0 = initial.tau
    if not tau_end > t0:
        raise ValueError("tau_end must exceed the initial tau")

    def rhs(t, y):
        x, v = y[:n], y[n:]
        try:
            a = _accel(field, x, v, policy)
        except (SingularMetricError, DomainError, FloatingPointError):
            a = np.full(n, np.nan)
        return np.concatenate([v, a])

    def leave(t, y):
        return _boundary_distance(field, y[:n])

    leave.terminal = True
    leave.direction = -1

    y0 = np.concatenate([x0, initial.velocity])
    sol = solve_ivp(rhs, (t0, tau_end), y0, method="RK45", rtol=tolerances.rtol,
                    atol=tolerances.atol, dense_output=True, events=leave)
    if sol.status == -1:
        raise StiffnessError(f"geodesic integration failed: {sol.message}")

    def interp(t):
        y = sol.sol(t)
        return y[:n].T, y[n:].T

    if sol.status == 1:
        last = float(sol.t_events[0][0])
        partial = Trajectory(sol.t, sol.y[:n].T, sol.y[n:].T, interp)
        raise DomainExitError(f"geodesic left the metric domain at tau={last:.6g}", last, partial)

    if grid is None:
        ts = sol.t
        ys = sol.y
    else:
        ts = np.asarray(grid, dtype=float)
        if ts[0] < t0 - 1e-12 or ts[-1] > tau_end + 1e-12:
            raise ValueError("grid must lie within [tau0, tau_end]")
        ys = sol.sol(ts)
    return Trajectory(ts, ys[:n].T, ys[n:].T, interp)


def speed(field, x, v):
    return float(v @ field.matrix(x) @ v)


def analytic_gaussian_geodesic(p, tau):
    """Closed-form geodesic (mu, sigma) of the Gaussian half-plane.

    mu = 4 lam a / (exp(-2 lam tau) + a) + c,  sigma = xi exp(-lam tau) / (exp(-2 lam tau) + a),
    with a = xi^2 / (8 lam^2). The constant ``c`` translates mu, which is an isometry.
    Accepts complex ``lam`` for complex-step differentiation.
    """
    lam, xi = p.lam, p.xi
    tau = np.asarray(tau)
    a = xi * xi / (8.0 * lam * lam)
    E = np.exp(-2.0 * lam * tau)
    D = E + a
    mu = 4.0 * lam * a / D + p.c
    sigma = xi * np.exp(-lam * tau) / D
    return mu, sigma


def analytic_gaussian_velocity(p, tau):
    lam, xi = p.lam, p.xi
    tau = np.asarray(tau)
    a = xi * xi / (8.0 * lam * lam)
    E = np.exp(-2.0 * lam * tau)
    D = E + a
    dmu = 8.0 * lam * lam * a * E / D**2
    dsigma = xi * lam * np.exp(-lam * tau) * (E - a) / D**2
    return dmu, dsigma


def _block_params(mu0, sigma0, lam):
    # the a = 1 geodesic starts at (2 lam, sqrt(2) lam); dilate by k and translate mu
    k = sigma0 / (math.sqrt(2.0) * lam)
    return k, mu0 - 2.0 * lam * k


def block_geodesic(mu0, sigma0, lam, tau):
    """Gaussian-block geodesic through (mu0, sigma0) at tau=0 with rate ``lam``.

    Returns (mu, sigma, dmu, dsigma). Built from the closed form by a dilation
    and a translation, both isometries of the half-plane.
    """
    if not (sigma0 > 0 and lam > 0):
        raise DomainError("sigma0 and lam must be positive")
    k, shift = _block_params(mu0, sigma0, lam)
    p = GaussianGeodesicParams(math.sqrt(8.0) * lam, lam)
    mu, sigma = analytic_gaussian_geodesic(p, tau)
    dmu, dsigma = analytic_gaussian_velocity(p, tau)
    return k * mu + shift, k * sigma, k * dmu, k * dsigma


def gaussian_product_trajectory(l, p, grid):
    """Closed-form geodesic on the 6l-dim Gaussian manifold, all blocks identical."""
    grid = np.asarray(grid, dtype=float)
    blocks = 3 * int(l)

    def interp(t):
        t = np.asarray(t, dtype=float)
        mu, sigma = analytic_gaussian_geodesic(p, t)
        dmu, dsigma = analytic_gaussian_velocity(p, t)
        pts = np.stack([mu, sigma] * blocks, axis=-1)
        vel = np.stack([dmu, dsigma] * blocks, axis=-1)
        return pts, vel

    pts, vel = interp(grid)
    return Trajectory(grid, pts, vel, interp)


def gaussian_initial_family(l, xi):
    """lam -> initial state of the closed-form geodesic family on the 6l-dim manifold."""
    def state(lam):
        p = GaussianGeodesicParams(xi, lam)
        mu, sigma = analytic_gaussian_geodesic(p, 0.0)
        dmu, dsigma = analytic_gaussian_velocity(p, 0.0)
        return GeodesicState(0.0, ParamPoint([mu, sigma] * 3 * l), [dmu, dsigma] * 3 * l)
    return state


def special_jacobi_initial(l, xi, lam):
    """J(0) = dTheta(0)/dlam and J'(0) = dTheta'(0)/dlam along the closed-form family.

    Derivatives by complex-step differentiation (exact to rounding).
    """
    h = 1e-30
    pc = _ComplexParams(xi, complex(lam, h))
    mu, sigma = analytic_gaussian_geodesic(pc, 0.0)
    dmu, dsigma = analytic_gaussian_velocity(pc, 0.0)
    j = [mu.imag / h, sigma.imag / h] * 3 * l
    dj = [dmu.imag / h, dsigma.imag / h] * 3 * l
    return JacobiField(j, dj)


@dataclass(frozen=True)
class _ComplexParams:
    xi: float
    lam: complex
    c: float = 0.0


# ---------------------------------------------------------------------------
# Jacobi fields

def _connection_data(field, x, policy):
    gamma = _gamma_at(field, x, policy)
    dgamma = connection_derivatives(field, x, policy)
    return gamma, dgamma, riemann_from_connection(gamma, dgamma)


def jlc_rhs(field, x, v, J, dJ, policy=DEFAULT_FD):
    """Second tau-derivative of J from the five-term deviation equation."""
    gamma, dgamma, riem = _connection_data(field, x, policy)
    acc = -np.einsum("mab,a,b->m", gamma, v, v)
    t = (2.0 * np.einsum("mab,a,b->m", gamma, dJ, v)
         + np.einsum("mab,a,b->m", gamma, J, acc)
         + np.einsum("nmab,n,b,a->m", dgamma, v, v, J)
         + np.einsum("mab,ars,s,b,r->m", gamma, gamma, v, v, J)
         + np.einsum("mnrs,n,r,s->m", riem, v, J, v))
    return -t


def _base_interpolant(base):
    if base.interpolant is not None:
        return base.interpolant
    spline_x = CubicHermiteSpline(base.grid, base.points, base.velocities, axis=0)
    spline_v = spline_x.derivative()
    return lambda t: (spline_x(t), spline_v(t))


def integrate_jlc(field, base, j0, tolerances=DEFAULT_TOL, policy=DEFAULT_FD):
    """Integrate the Jacobi-Levi-Civita equation along ``base``; sampled on ``base.grid``."""
    n = base.chart_dim
    if j0.j.size != n:
        raise DomainError("Jacobi field dimension does not match the chart")
    interp = _base_interpolant(base)

    def rhs(t, y):
        x, v = interp(t)
        x = np.asarray(x, dtype=float)
        if _boundary_distance(field, x) <= 0:
            raise DomainExitError(f"base geodesic leaves the domain at tau={t:.6g}", t)
        return np.concatenate([y[n:], jlc_rhs(field, x, np.asarray(v, float), y[:n], y[n:], policy)])

    grid = base.grid
    y0 = np.concatenate([j0.j, j0.djdtau])
    if grid.size == 1:
        ys = y0[:, None]
    else:
        sol = solve_ivp(rhs, (grid[0], grid[-1]), y0, method="RK45", t_eval=grid,
                        rtol=tolerances.rtol, atol=tolerances.atol)
        if sol.status != 0:
            raise StiffnessError(f"Jacobi integration failed: {sol.message}")
        ys = sol.y
    J = ys[:n].T
    dJ = ys[n:].T
    norms = np.array([jacobi_intensity(field, x, JacobiField(j, d))
                      for x, j, d in zip(base.points, J, dJ)])
    return Trajectory(grid, base.points, base.velocities, base.interpolant, J, dJ, norms)


def isotropic_jacobi(k, omega0, tau):
    """(1/sqrt(-k)) omega0 sinh(sqrt(-k) tau) for constant negative curvature ``k``."""
    if not k < 0:
        raise UnsupportedError("closed form is given for negative curvature only")
    r = math.sqrt(-k)
    return omega0 * np.sinh(r * np.asarray(tau, dtype=float)) / r


def jacobi_from_family(field, initial_family, lam0, d_lam, tau_grid, tolerances=DEFAULT_TOL,
                       policy=DEFAULT_FD):
    """Central difference of neighbouring geodesics, (Theta(lam+d) - Theta(lam-d)) / 2d."""
    grid = np.asarray(tau_grid, dtype=float)
    ends = []
    for lam in (lam0 + d_lam, lam0 - d_lam):
        s = initial_family(lam)
        tr = integrate_geodesic(field, s, grid[-1], tolerances, grid=grid, policy=policy)
        ends.append(tr)
    J = (ends[0].points - ends[1].points) / (2.0 * d_lam)
    dJ = (ends[0].velocities - ends[1].velocities) / (2.0 * d_lam)
    return [JacobiField(j, d) for j, d in zip(J, dJ)]


def jacobi_intensity(field, point, j):
    """||J|| = sqrt(g_mn J^m J^n)."""
    x = as_coords(point)
    vec = j.j if isinstance(j, JacobiField) else np.asarray(j, dtype=float)
    q = float(vec @ field.matrix(x) @ vec)
    return math.sqrt(max(q, 0.0))


def estimate_lambda_j(tau, intensity, tail_fraction=0.5):
    """Least-squares slope of log ||J|| against tau over the tail window."""
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if tau.shape != y.shape:
        raise ValueError("tau and intensity must have equal length")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    start = int(math.floor((1.0 - tail_fraction) * tau.size))
    t, v = tau[start:], y[start:]
    keep = v > 0
    t, v = t[keep], v[keep]
    if t.size < 8:
        raise NumericalError(f"need at least 8 positive tail points, got {t.size}")
    slope, _ = np.polyfit(t, np.log(v), 1)
    return float(slope)


__all__ = [
    "Tolerances", "GeodesicState", "JacobiField", "Trajectory", "GaussianGeodesicParams",
    "integrate_geodesic", "analytic_gaussian_geodesic", "analytic_gaussian_velocity",
    "block_geodesic", "gaussian_product_trajectory", "gaussian_initial_family",
    "special_jacobi_initial", "integrate_jlc", "jlc_rhs", "isotropic_jacobi",
    "jacobi_from_family", "jacobi_intensity", "estimate_lambda_j", "speed",
]
