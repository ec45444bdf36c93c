"""Statistical volumes and the information geometrodynamical entropy (IGE).

The volume swept between the start of a geodesic and its position at tau is
the product of one-dimensional integrals of the separable factors of
sqrt(det g). Its running time average is accumulated in log space so that
exponentially growing volumes never overflow, and the IGE is its logarithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dynamics import Trajectory, block_geodesic
from .errors import AmbiguousRegimeError, DomainError, NumericalError, SingularMetricError, UnsupportedError
from .models import as_coords

REGULAR = "Regular"
CHAOTIC = "Chaotic"
AMBIGUOUS_MARGIN = 1.1


def volume_element(field, point):
    """sqrt(det g) at a point."""
    x = field.check(point)
    det = np.linalg.det(field.matrix(x))
    if not det > 0:
        raise SingularMetricError(f"metric determinant {det:.3e} is not positive")
    return math.sqrt(det)


def _separable_factors(field, lo, hi, rng_seed=0):
    """Split sqrt(det g) into one-variable factors about the box centre, checking the split."""
    mid = 0.5 * (lo + hi)
    h0 = volume_element(field, mid)

    def factor(i):
        def f(t):
            y = mid.copy()
            y[i] = t
            return volume_element(field, y) / h0
        return f

    factors = [factor(i) for i in range(mid.size)]
    rng = np.random.default_rng(rng_seed)
    for _ in range(8):
        y = lo + rng.random(mid.size) * (hi - lo)
        pred = h0 * np.prod([factors[i](y[i]) for i in range(mid.size)])
        if abs(volume_element(field, y) - pred) > 1e-8 * abs(pred):
            raise UnsupportedError("sqrt(det g) does not separate into per-coordinate factors")
    return h0, factors


def region_volume(field, start, end):
    """Product over coordinates of |integral of the sqrt(det g) factor| from start to end."""
    if not field.diagonal:
        raise UnsupportedError("region volumes are defined for diagonal metrics only")
    a = field.check(start)
    b = field.check(end)
    if np.any(a == b):
        return 0.0
    if field.volume_factors is not None:
        return float(np.prod([abs(F(bi) - F(ai))
                              for (_, F), ai, bi in zip(field.volume_factors, a, b)]))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    h0, factors = _separable_factors(field, lo, hi)
    total = h0
    for i, f in enumerate(factors):
        val, _ = quad(f, lo[i], hi[i], epsabs=0.0, epsrel=1e-12, limit=200)
        total *= abs(val)
    return float(total)


def _log_delta_v(field, points):
    """log Delta V for each row of ``points`` relative to the first row."""
    x0 = points[0]
    if field.volume_factors is not None:
        with np.errstate(divide="ignore"):
            out = np.zeros(points.shape[0])
            for i, (_, F) in enumerate(field.volume_factors):
                out += np.log(np.abs(np.asarray(F(points[:, i]), float) - F(x0[i])))
        return out
    vals = np.array([region_volume(field, x0, x) for x in points])
    with np.errstate(divide="ignore"):
        return np.log(vals)


def _log_cumtrapz(t, logy):
    """log of the cumulative trapezoid integral of exp(logy) over t, starting at -inf."""
    dt = np.diff(t)
    seg = np.log(0.5 * dt) + np.logaddexp(logy[:-1], logy[1:])
    return np.concatenate([[-np.inf], np.logaddexp.accumulate(seg)])


@dataclass
class VolumeTrace:
    grid: np.ndarray
    log_delta_v: np.ndarray
    ige: np.ndarray

    @property
    def delta_v(self):
        return np.exp(self.log_delta_v)

    @property
    def avg_v(self):
        return np.exp(self.ige)

    def csv_columns(self):
        with np.errstate(over="ignore"):
            data = np.column_stack([self.grid, self.delta_v, self.avg_v, self.ige])
        return ["tau", "delta_v", "avg_v", "ige"], data


def ige_trace(field, geodesic, grid=None):
    """Volume trace along a geodesic; the time average uses the trapezoid rule."""
    if grid is None:
        grid = geodesic.grid
        points = geodesic.points
    else:
        grid = np.asarray(grid, dtype=float)
        if grid[0] < geodesic.grid[0] - 1e-12 or grid[-1] > geodesic.grid[-1] + 1e-12:
            raise DomainError("geodesic does not cover the requested grid")
        if geodesic.interpolant is None:
            if grid.shape != geodesic.grid.shape or not np.allclose(grid, geodesic.grid):
                raise DomainError("geodesic has no dense output for the requested grid")
            points = geodesic.points
        else:
            points = np.asarray(geodesic.interpolant(grid)[0], float)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    logdv = _log_delta_v(field, points)
    logint = _log_cumtrapz(grid - grid[0], logdv)
    with np.errstate(divide="ignore", invalid="ignore"):
        ige = logint - np.log(grid - grid[0])
    ige[0] = -np.inf
    return VolumeTrace(grid, logdv, ige)


@dataclass(frozen=True)
class GrowthFit:
    model: str
    slope: float
    intercept_linear: float
    coefficient: float
    intercept_log: float
    rms_linear: float
    rms_log: float
    window: tuple

    @property
    def margin(self):
        lo, hi = sorted([self.rms_linear, self.rms_log])
        if hi == 0.0:
            return 1.0
        return math.inf if lo == 0.0 else hi / lo

    def to_json(self):
        try:
            regime, _ = classify_regime(self)
        except AmbiguousRegimeError:
            regime = "Ambiguous"
        return {
            "model": self.model,
            "slope": self.slope,
            "coefficient": self.coefficient,
            "intercepts": {"linear": self.intercept_linear, "logarithmic": self.intercept_log},
            "rms_linear": self.rms_linear,
            "rms_log": self.rms_log,
            "margin": self.margin,
            "window": list(self.window),
            "classification": regime,
        }


def _fit(x, y):
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid * resid)))


def fit_growth(trace, tail_fraction=0.5):
    """Fit S = a tau + b and S = c log tau + d on the tail window; keep the better one."""
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    tau = np.asarray(trace.grid, float)
    S = np.asarray(trace.ige, float)
    start = int(math.floor((1.0 - tail_fraction) * tau.size))
    t, s = tau[start:], S[start:]
    keep = (t > 0) & np.isfinite(s)
    t, s = t[keep], s[keep]
    if t.size < 16:
        raise NumericalError(f"need at least 16 finite tail points, got {t.size}")
    a, b, rms_lin = _fit(t, s)
    c, d, rms_log = _fit(np.log(t), s)
    model = "linear" if rms_lin < rms_log else "logarithmic"
    return GrowthFit(model, a, b, c, d, rms_lin, rms_log, (float(t[0]), float(t[-1])))


def classify_regime(fit):
    """Linear IGE growth means Chaotic, logarithmic means Regular; returns (label, margin)."""
    margin = fit.margin
    if margin < AMBIGUOUS_MARGIN:
        raise AmbiguousRegimeError(
            f"linear and logarithmic fits differ by a factor {margin:.3f} only", margin)
    return (CHAOTIC if fit.model == "linear" else REGULAR), margin


# ---------------------------------------------------------------------------
# geodesic families for the three IGE scenarios

def _grid(tau_end, points):
    if not tau_end > 0:
        raise ValueError("tau_end must be positive")
    if points < 512:
        raise ValueError("IGE traces use at least 512 grid points")
    return np.linspace(0.0, tau_end, int(points))


def exponential_trajectory(starts, rates, grid):
    """Geodesics theta_i = theta_i(0) exp(v_i tau) of metrics c/theta^2, one per coordinate."""
    starts = as_coords(starts)
    rates = np.asarray(rates, dtype=float)

    def interp(t):
        t = np.asarray(t, dtype=float)[..., None]
        pts = starts * np.exp(rates * t)
        return pts, rates * pts

    pts, vel = interp(grid)
    return Trajectory(grid, pts, vel, interp)


def chaotic_trajectory(mu_a, mu_b, sigma_b, lam, rate_a, grid):
    """Exponential spacing geodesic times a Gaussian-block geodesic of rate ``lam``."""
    def interp(t):
        t = np.asarray(t, dtype=float)
        m, s, dm, ds = block_geodesic(mu_b, sigma_b, lam, t)
        a = mu_a * np.exp(rate_a * t)
        return np.stack([a, m, s], axis=-1), np.stack([rate_a * a, dm, ds], axis=-1)

    pts, vel = interp(grid)
    return Trajectory(grid, pts, vel, interp)


__all__ = [
    "REGULAR", "CHAOTIC", "volume_element", "region_volume", "VolumeTrace", "ige_trace",
    "GrowthFit", "fit_growth", "classify_regime", "exponential_trajectory",
    "chaotic_trajectory", "gaussian_scenario", "integrable_scenario", "chaotic_scenario",
]


def gaussian_scenario(l, lam, xi=1.0, tau_end=None, points=1024):
    """Closed-form geodesic on the 6l-dim Gaussian manifold and its volume trace."""
    from .dynamics import GaussianGeodesicParams, gaussian_product_trajectory
    from .geometry import analytic_metric
    from .models import GaussianProduct

    field = analytic_metric(GaussianProduct(l))
    grid = _grid(20.0 / lam if tau_end is None else tau_end, points)
    traj = gaussian_product_trajectory(l, GaussianGeodesicParams(xi, lam), grid)
    return field, traj, ige_trace(field, traj)


def integrable_scenario(mu_a, mu_b, rate_a=1.0, rate_b=1.0, tau_end=50.0, points=1024):
    """Exponential geodesics on the integrable composite manifold and their volume trace."""
    from .geometry import analytic_metric
    from .models import IntegrableComposite

    field = analytic_metric(IntegrableComposite())
    field.check([mu_a, mu_b])
    traj = exponential_trajectory([mu_a, mu_b], [rate_a, rate_b], _grid(tau_end, points))
    return field, traj, ige_trace(field, traj)


def chaotic_scenario(mu_a_p, mu_b_p, sigma_b_p, lam, rate_a=None, tau_end=None, points=1024):
    """Chaotic composite: exponential spacing scale plus a Gaussian block of rate ``lam``."""
    from .geometry import analytic_metric
    from .models import ChaoticComposite

    field = analytic_metric(ChaoticComposite())
    field.check([mu_a_p, mu_b_p, sigma_b_p])
    grid = _grid(20.0 / lam if tau_end is None else tau_end, points)
    traj = chaotic_trajectory(mu_a_p, mu_b_p, sigma_b_p, lam, lam if rate_a is None else rate_a, grid)
    return field, traj, ige_trace(field, traj)
