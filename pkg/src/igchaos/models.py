"""Parametric probability families on statistical manifolds.

Every family exposes log-densities, scores (gradients of the log-density in the
chart coordinates), seeded sampling and a truncated support box used by the
quadrature routines. Families are stateless descriptions; a parameter point is
passed alongside every call as a :class:`ParamPoint` (or any coordinate
sequence).

Chart conventions
-----------------
``Gaussian``             (mu, sigma)
``GaussianProduct(l)``   (mu_1, sigma_1, ..., mu_3l, sigma_3l), interleaved pairs
``CorrelatedGaussian(r)``(mu_x, sigma_x, mu_y, sigma_y) with r held fixed
``Exponential``          (theta,)
``Weibull(shape_n)``     (lambda_scale,) with the shape held fixed
``WignerDyson``          (phi,)
``IntegrableComposite``  (mu_A, mu_B)
``ChaoticComposite``     (mu_A_p, mu_B_p, sigma_B_p)
``Brody``                (beta,)
``Uniform``              (lower, upper)   reference measure only, no score
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .errors import DomainError, QuadratureError, UnsupportedError
from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec, integrate_box

# log(1e30): one-sided supports are cut where the survival function drops below 1e-30
_TAIL_LOG = 30.0 * math.log(10.0)
_GAUSS_HALF_WIDTH = 12.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParamPoint:
    """A point of a statistical manifold in chart coordinates."""

    coords: tuple

    def __init__(self, coords):
        values = tuple(float(c) for c in np.atleast_1d(np.asarray(coords, dtype=float)).ravel())
        if not values:
            raise DomainError("a parameter point needs at least one coordinate")
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"non-finite coordinate in {values}")
        object.__setattr__(self, "coords", values)

    @property
    def chart_dim(self):
        return len(self.coords)

    def as_array(self):
        return np.array(self.coords)

    def __len__(self):
        return len(self.coords)


def as_coords(params):
    """Coordinates of a ParamPoint or array-like as a float ndarray."""
    if isinstance(params, ParamPoint):
        return params.as_array()
    arr = np.atleast_1d(np.asarray(params, dtype=float)).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite coordinate in {arr}")
    return arr


class DensityFamily:
    """Base class for parametric families.

    Subclasses implement ``_logpdf``, ``_score``, ``_draw`` and ``support_box``
    for a batch of microstates ``X`` of shape ``(N, micro_dim)``.
    """

    name = "family"
    coordinate_names: tuple = ()
    micro_dim = 1

    @property
    def chart_dim(self):
        return len(self.coordinate_names)

    def bounds(self):
        """Open coordinate box ``(lower, upper)`` containing the parameter domain."""
        raise NotImplementedError

    def check(self, params):
        theta = as_coords(params)
        if theta.size != self.chart_dim:
            raise DomainError(
                f"{self.name}: expected {self.chart_dim} coordinates, got {theta.size}"
            )
        lo, hi = self.bounds()
        if np.any(theta <= lo) or np.any(theta >= hi):
            raise DomainError(f"{self.name}: parameters {theta} outside domain")
        return theta

    def _as_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        elif X.ndim == 1:
            X = X.reshape(-1, self.micro_dim) if self.micro_dim > 1 else X.reshape(-1, 1)
        if X.shape[-1] != self.micro_dim:
            raise ValueError(f"{self.name}: microstates must have {self.micro_dim} components")
        return X

    def logpdf(self, params, X):
        """Log-density of a batch of microstates; ``-inf`` outside the support."""
        theta = self.check(params)
        return self._logpdf(theta, self._as_batch(X))

    def scores(self, params, X):
        theta = self.check(params)
        return self._score(theta, self._as_batch(X))

    def draw(self, params, rng, count):
        theta = self.check(params)
        return self._draw(theta, rng, int(count))

    def factor_list(self):
        """Independent factors as ``(family, chart_slice, micro_slice)``, or None."""
        return None

    def param_dict(self, params):
        """JSON-ready parameter mapping (inverse of :func:`family_from_dict`)."""
        raise NotImplementedError

    def _score(self, theta, X):
        raise UnsupportedError(f"{self.name} has no score")

    def __repr__(self):
        return f"{type(self).__name__}()"


# ---------------------------------------------------------------------------
# one-dimensional families

class Gaussian(DensityFamily):
    name = "gaussian"
    coordinate_names = ("mu", "sigma")

    def bounds(self):
        return np.array([-np.inf, 0.0]), np.array([np.inf, np.inf])

    def _logpdf(self, theta, X):
        mu, sigma = theta
        z = (X[:, 0] - mu) / sigma
        return -_LOG_SQRT_2PI - math.log(sigma) - 0.5 * z * z

    def _score(self, theta, X):
        mu, sigma = theta
        d = X[:, 0] - mu
        return np.stack([d / sigma**2, (d * d - sigma**2) / sigma**3], axis=-1)

    def _draw(self, theta, rng, count):
        return rng.normal(theta[0], theta[1], size=(count, 1))

    def support_box(self, theta):
        mu, sigma = theta
        return (np.array([mu - _GAUSS_HALF_WIDTH * sigma]),
                np.array([mu + _GAUSS_HALF_WIDTH * sigma]))

    def param_dict(self, params):
        mu, sigma = self.check(params)
        return {"mu": mu, "sigma": sigma}


class Exponential(DensityFamily):
    """Poisson level-spacing law p(x|theta) = exp(-x/theta)/theta, theta the mean."""

    name = "exponential"
    coordinate_names = ("theta",)

    def bounds(self):
        return np.array([0.0]), np.array([np.inf])

    def _logpdf(self, theta, X):
        (t,) = theta
        x = X[:, 0]
        with np.errstate(invalid="ignore"):
            out = -math.log(t) - x / t
        return np.where(x >= 0, out, -np.inf)

    def _score(self, theta, X):
        (t,) = theta
        return ((X[:, 0] - t) / t**2)[:, None]

    def _draw(self, theta, rng, count):
        return rng.exponential(theta[0], size=(count, 1))

    def support_box(self, theta):
        return np.array([0.0]), np.array([theta[0] * _TAIL_LOG])

    def param_dict(self, params):
        return {"theta": float(self.check(params)[0])}


class Weibull(DensityFamily):
    name = "weibull"
    coordinate_names = ("lambda_scale",)

    def __init__(self, shape_n):
        if not shape_n > 0:
            raise DomainError("Weibull shape must be positive")
        self.shape_n = float(shape_n)

    def bounds(self):
        return np.array([0.0]), np.array([np.inf])

    def _logpdf(self, theta, X):
        (lam,) = theta
        n = self.shape_n
        y = X[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = y / lam
            out = math.log(n / lam) + (n - 1.0) * np.log(u) - u**n
        return np.where(y > 0, out, -np.inf)

    def _score(self, theta, X):
        (lam,) = theta
        n = self.shape_n
        return ((n / lam) * ((X[:, 0] / lam) ** n - 1.0))[:, None]

    def _draw(self, theta, rng, count):
        return theta[0] * rng.weibull(self.shape_n, size=(count, 1))

    def support_box(self, theta):
        return np.array([0.0]), np.array([theta[0] * _TAIL_LOG ** (1.0 / self.shape_n)])

    def param_dict(self, params):
        return {"lambda_scale": float(self.check(params)[0]), "shape_n": self.shape_n}

    def __repr__(self):
        return f"Weibull(shape_n={self.shape_n})"


class WignerDyson(DensityFamily):
    """Wigner surmise with average spacing phi: (pi y / 2 phi^2) exp(-pi y^2 / 4 phi^2)."""

    name = "wigner_dyson"
    coordinate_names = ("phi",)

    def bounds(self):
        return np.array([0.0]), np.array([np.inf])

    def _logpdf(self, theta, X):
        (phi,) = theta
        y = X[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(math.pi * y / (2.0 * phi**2)) - math.pi * y * y / (4.0 * phi**2)
        return np.where(y > 0, out, -np.inf)

    def _score(self, theta, X):
        (phi,) = theta
        y = X[:, 0]
        return (-2.0 / phi + math.pi * y * y / (2.0 * phi**3))[:, None]

    def _draw(self, theta, rng, count):
        u = rng.random(size=(count, 1))
        return 2.0 * theta[0] * np.sqrt(-np.log1p(-u) / math.pi)

    def support_box(self, theta):
        return np.array([0.0]), np.array([2.0 * theta[0] * math.sqrt(_TAIL_LOG / math.pi)])

    def param_dict(self, params):
        return {"phi": float(self.check(params)[0])}


def brody_gamma(beta):
    """Scale constant {Gamma[(beta+2)/(beta+1)]}^(beta+1) giving unit mean spacing."""
    return math.exp((beta + 1.0) * gammaln((beta + 2.0) / (beta + 1.0)))


class Brody(DensityFamily):
    """Brody interpolation between Poisson (beta=0) and Wigner (beta=1) spacings."""

    name = "brody"
    coordinate_names = ("beta",)
    BETA_MAX = 1.2

    def bounds(self):
        return np.array([0.0]), np.array([self.BETA_MAX])

    def check(self, params):
        theta = as_coords(params)
        if theta.size != 1 or not (0.0 <= theta[0] <= self.BETA_MAX):
            raise DomainError(f"Brody beta must lie in [0, {self.BETA_MAX}], got {theta}")
        return theta

    def _logpdf(self, theta, X):
        (b,) = theta
        g = brody_gamma(b)
        s = X[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = math.log(g * (b + 1.0)) + b * np.log(s) - g * s ** (b + 1.0)
        if b == 0.0:
            out = math.log(g) - g * s
        return np.where(s >= 0 if b == 0.0 else s > 0, out, -np.inf)

    def _score(self, theta, X):
        (b,) = theta
        a = (b + 2.0) / (b + 1.0)
        g = brody_gamma(b)
        dlog_g = gammaln(a) - digamma(a) / (b + 1.0)
        s = X[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ls = np.log(s)
            sp = s ** (b + 1.0)
            out = dlog_g + 1.0 / (b + 1.0) + ls - g * sp * (dlog_g + ls)
        return out[:, None]

    def _draw(self, theta, rng, count):
        (b,) = theta
        u = rng.random(size=(count, 1))
        return (-np.log1p(-u) / brody_gamma(b)) ** (1.0 / (b + 1.0))

    def support_box(self, theta):
        (b,) = theta
        return np.array([0.0]), np.array([(_TAIL_LOG / brody_gamma(b)) ** (1.0 / (b + 1.0))])

    def param_dict(self, params):
        return {"beta": float(self.check(params)[0])}


class Uniform(DensityFamily):
    """Uniform density on [lower, upper]; the default reference measure."""

    name = "uniform"
    coordinate_names = ("lower", "upper")

    def bounds(self):
        return np.array([-np.inf, -np.inf]), np.array([np.inf, np.inf])

    def check(self, params):
        theta = as_coords(params)
        if theta.size != 2 or not theta[0] < theta[1]:
            raise DomainError(f"uniform reference needs lower < upper, got {theta}")
        return theta

    def _logpdf(self, theta, X):
        a, b = theta
        x = X[:, 0]
        return np.where((x >= a) & (x <= b), -math.log(b - a), -np.inf)

    def _draw(self, theta, rng, count):
        return rng.uniform(theta[0], theta[1], size=(count, 1))

    def support_box(self, theta):
        return np.array([theta[0]]), np.array([theta[1]])

    def param_dict(self, params):
        a, b = self.check(params)
        return {"lower": a, "upper": b}


# ---------------------------------------------------------------------------
# multivariate families

class CorrelatedGaussian(DensityFamily):
    """Bivariate Gaussian with a fixed correlation coefficient ``r``."""

    name = "correlated_gaussian"
    coordinate_names = ("mu_x", "sigma_x", "mu_y", "sigma_y")
    micro_dim = 2
    R_GUARD = 1e-3

    def __init__(self, r=0.0):
        r = float(r)
        if not abs(r) < 1.0 - self.R_GUARD:
            raise DomainError(f"|r| must be below {1.0 - self.R_GUARD}, got {r}")
        self.r = r

    def bounds(self):
        return (np.array([-np.inf, 0.0, -np.inf, 0.0]),
                np.array([np.inf, np.inf, np.inf, np.inf]))

    def _uv(self, theta, X):
        mx, sx, my, sy = theta
        return (X[:, 0] - mx) / sx, (X[:, 1] - my) / sy

    def _logpdf(self, theta, X):
        _, sx, _, sy = theta
        r = self.r
        q = 1.0 - r * r
        u, v = self._uv(theta, X)
        return (-math.log(2.0 * math.pi * sx * sy * math.sqrt(q))
                - (u * u - 2.0 * r * u * v + v * v) / (2.0 * q))

    def _score(self, theta, X):
        _, sx, _, sy = theta
        r = self.r
        q = 1.0 - r * r
        u, v = self._uv(theta, X)
        return np.stack([
            (u - r * v) / (sx * q),
            -1.0 / sx + (u * u - r * u * v) / (sx * q),
            (v - r * u) / (sy * q),
            -1.0 / sy + (v * v - r * u * v) / (sy * q),
        ], axis=-1)

    def _draw(self, theta, rng, count):
        mx, sx, my, sy = theta
        z = rng.standard_normal(size=(count, 2))
        r = self.r
        x = mx + sx * z[:, 0]
        y = my + sy * (r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1])
        return np.stack([x, y], axis=-1)

    def support_box(self, theta):
        mx, sx, my, sy = theta
        w = _GAUSS_HALF_WIDTH
        return np.array([mx - w * sx, my - w * sy]), np.array([mx + w * sx, my + w * sy])

    def param_dict(self, params):
        mx, sx, my, sy = self.check(params)
        return {"mu_x": mx, "mu_y": my, "sigma_x": sx, "sigma_y": sy, "r": self.r}

    def __repr__(self):
        return f"CorrelatedGaussian(r={self.r})"


class ProductFamily(DensityFamily):
    """Independent product of component families; charts and microstates concatenate."""

    name = "product"

    def __init__(self, parts, coordinate_names=None):
        self.parts = tuple(parts)
        names = []
        for i, p in enumerate(self.parts):
            names.extend(f"{c}_{i}" for c in p.coordinate_names)
        self.coordinate_names = tuple(coordinate_names) if coordinate_names else tuple(names)
        self.micro_dim = sum(p.micro_dim for p in self.parts)
        self._chart_slices = []
        self._micro_slices = []
        c = m = 0
        for p in self.parts:
            self._chart_slices.append(slice(c, c + p.chart_dim))
            self._micro_slices.append(slice(m, m + p.micro_dim))
            c += p.chart_dim
            m += p.micro_dim

    def factor_list(self):
        return list(zip(self.parts, self._chart_slices, self._micro_slices))

    def bounds(self):
        lo, hi = zip(*(p.bounds() for p in self.parts))
        return np.concatenate(lo), np.concatenate(hi)

    def check(self, params):
        theta = as_coords(params)
        if theta.size != self.chart_dim:
            raise DomainError(
                f"{self.name}: expected {self.chart_dim} coordinates, got {theta.size}"
            )
        for p, cs in zip(self.parts, self._chart_slices):
            p.check(theta[cs])
        return theta

    def _logpdf(self, theta, X):
        return sum(p._logpdf(theta[cs], X[:, ms]) for p, cs, ms in self.factor_list())

    def _score(self, theta, X):
        return np.concatenate([p._score(theta[cs], X[:, ms]) for p, cs, ms in self.factor_list()],
                              axis=-1)

    def _draw(self, theta, rng, count):
        return np.concatenate([p._draw(theta[cs], rng, count) for p, cs, _ in self.factor_list()],
                              axis=-1)

    def support_box(self, theta):
        lo, hi = zip(*(p.support_box(theta[cs]) for p, cs, _ in self.factor_list()))
        return np.concatenate(lo), np.concatenate(hi)


class GaussianProduct(ProductFamily):
    """Product of ``3 l`` independent Gaussians; chart dimension ``6 l``."""

    name = "gaussian_product"

    def __init__(self, l):
        l = int(l)
        if l < 1:
            raise DomainError("l must be a positive integer")
        self.l = l
        names = []
        for k in range(3 * l):
            names += [f"mu_{k}", f"sigma_{k}"]
        super().__init__([Gaussian() for _ in range(3 * l)], names)

    @staticmethod
    def point(means, stds):
        """Interleave means and standard deviations into chart coordinates."""
        means = np.asarray(means, dtype=float)
        stds = np.asarray(stds, dtype=float)
        if means.shape != stds.shape:
            raise DomainError("means and stds must have the same length")
        out = np.empty(2 * means.size)
        out[0::2] = means
        out[1::2] = stds
        return ParamPoint(out)

    def param_dict(self, params):
        theta = self.check(params)
        return {"l": self.l, "means": theta[0::2].tolist(), "stds": theta[1::2].tolist()}

    def __repr__(self):
        return f"GaussianProduct(l={self.l})"


class IntegrableComposite(ProductFamily):
    """Poisson level spacings times an exponential field bath."""

    name = "integrable_composite"

    def __init__(self):
        super().__init__([Exponential(), Exponential()], ("mu_A", "mu_B"))

    def param_dict(self, params):
        a, b = self.check(params)
        return {"mu_A": a, "mu_B": b}

    def __repr__(self):
        return "IntegrableComposite()"


class ChaoticComposite(ProductFamily):
    """Wigner-Dyson level spacings times a Gaussian field bath."""

    name = "chaotic_composite"

    def __init__(self):
        super().__init__([WignerDyson(), Gaussian()], ("mu_A_p", "mu_B_p", "sigma_B_p"))

    def param_dict(self, params):
        a, b, s = self.check(params)
        return {"mu_A_p": a, "mu_B_p": b, "sigma_B_p": s}

    def __repr__(self):
        return "ChaoticComposite()"


# ---------------------------------------------------------------------------
# change of random variable

def _probe_points(lo, hi, count=257):
    if math.isfinite(lo) and math.isfinite(hi):
        return np.linspace(lo, hi, count + 2)[1:-1]
    offsets = np.logspace(-6, 6, count)
    if math.isfinite(lo):
        return lo + offsets
    if math.isfinite(hi):
        return hi - offsets
    return np.concatenate([-offsets[::-1], [0.0], offsets])


@dataclass(frozen=True)
class MonotoneMap:
    """A strictly monotone map y = forward(x) of one random variable.

    Construction probes the map on the interior of ``domain`` and raises
    :class:`DomainError` when the derivative vanishes or changes sign, or when
    ``inverse`` fails to undo ``forward`` to 1e-10.
    """

    forward: Callable
    inverse: Callable
    derivative: Callable
    domain: tuple = (-math.inf, math.inf)
    codomain: tuple = (-math.inf, math.inf)
    name: str = "map"

    def __post_init__(self):
        self.check_invertible(*self.domain)

    def check_invertible(self, lo, hi):
        lo = max(lo, self.domain[0])
        hi = min(hi, self.domain[1])
        x = _probe_points(lo, hi)
        with np.errstate(all="ignore"):
            y = np.asarray(self.forward(x), dtype=float)
            # probes where the map itself overflows carry no information
            x = x[np.isfinite(y)]
            d = np.asarray(self.derivative(x), dtype=float)
            back = np.asarray(self.inverse(y[np.isfinite(y)]), dtype=float)
        if x.size == 0 or not np.all(np.isfinite(d)) or np.any(d == 0.0):
            raise DomainError(f"{self.name}: derivative vanishes or diverges on ({lo}, {hi})")
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError(f"{self.name}: derivative changes sign; map is not invertible")
        if np.any(np.abs(back - x) > 1e-10 * np.maximum(1.0, np.abs(x))):
            raise DomainError(f"{self.name}: inverse does not undo forward")

    @property
    def increasing(self):
        x = _probe_points(*self.domain, count=1)
        return float(np.asarray(self.derivative(x))[0]) > 0


def identity_map():
    return MonotoneMap(lambda x: x, lambda y: y, lambda x: np.ones_like(np.asarray(x, float)),
                       name="identity")


def affine_map(scale, shift=0.0):
    if scale == 0:
        raise DomainError("affine map needs a nonzero scale")
    return MonotoneMap(lambda x: scale * x + shift, lambda y: (y - shift) / scale,
                       lambda x: np.full_like(np.asarray(x, float), scale),
                       name=f"affine({scale}, {shift})")


def power_map(zeta, n):
    """y = (x / zeta)^(1/n) on [0, inf): exponential spacings become Weibull."""
    if not (zeta > 0 and n > 0):
        raise DomainError("power map needs zeta > 0 and n > 0")
    return MonotoneMap(
        lambda x: (np.asarray(x, float) / zeta) ** (1.0 / n),
        lambda y: zeta * np.asarray(y, float) ** n,
        lambda x: (1.0 / (n * zeta)) * (np.asarray(x, float) / zeta) ** (1.0 / n - 1.0),
        domain=(0.0, math.inf), codomain=(0.0, math.inf), name=f"power(zeta={zeta}, n={n})",
    )


class TransformedFamily(DensityFamily):
    """Density of y = f(x) for x drawn from a one-dimensional base family."""

    micro_dim = 1

    def __init__(self, base, mapping):
        if base.micro_dim != 1:
            raise UnsupportedError("pushforward is defined for one-dimensional microstates")
        self.base = base
        self.mapping = mapping
        self.name = f"{base.name}|{mapping.name}"
        self.coordinate_names = base.coordinate_names

    def bounds(self):
        return self.base.bounds()

    def check(self, params):
        return self.base.check(params)

    def _logpdf(self, theta, X):
        y = X[:, 0]
        lo, hi = self.mapping.codomain
        inside = (y >= lo) & (y <= hi)
        with np.errstate(all="ignore"):
            x = np.asarray(self.mapping.inverse(np.where(inside, y, lo if math.isfinite(lo) else 0.0)))
            jac = np.abs(np.asarray(self.mapping.derivative(x), dtype=float))
            out = self.base._logpdf(theta, x[:, None]) - np.log(jac)
        out = np.where(inside & np.isfinite(jac) & (jac > 0), out, -np.inf)
        return out

    def _score(self, theta, X):
        x = np.asarray(self.mapping.inverse(X[:, 0]))
        return self.base._score(theta, x[:, None])

    def _draw(self, theta, rng, count):
        return np.asarray(self.mapping.forward(self.base._draw(theta, rng, count)))

    def support_box(self, theta):
        lo, hi = self.base.support_box(theta)
        a, b = self.mapping.forward(lo), self.mapping.forward(hi)
        return np.minimum(a, b), np.maximum(a, b)

    def param_dict(self, params):
        return self.base.param_dict(params)

    def __repr__(self):
        return f"TransformedFamily({self.base!r}, {self.mapping.name})"


# ---------------------------------------------------------------------------
# operations

def log_density(family, params, x):
    """Natural log of the density at one microstate (``-inf`` outside the support)."""
    return float(family.logpdf(params, np.reshape(np.asarray(x, float), (1, family.micro_dim)))[0])


def score(family, params, x):
    """Gradient of the log-density in chart coordinates at one microstate."""
    return family.scores(params, np.reshape(np.asarray(x, float), (1, family.micro_dim)))[0]


def sample(family, params, seed, count):
    """Draw ``count`` microstates, shape ``(count, micro_dim)``, reproducibly from ``seed``."""
    if int(count) < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return family.draw(params, rng, count)


def pushforward(family, params, mapping):
    """Family of y = mapping(x); the map is checked on the support at ``params``."""
    theta = family.check(params)
    lo, hi = family.support_box(theta)
    mapping.check_invertible(float(lo[0]), float(hi[0]))
    return TransformedFamily(family, mapping)


@dataclass(frozen=True)
class NormalizationResult:
    total: float
    error: float
    mean: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)


def _integrate_moments(family, theta, spec):
    lo, hi = family.support_box(theta)
    centre = 0.5 * (lo + hi)

    def f(X):
        p = np.exp(family._logpdf(theta, X))
        d = X - centre
        return np.concatenate([p[:, None], p[:, None] * d, p[:, None] * d * d], axis=1)

    est, err = integrate_box(f, lo, hi, spec)
    k = family.micro_dim
    total = est[0]
    m1 = est[1:1 + k] / total
    var = est[1 + k:] / total - m1 * m1
    return total, float(err[0]), centre + m1, np.sqrt(np.maximum(var, 0.0))


def normalization_integral(family, params, quadrature=DEFAULT_QUADRATURE):
    """Quadrature of the density over its support with first and second moments.

    Microstate spaces of dimension one or two are integrated directly; larger
    independent products are integrated factor by factor.
    """
    theta = family.check(params)
    if family.micro_dim <= 2:
        total, err, mean, std = _integrate_moments(family, theta, quadrature)
        return NormalizationResult(float(total), err, mean, std)
    factors = family.factor_list()
    if factors is None:
        raise UnsupportedError(f"{family.name}: no quadrature beyond two microvariables")
    total, err, means, stds = 1.0, 0.0, [], []
    for part, cs, _ in factors:
        r = normalization_integral(part, theta[cs], quadrature)
        total *= r.total
        err += r.error
        means.append(r.mean)
        stds.append(r.std)
    return NormalizationResult(total, err, np.concatenate(means), np.concatenate(stds))


def relative_entropy(p_family, p_params, m_family=None, m_params=None,
                     quadrature=DEFAULT_QUADRATURE):
    """S = -integral of p log(p/m), i.e. minus the Kullback-Leibler divergence.

    With no reference given, ``m`` is uniform on the truncated support of ``p``.
    """
    theta = p_family.check(p_params)
    if p_family.micro_dim > 2:
        raise UnsupportedError("relative entropy is integrated for at most two microvariables")
    lo, hi = p_family.support_box(theta)
    if m_family is None:
        if p_family.micro_dim != 1:
            m_family = ProductFamily([Uniform(), Uniform()])
            m_params = [lo[0], hi[0], lo[1], hi[1]]
        else:
            m_family, m_params = Uniform(), [lo[0], hi[0]]
    if m_family.micro_dim != p_family.micro_dim:
        raise DomainError("reference and density live on different microstate spaces")
    m_theta = m_family.check(m_params)

    def f(X):
        lp = p_family._logpdf(theta, X)
        lm = m_family._logpdf(m_theta, X)
        p = np.exp(lp)
        with np.errstate(invalid="ignore"):
            out = np.where(p > 0, p * (lp - lm), 0.0)
        return out[:, None]

    est, _ = integrate_box(f, lo, hi, quadrature)
    if not math.isfinite(est[0]):
        raise QuadratureError("relative entropy diverged: reference vanishes on the support")
    return -float(est[0])


# ---------------------------------------------------------------------------
# JSON construction

_ALIASES = {
    "gaussian": "gaussian",
    "gaussian_product": "gaussian_product",
    "correlated": "correlated_gaussian",
    "correlated_gaussian": "correlated_gaussian",
    "exponential": "exponential",
    "poisson": "exponential",
    "weibull": "weibull",
    "wigner_dyson": "wigner_dyson",
    "integrable": "integrable_composite",
    "integrable_composite": "integrable_composite",
    "chaotic": "chaotic_composite",
    "chaotic_composite": "chaotic_composite",
    "brody": "brody",
    "uniform": "uniform",
}


def canonical_family_name(name):
    key = str(name).strip().lower().replace("-", "_")
    try:
        return _ALIASES[key]
    except KeyError:
        raise DomainError(f"unknown family {name!r}") from None


def _need(params, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise DomainError(f"missing parameters: {', '.join(missing)}")
    return [params[k] for k in keys]


def family_from_dict(obj):
    """Build ``(family, ParamPoint)`` from ``{"family": name, "params": {...}}``."""
    name = canonical_family_name(obj.get("family", ""))
    params = obj.get("params", {})
    if name == "gaussian":
        fam, coords = Gaussian(), _need(params, "mu", "sigma")
    elif name == "gaussian_product":
        l, means, stds = _need(params, "l", "means", "stds")
        fam = GaussianProduct(l)
        if len(means) != 3 * fam.l or len(stds) != 3 * fam.l:
            raise DomainError("gaussian_product needs 3l means and 3l stds")
        point = GaussianProduct.point(means, stds)
        fam.check(point)
        return fam, point
    elif name == "correlated_gaussian":
        mx, my, sx, sy, r = _need(params, "mu_x", "mu_y", "sigma_x", "sigma_y", "r")
        fam, coords = CorrelatedGaussian(r), [mx, sx, my, sy]
    elif name == "exponential":
        fam, coords = Exponential(), _need(params, "theta")
    elif name == "weibull":
        lam, n = _need(params, "lambda_scale", "shape_n")
        fam, coords = Weibull(n), [lam]
    elif name == "wigner_dyson":
        fam, coords = WignerDyson(), _need(params, "phi")
    elif name == "integrable_composite":
        fam, coords = IntegrableComposite(), _need(params, "mu_A", "mu_B")
    elif name == "chaotic_composite":
        fam, coords = ChaoticComposite(), _need(params, "mu_A_p", "mu_B_p", "sigma_B_p")
    elif name == "brody":
        fam, coords = Brody(), _need(params, "beta")
    else:
        fam, coords = Uniform(), _need(params, "lower", "upper")
    point = ParamPoint(coords)
    fam.check(point)
    return fam, point


def family_to_dict(family, params):
    return {"family": family.name, "params": family.param_dict(params)}


def families_by_name():
    """Zero-argument constructors for the built-in families (fixed structural defaults)."""
    return {
        "gaussian": Gaussian,
        "gaussian_product": lambda: GaussianProduct(1),
        "correlated_gaussian": lambda: CorrelatedGaussian(0.0),
        "exponential": Exponential,
        "weibull": lambda: Weibull(2.0),
        "wigner_dyson": WignerDyson,
        "integrable_composite": IntegrableComposite,
        "chaotic_composite": ChaoticComposite,
        "brody": Brody,
    }


def random_point(family, rng):
    """A random interior parameter point, used by property tests and sweeps."""
    if isinstance(family, Brody):
        return ParamPoint([rng.uniform(0.05, 1.15)])
    lo, hi = family.bounds()
    coords = np.empty(family.chart_dim)
    for i, (a, b) in enumerate(zip(lo, hi)):
        if a == 0.0 and b == np.inf:
            coords[i] = rng.uniform(0.3, 3.0)
        else:
            coords[i] = rng.uniform(-2.0, 2.0)
    return ParamPoint(coords)


__all__ = [
    "ParamPoint", "DensityFamily", "Gaussian", "GaussianProduct", "CorrelatedGaussian",
    "Exponential", "Weibull", "WignerDyson", "Brody", "Uniform", "ProductFamily",
    "IntegrableComposite", "ChaoticComposite", "TransformedFamily", "MonotoneMap",
    "identity_map", "affine_map", "power_map", "log_density", "score", "sample",
    "pushforward", "relative_entropy", "normalization_integral", "NormalizationResult",
    "family_from_dict", "family_to_dict", "brody_gamma", "random_point", "QuadratureSpec",
]
