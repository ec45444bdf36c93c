"""Ising-chain spectra and level-spacing statistics.

H(hx, hy) = sum_j sx_j sx_{j+1} + sum_j (hx sx_j + hy sy_j) on an open chain.
Site j is bit n-1-j of the computational basis index, and sy|0> = i|1>.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammainc
from scipy.stats import kstest

from .errors import DomainError, NumericalError
from .models import Brody, brody_gamma

PRESETS = {"regular": (0.0, 2.0), "chaotic": (1.0, 1.0)}
DEGENERACY_EPS = 1e-10
MAX_SITES = 12


@dataclass(frozen=True)
class SpinChainSpec:
    n: int
    hx: float = 0.0
    hy: float = 0.0
    boundary: str = "open"

    def __post_init__(self):
        if int(self.n) != self.n or not 1 <= self.n <= MAX_SITES:
            raise DomainError(f"chain length must be an integer in [1, {MAX_SITES}], got {self.n}")
        if self.boundary != "open":
            raise DomainError("only open boundary conditions are supported")
        if not (math.isfinite(self.hx) and math.isfinite(self.hy)):
            raise DomainError("fields must be finite")

    @classmethod
    def preset(cls, name, n):
        try:
            hx, hy = PRESETS[name]
        except KeyError:
            raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(n, hx, hy)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    sector: str = "full"


@dataclass(frozen=True)
class SpacingSample:
    spacings: np.ndarray

    @property
    def degeneracies(self):
        return int(np.sum(self.spacings < DEGENERACY_EPS))


@dataclass(frozen=True)
class LSDModel:
    kind: str
    beta: Optional[float] = None

    KINDS = ("Poisson", "GOE", "GUE", "GSE", "Brody")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown LSD kind {self.kind!r}")
        if self.kind == "Brody":
            if self.beta is None or not 0.0 <= self.beta <= Brody.BETA_MAX:
                raise DomainError(f"Brody beta must lie in [0, {Brody.BETA_MAX}]")


def build_hamiltonian(spec):
    n = spec.n
    dim = 1 << n
    H = np.zeros((dim, dim), dtype=complex)
    s = np.arange(dim)
    for j in range(n - 1):
        m = (1 << (n - 1 - j)) | (1 << (n - 2 - j))
        H[s ^ m, s] += 1.0
    for j in range(n):
        m = 1 << (n - 1 - j)
        bit = (s >> (n - 1 - j)) & 1
        H[s ^ m, s] += spec.hx + spec.hy * np.where(bit == 0, 1j, -1j)
    return H


def _reflect(s, n):
    out = np.zeros_like(s)
    for j in range(n):
        out |= ((s >> j) & 1) << (n - 1 - j)
    return out


def parity_projectors(n):
    """Orthonormal bases (columns) of the even and odd site-reflection sectors."""
    dim = 1 << n
    s = np.arange(dim)
    r = _reflect(s, n)
    even, odd = [], []
    c = 1.0 / math.sqrt(2.0)
    for a in range(dim):
        b = r[a]
        if b == a:
            v = np.zeros(dim)
            v[a] = 1.0
            even.append(v)
        elif a < b:
            v = np.zeros(dim)
            v[a], v[b] = c, c
            even.append(v)
            w = np.zeros(dim)
            w[a], w[b] = c, -c
            odd.append(w)
    Ue = np.array(even).T
    Uo = np.array(odd).T.reshape(dim, len(odd))
    return Ue, Uo


def parity_split(spec):
    """Hamiltonian blocks in the even and odd reflection sectors."""
    H = build_hamiltonian(spec)
    Ue, Uo = parity_projectors(spec.n)
    return Ue.T @ H @ Ue, Uo.T @ H @ Uo


def eigenvalues(matrix, sector="full"):
    M = np.asarray(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("eigenvalues need a square matrix")
    if M.size and np.max(np.abs(M - M.conj().T)) > 1e-10:
        raise DomainError("matrix is not Hermitian")
    return Spectrum(np.linalg.eigvalsh(M), sector)


def unfold(spectrum, method="mean", trim=0.1, min_levels=32, degree=9):
    """Spacings with unit mean from the central part of the spectrum.

    ``mean`` divides raw spacings by their mean. ``staircase`` first maps levels
    through a polynomial fit of the cumulative level count, which removes the
    variation of the density of states across the band.
    """
    E = np.sort(np.asarray(spectrum.eigenvalues if isinstance(spectrum, Spectrum) else spectrum,
                           dtype=float))
    if E.size < max(2, min_levels):
        raise DomainError(f"unfolding needs at least {max(2, min_levels)} levels, got {E.size}")
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    if method == "staircase":
        count = np.arange(1, E.size + 1, dtype=float)
        scale = max(np.ptp(E), 1e-300)
        z = (E - E.mean()) / scale
        coef = np.polynomial.polynomial.polyfit(z, count, min(degree, E.size - 1))
        levels = np.polynomial.polynomial.polyval(z, coef)
    elif method == "mean":
        levels = E
    else:
        raise ValueError(f"unknown unfolding method {method!r}")
    k = int(math.floor(trim * E.size))
    central = levels[k:E.size - k]
    s = np.diff(central)
    if method == "staircase":
        s = np.maximum(s, 0.0)
    mean = s.mean()
    if not mean > 0:
        raise NumericalError("all spacings vanish; spectrum is fully degenerate")
    return SpacingSample(s / mean)


_SURMISE = {
    # kind: (prefactor, power k, exponent b) for pdf = A theta^k exp(-b theta^2)
    "GOE": (math.pi / 2.0, 1, math.pi / 4.0),
    "GUE": (32.0 / math.pi**2, 2, 4.0 / math.pi),
    "GSE": (2.0**18 / (3.0**6 * math.pi**3), 4, 64.0 / (9.0 * math.pi)),
}


def _theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any(t < 0):
        raise DomainError("spacings must be nonnegative")
    return t


def lsd_pdf(model, theta):
    t = _theta(theta)
    if model.kind == "Poisson":
        return np.exp(-t)
    if model.kind == "Brody":
        b = model.beta
        g = brody_gamma(b)
        return g * (b + 1.0) * t**b * np.exp(-g * t ** (b + 1.0))
    A, k, c = _SURMISE[model.kind]
    return A * t**k * np.exp(-c * t * t)


def lsd_cdf(model, theta):
    t = _theta(theta)
    if model.kind == "Poisson":
        return -np.expm1(-t)
    if model.kind == "Brody":
        b = model.beta
        return -np.expm1(-brody_gamma(b) * t ** (b + 1.0))
    _, k, c = _SURMISE[model.kind]
    return gammainc((k + 1) / 2.0, c * t * t)


def brody_log_likelihood(spacings, beta):
    s = np.asarray(spacings, dtype=float)
    return float(np.sum(Brody()._logpdf(np.array([beta]), s[:, None])))


def fit_brody(sample, tol=1e-4, min_spacings=100):
    """Maximum-likelihood Brody parameter on [0, 1.2] by golden-section search."""
    s = np.asarray(sample.spacings if isinstance(sample, SpacingSample) else sample, dtype=float)
    s = s[s >= DEGENERACY_EPS]
    if s.size == 0:
        raise NumericalError("no nonzero spacings to fit")
    if s.size < min_spacings:
        raise DomainError(f"need at least {min_spacings} nonzero spacings, got {s.size}")

    def f(b):
        return -brody_log_likelihood(s, b)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, Brody.BETA_MAX
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min([(f(a), a), (f(0.5 * (a + b)), 0.5 * (a + b)), (f(b), b)])
    return best[1], -best[0]


def ks_statistic(sample, model):
    s = np.asarray(sample.spacings if isinstance(sample, SpacingSample) else sample, dtype=float)
    if s.size == 0:
        raise DomainError("empty sample")
    return float(kstest(s, lambda t: lsd_cdf(model, np.maximum(t, 0.0))).statistic)


def sector_report(spec, spectrum, method="staircase", trim=0.1):
    sample = unfold(spectrum, method=method, trim=trim)
    beta, loglik = fit_brody(sample)
    return {
        "n": spec.n,
        "hx": spec.hx,
        "hy": spec.hy,
        "sector": spectrum.sector,
        "levels": int(spectrum.eigenvalues.size),
        "beta": beta,
        "log_likelihood": loglik,
        "ks_poisson": ks_statistic(sample, LSDModel("Poisson")),
        "ks_goe": ks_statistic(sample, LSDModel("GOE")),
        "degeneracies": sample.degeneracies,
    }, sample


def analyze_chain(spec, method="staircase", trim=0.1, threads=2):
    """Diagonalize both reflection sectors (concurrently) and fit each.

    Returns ``(reports, samples, spectra, selected)``; the first three are keyed
    by sector name and ``selected`` names the larger sector.
    """
    even, odd = parity_split(spec)
    blocks = {"parity-even": even, "parity-odd": odd}
    blocks = {k: v for k, v in blocks.items() if v.shape[0] > 0}
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {k: pool.submit(eigenvalues, v, k) for k, v in blocks.items()}
        spectra = {k: f.result() for k, f in futures.items()}
    reports, samples = {}, {}
    for k, sp in spectra.items():
        reports[k], samples[k] = sector_report(spec, sp, method, trim)
    selected = max(spectra, key=lambda k: (spectra[k].eigenvalues.size, k == "parity-even"))
    return reports, samples, spectra, selected


__all__ = [
    "PRESETS", "SpinChainSpec", "Spectrum", "SpacingSample", "LSDModel", "build_hamiltonian",
    "parity_split", "parity_projectors", "eigenvalues", "unfold", "lsd_pdf", "lsd_cdf",
    "fit_brody", "ks_statistic", "brody_log_likelihood", "sector_report", "analyze_chain",
]
