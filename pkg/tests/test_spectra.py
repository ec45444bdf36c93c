import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from igchaos.errors import DomainError, NumericalError
from igchaos.spectra import (
    LSDModel, SpacingSample, SpinChainSpec, Spectrum, analyze_chain, build_hamiltonian,
    eigenvalues, fit_brody, ks_statistic, lsd_cdf, lsd_pdf, parity_split, unfold,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
I2 = np.eye(2)
MODELS = [LSDModel("Poisson"), LSDModel("GOE"), LSDModel("GUE"), LSDModel("GSE"),
          LSDModel("Brody", 0.0), LSDModel("Brody", 0.5), LSDModel("Brody", 1.2)]


def kron_site(op, j, n):
    return reduce(np.kron, [op if k == j else I2 for k in range(n)])


def dense_hamiltonian(n, hx, hy):
    """Independent Kronecker-product construction."""
    H = sum(kron_site(SX, j, n) @ kron_site(SX, j + 1, n) for j in range(n - 1))
    return H + sum(hx * kron_site(SX, j, n) + hy * kron_site(SY, j, n) for j in range(n))


def draw_brody(beta, size, seed):
    u = np.random.default_rng(seed).random(size)
    g = gamma((beta + 2) / (beta + 1)) ** (beta + 1)
    return (-np.log1p(-u) / g) ** (1 / (beta + 1))


def draw_goe(size, seed):
    u = np.random.default_rng(seed).random(size)
    return np.sqrt(-4 / math.pi * np.log1p(-u))


# Hamiltonian

def test_single_site_spectrum():
    ev = eigenvalues(build_hamiltonian(SpinChainSpec(1, 1.0, 0.0))).eigenvalues
    np.testing.assert_allclose(ev, [-1, 1], atol=1e-14)


def test_two_site_zero_field_spectrum():
    ev = eigenvalues(build_hamiltonian(SpinChainSpec(2))).eigenvalues
    np.testing.assert_allclose(ev, [-1, -1, 1, 1], atol=1e-14)


@pytest.mark.parametrize("n,hx,hy", [(2, 0.3, -0.7), (3, 1.0, 1.0), (5, 0.0, 2.0), (6, -0.4, 0.9)])
def test_hamiltonian_matches_kronecker_oracle(n, hx, hy):
    H = build_hamiltonian(SpinChainSpec(n, hx, hy))
    assert np.max(np.abs(H - dense_hamiltonian(n, hx, hy))) < 1e-14


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 7), hx=st.floats(-3, 3), hy=st.floats(-3, 3))
def test_hamiltonian_hermitian_traceless(n, hx, hy):
    H = build_hamiltonian(SpinChainSpec(n, hx, hy))
    assert np.max(np.abs(H - H.conj().T)) < 1e-14
    assert abs(np.trace(H)) < 1e-12


@pytest.mark.parametrize("n", [0, 13])
def test_chain_length_range(n):
    with pytest.raises(DomainError):
        SpinChainSpec(n)


def test_presets():
    assert SpinChainSpec.preset("regular", 4) == SpinChainSpec(4, 0.0, 2.0)
    assert SpinChainSpec.preset("chaotic", 4) == SpinChainSpec(4, 1.0, 1.0)
    with pytest.raises(DomainError):
        SpinChainSpec.preset("mixed", 4)


# parity

def test_parity_block_dimensions_two_sites():
    even, odd = parity_split(SpinChainSpec(2, 0.5, 0.5))
    assert even.shape == (3, 3) and odd.shape == (1, 1)


@pytest.mark.parametrize("hx,hy", [(1.0, 1.0), (0.0, 2.0), (0.37, -1.2)])
def test_parity_multiset_matches_full(hx, hy):
    spec = SpinChainSpec(6, hx, hy)
    even, odd = parity_split(spec)
    for b in (even, odd):
        assert np.max(np.abs(b - b.conj().T)) < 1e-14
    merged = np.sort(np.concatenate([eigenvalues(even).eigenvalues, eigenvalues(odd).eigenvalues]))
    full = eigenvalues(build_hamiltonian(spec)).eigenvalues
    assert np.max(np.abs(merged - full)) < 1e-9


# eigenvalues

def test_eigenvalues_diagonal():
    np.testing.assert_allclose(eigenvalues(np.diag([3.0, 1.0, 2.0])).eigenvalues, [1, 2, 3])


def test_eigenvalues_random_hermitian_trace_and_residual():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    H = (A + A.conj().T) / 2
    sp = eigenvalues(H)
    assert abs(sp.eigenvalues.sum() - np.trace(H).real) < 1e-8
    assert np.all(np.diff(sp.eigenvalues) >= 0)
    w, v = np.linalg.eigh(H)
    for k in range(0, 64, 9):
        assert np.linalg.norm(H @ v[:, k] - sp.eigenvalues[k] * v[:, k]) < 1e-8


def test_eigenvalues_rejects_non_hermitian():
    with pytest.raises(DomainError):
        eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


# unfolding

def test_unfold_small_example():
    s = unfold(Spectrum(np.array([0.0, 1.0, 3.0])), trim=0.0, min_levels=3).spacings
    np.testing.assert_allclose(s, [2 / 3, 4 / 3], rtol=1e-14)


def test_unfold_equally_spaced():
    for method in ("mean", "staircase"):
        s = unfold(Spectrum(np.arange(100) * 0.37), method=method).spacings
        np.testing.assert_allclose(s, 1.0, atol=1e-8)


def test_unfold_mean_is_one():
    ev = np.sort(np.random.default_rng(2).normal(size=500))
    for method in ("mean", "staircase"):
        assert unfold(Spectrum(ev), method=method).spacings.mean() == pytest.approx(1.0, abs=1e-10)


def test_unfold_poisson_process():
    ev = np.cumsum(np.random.default_rng(7).exponential(size=5000))
    assert ks_statistic(unfold(Spectrum(ev)), LSDModel("Poisson")) < 0.05


def test_unfold_keeps_degeneracies():
    ev = np.concatenate([np.arange(50.0), [10.0, 20.0]])
    sample = unfold(Spectrum(np.sort(ev)), trim=0.0)
    assert sample.degeneracies == 2


def test_unfold_too_few_levels():
    with pytest.raises(DomainError):
        unfold(Spectrum(np.arange(10.0)))


def test_unfold_fully_degenerate():
    with pytest.raises(NumericalError):
        unfold(Spectrum(np.zeros(64)))


# densities

def test_brody_zero_at_one():
    assert lsd_pdf(LSDModel("Brody", 0.0), 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert math.exp(-1) == pytest.approx(0.367879, abs=1e-6)


def test_brody_one_is_goe():
    t = np.linspace(0, 5, 501)
    np.testing.assert_allclose(lsd_pdf(LSDModel("Brody", 1.0), t), lsd_pdf(LSDModel("GOE"), t),
                               atol=1e-12, rtol=0)


def test_surmise_closed_forms():
    t = np.linspace(0, 4, 41)
    np.testing.assert_allclose(lsd_pdf(LSDModel("GUE"), t),
                               32 / math.pi**2 * t**2 * np.exp(-4 * t**2 / math.pi), rtol=1e-14)
    np.testing.assert_allclose(lsd_pdf(LSDModel("GSE"), t),
                               2**18 / (3**6 * math.pi**3) * t**4 * np.exp(-64 * t**2 / (9 * math.pi)),
                               rtol=1e-14)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.beta}")
def test_pdf_normalized(model):
    val, _ = quad(lambda t: float(lsd_pdf(model, t)), 0, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.beta}")
def test_pdf_mean_one(model):
    val, _ = quad(lambda t: t * float(lsd_pdf(model, t)), 0, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}{m.beta}")
def test_cdf_matches_integrated_pdf(model):
    for t in (0.3, 1.0, 2.2):
        val, _ = quad(lambda x: float(lsd_pdf(model, x)), 0, t, epsabs=1e-14, epsrel=1e-13)
        assert float(lsd_cdf(model, t)) == pytest.approx(val, abs=1e-10)


def test_lsd_model_validation():
    with pytest.raises(DomainError):
        LSDModel("Brody", 1.5)
    with pytest.raises(DomainError):
        LSDModel("Brody")
    with pytest.raises(DomainError):
        LSDModel("COE")
    with pytest.raises(DomainError):
        lsd_pdf(LSDModel("GOE"), -0.1)


# Brody fit

def test_fit_brody_exponential():
    beta, _ = fit_brody(SpacingSample(draw_brody(0.0, 5000, 1)))
    assert beta < 0.1


def test_fit_brody_goe():
    beta, _ = fit_brody(SpacingSample(draw_goe(5000, 2)))
    assert 0.9 <= beta <= 1.1


def test_fit_brody_half():
    beta, _ = fit_brody(SpacingSample(draw_brody(0.5, 5000, 3)))
    assert 0.4 <= beta <= 0.6


def test_fit_brody_is_maximum():
    s = draw_brody(0.7, 2000, 4)
    beta, ll = fit_brody(SpacingSample(s))
    from igchaos.spectra import brody_log_likelihood
    grid = np.linspace(0, 1.2, 241)
    best = max(brody_log_likelihood(s, b) for b in grid)
    assert ll >= best - 1e-6


def test_fit_brody_degenerate():
    with pytest.raises(NumericalError):
        fit_brody(SpacingSample(np.zeros(200)))
    with pytest.raises(DomainError):
        fit_brody(SpacingSample(np.ones(50)))


# KS

def test_ks_quantiles_near_zero():
    m = LSDModel("GOE")
    q = (np.arange(1000) + 0.5) / 1000
    s = np.sqrt(-4 / math.pi * np.log1p(-q))
    assert ks_statistic(s, m) < 1e-3


def test_ks_goe_vs_poisson_separated():
    assert ks_statistic(draw_goe(5000, 5), LSDModel("Poisson")) >= 0.15


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_ks_permutation_invariant(seed):
    s = draw_goe(300, 6)
    p = np.random.default_rng(seed).permutation(s)
    assert ks_statistic(p, LSDModel("GOE")) == ks_statistic(s, LSDModel("GOE"))


def test_ks_empty():
    with pytest.raises(DomainError):
        ks_statistic(np.array([]), LSDModel("GOE"))


# chain analysis

def test_analyze_chain_small():
    reports, samples, spectra, selected = analyze_chain(SpinChainSpec(9, 1.0, 1.0))
    assert selected == "parity-even"
    assert spectra["parity-even"].eigenvalues.size == 272
    assert spectra["parity-odd"].eigenvalues.size == 240
    for rep in reports.values():
        assert {"n", "hx", "hy", "sector", "beta", "ks_poisson", "ks_goe", "degeneracies"} <= set(rep)
