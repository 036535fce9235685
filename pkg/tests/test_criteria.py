import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats as sps
from scipy.special import betaln

from gbfselect.criteria import (
    A_DEFAULT, EB_LOG1P_G_MAX, Hyperparams, bf_general_kernel, eb_fit, eb_kernel,
    fit_statistics, g_prior_diagnostics, gbf_kernel, higher_is_better, ic_scores, aicc,
    log_bf_general, log_gbf, log_marginal_oracle, log_ze,
)
from gbfselect.design import RawDataset, model_spectrum, standardize
from gbfselect.errors import AiccUndefined, BadHyper, InvalidModel, NoResidualDf, SaturatedFit, Unavailable
from gbfselect.oracle import orthogonal_design

from conftest import make_design, make_raw


def ze_display(n, q, r2):
    """ZE exactly as displayed with the simulation study."""
    return (-((n - q) / 2 - 0.75) * math.log(1 - r2)
            + betaln(q / 2 + 0.25, (n - q) / 2 - 0.75) - betaln(0.25, (n - q) / 2 - 0.75))


def full_spec(rng, n, q, **kw):
    d = make_design(rng, n, q, **kw)
    return d, model_spectrum(d, (1 << q) - 1, strict=True)


# -- fit statistics ----------------------------------------------------------


def test_q2_two_paths(rng):
    for _ in range(20):
        _, spec = full_spec(rng, 10, 3)
        fast = fit_statistics(spec, Hyperparams())
        nu = spec.d**2 / spec.dmin**2
        long = np.sum((1 - 1 / nu) * spec.pc_corr**2)
        assert abs(fast.q2 - long) < 1e-12
        assert abs(fast.log_nu_sum - np.sum(np.log(nu))) < 1e-12
        assert 0 <= fast.q2 <= fast.r2 <= 1


def test_unit_nu_zeroes_q2(rng):
    _, spec = full_spec(rng, 15, 4)
    st_ = fit_statistics(spec, Hyperparams(nu_scheme="unit"))
    assert st_.q2 == 0.0 and st_.log_nu_sum == 0.0


def test_orthogonal_response_gives_zero_r2():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((12, 2))
    Xc = X - X.mean(0)
    y = rng.standard_normal(12)
    y -= y.mean()
    y -= Xc @ np.linalg.lstsq(Xc, y, rcond=None)[0]
    d = standardize(RawDataset(X, y))
    s = fit_statistics(model_spectrum(d, 0b11))
    assert s.r2 < 1e-24 and s.q2 < 1e-24


# -- closed forms --------------------------------------------------------------


def test_ze_matches_display(rng):
    for n, q in [(30, 4), (12, 1), (40, 20), (8, 5)]:
        _, spec = full_spec(rng, n, q)
        s = fit_statistics(spec, Hyperparams(nu_scheme="unit"))
        assert abs(log_ze(s).value - ze_display(n, q, s.r2)) < 1e-12
        assert abs(log_bf_general(s, Hyperparams(nu_scheme="unit")).value - log_ze(s).value) < 1e-12


def test_gbf_equals_general_at_default(rng):
    for _ in range(50):
        n = int(rng.integers(8, 40))
        q = int(rng.integers(1, n - 1))
        _, spec = full_spec(rng, n, q)
        s = fit_statistics(spec, Hyperparams())
        assert abs(log_gbf(spec).value - log_bf_general(s, Hyperparams()).value) < 1e-12 * max(1, abs(log_gbf(spec).value))


def test_gbf_display_formula(rng):
    n, q = 25, 4
    _, spec = full_spec(rng, n, q)
    r2, dmin, ls = spec.r2, spec.dmin, spec.lsnorm2
    direct = (-q * math.log(spec.dbar / dmin)
              + betaln(q / 2 + 0.25, (n - q) / 2 - 0.75) - betaln(0.25, (n - q) / 2 - 0.75)
              - (0.25 + q / 2) * math.log(1 - r2 + dmin**2 * ls)
              - ((n - q) / 2 - 0.75) * math.log(1 - r2))
    assert abs(log_gbf(spec).value - direct) < 1e-12


def test_orthogonal_gbf_equals_ze():
    rng = np.random.default_rng(5)
    for n, q in [(10, 2), (30, 7), (50, 12)]:
        d = standardize(orthogonal_design(rng, n, q))
        spec = model_spectrum(d, (1 << q) - 1)
        ze = log_ze(fit_statistics(spec, Hyperparams(nu_scheme="unit"))).value
        assert abs(log_gbf(spec).value - ze) < 1e-10


def test_large_q_branch(rng):
    d = make_design(rng, 8, 10)
    spec = model_spectrum(d, (1 << 10) - 1)
    expect = -(8 - 1) * (math.log(spec.dbar) + 0.5 * math.log(spec.lsnorm2))
    assert abs(log_gbf(spec).value - expect) < 1e-12
    s = fit_statistics(spec, Hyperparams())
    assert s.r2 == 1.0 and s.r == 7
    assert abs(log_bf_general(s, Hyperparams()).value - expect) < 1e-10
    # unit nu cannot separate models when q >= n - 1
    assert log_bf_general(fit_statistics(spec, Hyperparams(nu_scheme="unit")), Hyperparams(nu_scheme="unit")).value == 0.0
    with pytest.raises(Unavailable):
        log_ze(s)


def test_null_and_errors(rng):
    assert float(gbf_kernel(10, 0, 0.0, 0.0, 0.0, 0.0)) == 0.0
    raw = make_raw(rng, 10, 2)
    dup = standardize(RawDataset(np.column_stack([raw.X, raw.X[:, 0]]), raw.y))
    with pytest.raises(InvalidModel):
        log_gbf(model_spectrum(dup, 0b101))
    X = rng.standard_normal((10, 2))
    sat = standardize(RawDataset(X, 3 * X[:, 0] - X[:, 1]))
    with pytest.raises(SaturatedFit):
        log_gbf(model_spectrum(sat, 0b11))


def test_gbf_increasing_in_r2():
    r2 = np.linspace(0.01, 0.95, 200)
    vals = gbf_kernel(30, 4, r2, 0.02 * np.ones_like(r2), math.log(2.0), math.log(1.0))
    assert np.all(np.diff(vals) > 0)


def test_beta_domain_everywhere():
    for n in range(4, 61):
        q = np.arange(1, n - 1)
        for a in (-0.99, -0.75, -0.51):
            v = bf_general_kernel(n, q, 0.5, 0.2, 0.0, a)
            assert np.all(np.isfinite(v))
            assert np.all(Hyperparams(a=a).b(n, q) > -1)


def test_null_ranks_first_without_signal():
    # response orthogonal to every predictor: every alternative has R^2 = 0
    for n, q in [(10, 1), (30, 5), (20, 17)]:
        lhs = betaln(q / 2 + 0.25, (n - q) / 2 - 0.75)
        rhs = betaln(0.25, (n - q) / 2 - 0.75)
        assert lhs < rhs
        assert gbf_kernel(n, q, 0.0, 0.0, 0.3, 0.0) < 0


# -- quadrature oracle -----------------------------------------------------------


@pytest.mark.parametrize("a", [-0.9, -0.75, -0.6])
@pytest.mark.parametrize("scheme", ["paper", "unit", "explicit"])
def test_closed_form_matches_quadrature(rng, a, scheme):
    for n, q in [(20, 3), (12, 9), (40, 2), (33, 30)]:
        _, spec = full_spec(rng, n, q)
        nu = tuple(np.sort(1 + rng.exponential(1.0, q))[::-1]) if scheme == "explicit" else None
        hp = Hyperparams(a=a, nu_scheme=scheme, nu=nu)
        s = fit_statistics(spec, hp)
        cf = log_bf_general(s, hp).value
        assert abs(cf - log_marginal_oracle(s, hp)) < 1e-6 * max(1.0, abs(cf))


def test_oracle_beta_identity():
    # R^2 = Q^2 = 0 turns the g integral into a Beta function
    for n, q, a in [(20, 3, -0.75), (15, 10, -0.6), (40, 1, -0.9)]:
        hp = Hyperparams(a=a, nu_scheme="unit")
        s = dict(r2=0.0, q2=0.0, q=q, r=q, n=n, dbar=1.0, dmin=1.0, lsnorm2=0.0, log_nu_sum=0.0, rss_scaled=1.0)
        from gbfselect.criteria import FitStats

        b = hp.b(n, q)
        expect = betaln(q / 2 + a + 1, b + 1) - betaln(a + 1, b + 1)
        assert abs(log_marginal_oracle(FitStats(**s), hp) - expect) < 1e-9


# -- empirical Bayes -------------------------------------------------------------


def _eb_density_oracle(design, mask, g):
    """Log marginal density of the centered response at sigma^2 = RSS / (n - q - 1).

    Works in an orthonormal basis of the centered subspace, where the
    response is N(0, sigma^2 (I + g P)).
    """
    n = design.n
    H = np.eye(n) - 1.0 / n
    basis = np.linalg.svd(H)[0][:, : n - 1]
    z = basis.T @ design.v
    if mask:
        cols = [j for j in range(design.p) if mask >> j & 1]
        Xb = basis.T @ design.X[:, cols]
        P = Xb @ np.linalg.solve(Xb.T @ Xb, Xb.T)
        q = len(cols)
    else:
        P, q = np.zeros((n - 1, n - 1)), 0
    rss = z @ (np.eye(n - 1) - P) @ z
    s2 = rss / (n - q - 1)
    return sps.multivariate_normal(np.zeros(n - 1), s2 * (np.eye(n - 1) + g * P)).logpdf(z)


def test_eb_score_matches_density_oracle(rng):
    d = make_design(rng, 20, 3, signal=(0.8, 0.3))
    null = _eb_density_oracle(d, 0, 0.0)
    for mask in (0b001, 0b011, 0b111, 0b100):
        spec = model_spectrum(d, mask)
        val, g, hit = eb_fit(fit_statistics(spec))
        assert not hit
        oracle = _eb_density_oracle(d, mask, g) - null
        assert abs(val - oracle) < 1e-8
        # no g on a coarse grid beats the reported maximum
        grid = np.expm1(np.linspace(0, 12, 400))
        best = max(_eb_density_oracle(d, mask, gg) for gg in grid) - null
        assert best <= val + 1e-9


def test_eb_grid_scan():
    n, q, r2 = 30, 3, 0.6
    val, g, _ = eb_kernel(n, q, r2)
    s = r2 * (n - q - 1) / (2 * (1 - r2))
    t = np.linspace(0, EB_LOG1P_G_MAX, 10**6 + 1)
    obj = s * -np.expm1(-t) - q / 2 * t
    t_grid = t[np.argmax(obj)]
    assert abs(math.log1p(float(g)) - t_grid) < 1e-4
    # first-order condition at the interior optimum
    assert abs(s * math.exp(-math.log1p(float(g))) - q / 2) < 1e-8


def test_eb_boundary_and_null(rng):
    val, g, hit = eb_kernel(30, 3, 0.0)
    assert float(g) == 0.0 and not bool(hit)
    # value at g = 0 is the plug-in variance correction alone
    base = -(29 / 2) * -math.log(26 / 29) - 26 / 2 + 29 / 2
    assert abs(float(val) - base) < 1e-12
    assert float(eb_kernel(10, 0, 0.0)[0]) == 0.0
    with pytest.raises(NoResidualDf):
        eb_fit(fit_statistics(model_spectrum(make_design(rng, 6, 4), 0b1111)))


def test_eb_same_r2_same_score():
    a = eb_kernel(25, 4, 0.37)
    b = eb_kernel(25, 4, 0.37)
    assert a[0] == b[0]


# -- information criteria --------------------------------------------------------


def test_ic_direct_likelihood():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([1.1, 1.9, 3.2, 3.9, 5.3])
    X = np.column_stack([np.ones(5), x])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    res = y - X @ beta
    rss = res @ res
    mll = sps.norm(0, math.sqrt(rss / 5)).logpdf(res).sum()
    aic, aicc_s, bic = ic_scores(rss, 5, 1)
    assert abs(aic.value - (-2 * mll + 2 * 3)) < 1e-10
    assert abs(bic.value - (-2 * mll + math.log(5))) < 1e-10
    assert abs(aicc_s.value - aic.value - 2 * 3 * (5 / 1 - 1)) < 1e-10
    assert ic_scores(rss, 5, 2)[1] is None
    with pytest.raises(AiccUndefined):
        aicc(rss, 5, 2)
    assert abs(aicc(rss, 10, 1).value - ic_scores(rss, 10, 1)[0].value - 2 * 3 * (10 / 6 - 1)) < 1e-10
    assert not higher_is_better("aic") and higher_is_better("gbf")


def test_ic_penalty_differences():
    a1, _, b1 = ic_scores(2.0, 30, 3)
    a2, _, b2 = ic_scores(2.0, 30, 4)
    assert abs(a2.value - a1.value - 2) < 1e-12
    assert abs(b2.value - b1.value - math.log(30)) < 1e-12
    with pytest.raises(AiccUndefined):
        aicc(1.0, 30, 27)


# -- prior diagnostics and hyperparameters -------------------------------------------


def test_g_prior_diagnostics():
    out = g_prior_diagnostics(Hyperparams(), 30, 4)
    assert abs(out["mode_g"] - 9) < 1e-12 and abs(out["inv_mean_inv_g"] - 45) < 1e-12
    # affine in n at fixed q
    vals = [g_prior_diagnostics(Hyperparams(), n, 4)["inv_mean_inv_g"] for n in (20, 30, 40)]
    assert abs((vals[2] - vals[1]) - (vals[1] - vals[0])) < 1e-12


@pytest.mark.parametrize("a", [-0.9, -0.75, -0.6])
def test_inv_mean_inv_g_quadrature(a):
    hp = Hyperparams(a=a)
    n, q = 30, 4
    b = hp.b(n, q)
    norm = math.exp(betaln(a + 1, b + 1))
    f = lambda g: g ** (b - 1) * (1 + g) ** (-a - b - 2) / norm
    e_inv = integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0]
    assert abs(1 / e_inv - g_prior_diagnostics(hp, n, q)["inv_mean_inv_g"]) < 1e-8


def test_hyperparams_validation():
    for bad in (dict(a=-0.5), dict(a=-1.0), dict(nu_scheme="x"), dict(nu_scheme="explicit"),
                dict(nu_scheme="explicit", nu=(1.0, 2.0)), dict(nu_scheme="explicit", nu=(0.5,)),
                dict(eg_rule="median"), dict(eg_rule=-1.0)):
        with pytest.raises(BadHyper):
            Hyperparams(**bad)
    assert Hyperparams().a == A_DEFAULT


# -- invariances -----------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_bayes_scores_invariant(seed, c, k):
    rng = np.random.default_rng(seed)
    raw = make_raw(rng, 20, 4, signal=(1.0, 0.5))
    perm = rng.permutation(4)
    flip = rng.choice([-1.0, 1.0], 4)
    variants = [raw, RawDataset(raw.X, c * raw.y + k), RawDataset(raw.X[:, perm] * flip, raw.y)]
    scores = []
    for i, r in enumerate(variants):
        d = standardize(r)
        cols = [0, 2, 3] if i < 2 else [int(np.flatnonzero(perm == j)[0]) for j in (0, 2, 3)]
        spec = model_spectrum(d, d.mask_of(cols))
        s = fit_statistics(spec)
        scores.append([log_gbf(spec).value, log_ze(s).value, eb_fit(s)[0]])
    scores = np.array(scores)
    assert np.allclose(scores[1:], scores[0], rtol=0, atol=1e-10 * max(1, np.abs(scores).max()))
