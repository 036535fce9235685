"""Selection criteria on the log scale.

Bayes-factor criteria (gBF, the general BF(a, nu) family, ZE, EB) are log
Bayes factors against the intercept-only model, so larger is better and the
null model scores exactly 0.  Information criteria (AIC, AICc, BIC) are
penalized deviances where smaller is better.

The ``*_kernel`` functions work elementwise on numpy arrays and are shared
by the single-model API below and by the lattice sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy import integrate, optimize
from scipy.special import betaln

from .design import ModelSpectrum
from .errors import (
    AiccUndefined,
    BadHyper,
    InvalidModel,
    NoResidualDf,
    QuadratureNonConverged,
    SaturatedFit,
    Unavailable,
)

A_DEFAULT = -0.75
SATURATION_TOL = 1e-12
EB_LOG1P_G_MAX = 40.0
EB_TOL = 1e-10

BAYES_FACTOR_CRITERIA = ("gbf", "ze", "eb", "bf")
INFORMATION_CRITERIA = ("aic", "aicc", "bic")
CRITERIA = ("gbf", "ze", "eb", "aic", "aicc", "bic")


def higher_is_better(criterion: str) -> bool:
    return criterion in BAYES_FACTOR_CRITERIA


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings for the generalized g-prior.

    ``nu_scheme`` is ``"paper"`` (``nu_i = d_i^2 / d_r^2``), ``"unit"``
    (Zellner's g-prior) or ``"explicit"`` with ``nu`` given.  ``eg_rule``
    sets E[g] for estimation when ``q >= n - 1``: ``"condition"`` uses
    ``d_{n-1}^2 / d_1^2``, a number is used as is.  The Beta-prime ``b`` is
    always ``(n - q - 5)/2 - a``.
    """

    a: float = A_DEFAULT
    nu_scheme: str = "paper"
    nu: Optional[tuple] = None
    eg_rule: Union[str, float] = "condition"

    def __post_init__(self):
        if not -1.0 < self.a < -0.5:
            raise BadHyper(f"a must lie in (-1, -1/2), got {self.a}")
        if self.nu_scheme not in ("paper", "unit", "explicit"):
            raise BadHyper(f"unknown nu scheme {self.nu_scheme!r}")
        if self.nu_scheme == "explicit":
            if self.nu is None or len(self.nu) == 0:
                raise BadHyper("explicit nu scheme needs a nu vector")
            nu = np.asarray(self.nu, dtype=float)
            if np.any(nu < 1.0) or np.any(np.diff(nu) > 0):
                raise BadHyper("explicit nu must be non-increasing and >= 1")
            object.__setattr__(self, "nu", tuple(float(x) for x in nu))
        if isinstance(self.eg_rule, str):
            if self.eg_rule != "condition":
                raise BadHyper(f"unknown eg rule {self.eg_rule!r}")
        elif not float(self.eg_rule) > 0:
            raise BadHyper("a numeric E[g] must be positive")

    def b(self, n: int, q: int) -> float:
        return (n - q - 5) / 2 - self.a

    def nu_for(self, spec: ModelSpectrum) -> np.ndarray:
        if self.nu_scheme == "paper":
            return spec.d**2 / spec.dmin**2
        if self.nu_scheme == "unit":
            return np.ones(spec.r)
        if len(self.nu) != spec.r:
            raise BadHyper(f"explicit nu has length {len(self.nu)}, model needs {spec.r}")
        return np.asarray(self.nu)

    def describe(self) -> dict:
        out = {"a": self.a, "nu_scheme": self.nu_scheme, "eg_rule": self.eg_rule}
        if self.nu is not None:
            out["nu"] = list(self.nu)
        return out


ZELLNER = Hyperparams(nu_scheme="unit")


@dataclass(frozen=True)
class FitStats:
    r2: float
    q2: float
    q: int
    r: int
    n: int
    dbar: float
    dmin: float
    lsnorm2: float
    log_nu_sum: float
    rss_scaled: float
    dmax: float = float("nan")
    nu: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def small(self) -> bool:
        """True in the q < n - 1 regime where the prior on g matters."""
        return self.q < self.n - 1


@dataclass(frozen=True)
class CriterionScore:
    mask: int
    criterion: str
    value: float

    @property
    def higher_is_better(self) -> bool:
        return higher_is_better(self.criterion)

    def better_than(self, other: "CriterionScore") -> bool:
        if other.criterion != self.criterion:
            raise ValueError("scores of different criteria are not comparable")
        if self.higher_is_better:
            return self.value > other.value
        return self.value < other.value


def fit_statistics(spec: ModelSpectrum, hp: Hyperparams = Hyperparams()) -> FitStats:
    if not spec.ok:
        raise InvalidModel(f"model {spec.mask:#x} is {spec.status}")
    pc2 = spec.pc_corr**2
    r2 = float(np.sum(pc2))
    if hp.nu_scheme == "paper":
        # nu never materialized: sum log nu = 2 (sum log d - r log d_r)
        log_nu_sum = 2.0 * float(np.sum(np.log(spec.d)) - spec.r * np.log(spec.dmin))
        q2 = r2 - spec.dmin**2 * spec.lsnorm2
        nu = None
    else:
        nu = hp.nu_for(spec)
        log_nu_sum = float(np.sum(np.log(nu)))
        q2 = float(np.sum((1.0 - 1.0 / nu) * pc2))
    if spec.q >= spec.n - 1:
        r2 = 1.0
    q2 = min(max(q2, 0.0), r2)
    return FitStats(
        r2=r2, q2=q2, q=spec.q, r=spec.r, n=spec.n, dbar=spec.dbar, dmin=spec.dmin,
        lsnorm2=spec.lsnorm2, log_nu_sum=log_nu_sum, rss_scaled=1.0 - r2,
        dmax=float(spec.d[0]), nu=nu,
    )


# -- array kernels -------------------------------------------------------------


def gbf_kernel(n, q, r2, lsnorm2, log_dbar, log_dmin):
    """log gBF; q < n-1 uses R^2, otherwise the Moore-Penrose branch."""
    n = np.asarray(n, dtype=float)
    q = np.asarray(q, dtype=float)
    small = q < n - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        bb = np.where(small, (n - q) / 2 - 0.75, 1.0)
        dmin2_ls = np.exp(2 * log_dmin) * lsnorm2
        few = (
            -q * (log_dbar - log_dmin)
            + betaln(q / 2 + 0.25, bb)
            - betaln(0.25, bb)
            - (0.25 + q / 2) * np.log1p(-r2 + dmin2_ls)
            - bb * np.log1p(-r2)
        )
        many = -(n - 1) * (log_dbar + 0.5 * np.log(lsnorm2))
    return np.where(small, few, many)


def bf_general_kernel(n, q, r2, q2, log_nu_sum, a):
    n = np.asarray(n, dtype=float)
    q = np.asarray(q, dtype=float)
    small = q < n - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        bb = np.where(small, (n - q - 3) / 2 - a, 1.0)
        few = (
            -0.5 * log_nu_sum
            + betaln(q / 2 + a + 1, bb)
            - betaln(a + 1, bb)
            - (q / 2 + a + 1) * np.log1p(-q2)
            - bb * np.log1p(-r2)
        )
        many = -0.5 * log_nu_sum - (n - 1) / 2 * np.log1p(-q2)
    return np.where(small, few, many)


def eb_kernel(n, q, r2):
    """Maximize the known-variance log marginal over g with sigma^2 plugged in.

    The g-dependent part in ``t = log(1 + g)`` is
    ``S (1 - exp(-t)) - (q/2) t`` with ``S = SSR / (2 sigma_hat^2)``;
    golden-section search on ``[0, 40]`` followed by an explicit check of
    ``g = 0``.  Because ``sigma_hat^2`` differs between models, the score
    keeps the full density ``-(n-1)/2 log sigma_hat^2 - TSS / (2 sigma_hat^2)``
    and is reported relative to the null model.  Returns
    ``(value, g_hat, hit_bound)`` arrays.
    """
    n, q, r2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (n, q, r2)))
    shape = n.shape
    n, q, r2 = n.ravel(), q.ravel(), r2.ravel()
    with np.errstate(divide="ignore", invalid="ignore"):
        s = r2 * (n - q - 1) / (2.0 * (1.0 - r2))
    t = np.zeros_like(s)
    # concave in t, so a non-positive slope at 0 pins the maximizer there
    act = np.flatnonzero(np.isfinite(s) & (s > 0.5 * q))
    if act.size:
        sa, qa = s[act], q[act]
        invphi = (np.sqrt(5.0) - 1) / 2
        lo = np.zeros_like(sa)
        hi = np.full_like(sa, EB_LOG1P_G_MAX)
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        while np.max(hi - lo) > EB_TOL:
            # f(x1) - f(x2) without the cancellation of evaluating f twice
            dx = x1 - x2
            left = sa * np.exp(-x1) * np.expm1(dx) - 0.5 * qa * dx >= 0
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            x1, x2 = np.where(left, hi - invphi * (hi - lo), x2), np.where(left, x1, lo + invphi * (hi - lo))
        t[act] = 0.5 * (lo + hi)
    with np.errstate(invalid="ignore"):
        val = s * -np.expm1(-t) - 0.5 * q * t
    at_zero = ~(val > 0.0)
    t = np.where(at_zero, 0.0, t)
    val = np.where(at_zero & np.isfinite(s), 0.0, val)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = (-(n - 1) / 2 * (np.log1p(-r2) - np.log((n - q - 1) / (n - 1)))
                - (n - q - 1) / (2 * (1 - r2)) + (n - 1) / 2)
    val = val + base
    hit = t >= EB_LOG1P_G_MAX - 10 * EB_TOL
    return val.reshape(shape), np.expm1(t).reshape(shape), hit.reshape(shape)


def ic_kernel(n, q, rss):
    """(aic, aicc, bic); aicc is nan where n - q - 3 <= 0."""
    n = np.asarray(n, dtype=float)
    q = np.asarray(q, dtype=float)
    deviance = n * (np.log(2 * np.pi * rss / n) + 1.0)
    k = q + 2
    with np.errstate(divide="ignore", invalid="ignore"):
        aicc = np.where(n - q - 3 > 0, deviance + 2 * k * n / (n - q - 3), np.nan)
    return deviance + 2 * k, aicc, deviance + q * np.log(n)


# -- single-model API ----------------------------------------------------------


def _check_small(q: int, n: int, r2: float, mask: int):
    if q < n - 1 and 1.0 - r2 < SATURATION_TOL:
        raise SaturatedFit(f"model {mask:#x}: 1 - R^2 = {1 - r2:.3g}")


def log_gbf(spec: ModelSpectrum, n: Optional[int] = None) -> CriterionScore:
    """Closed-form log gBF of ``spec`` against the null model."""
    n = spec.n if n is None else n
    if spec.q == 0:
        return CriterionScore(spec.mask, "gbf", 0.0)
    if not spec.ok:
        raise InvalidModel(f"model {spec.mask:#x} is {spec.status}")
    r2 = spec.r2
    _check_small(spec.q, n, r2, spec.mask)
    val = gbf_kernel(n, spec.q, r2, spec.lsnorm2, np.log(spec.dbar), np.log(spec.dmin))
    return CriterionScore(spec.mask, "gbf", float(val))


def log_bf_general(stats: FitStats, hp: Hyperparams = Hyperparams(), mask: int = -1) -> CriterionScore:
    if stats.q == 0:
        return CriterionScore(mask, "bf", 0.0)
    _check_small(stats.q, stats.n, stats.r2, mask)
    val = bf_general_kernel(stats.n, stats.q, stats.r2, stats.q2, stats.log_nu_sum, hp.a)
    return CriterionScore(mask, "bf", float(val))


def log_ze(stats: FitStats, a: float = A_DEFAULT, mask: int = -1) -> CriterionScore:
    """Zellner g-prior special case: unit nu, so Q^2 = 0 and no nu penalty."""
    if stats.q == 0:
        return CriterionScore(mask, "ze", 0.0)
    if not stats.small:
        raise Unavailable("ZE is undefined for q >= n - 1")
    _check_small(stats.q, stats.n, stats.r2, mask)
    val = bf_general_kernel(stats.n, stats.q, stats.r2, 0.0, 0.0, a)
    return CriterionScore(mask, "ze", float(val))


def eb_fit(stats: FitStats) -> Tuple[float, float, bool]:
    """``(log EB score, maximizing g, maximizer at search bound)``."""
    if stats.q == 0:
        return 0.0, 0.0, False
    if stats.q >= stats.n - 2:
        raise NoResidualDf(f"EB needs n - q - 1 >= 2, have n={stats.n}, q={stats.q}")
    _check_small(stats.q, stats.n, stats.r2, -1)
    val, g, hit = eb_kernel(stats.n, stats.q, stats.r2)
    return float(val), float(g), bool(hit)


def eb_score(stats: FitStats, rss: Optional[float] = None, n: Optional[int] = None, mask: int = -1) -> CriterionScore:
    """Empirical Bayes score with ``sigma^2 = RSS / (n - q - 1)``.

    ``rss`` and ``n`` are accepted for symmetry with :func:`ic_scores`; the
    score is scale free and only uses ``R^2`` (``rss`` on any scale gives
    the same answer).
    """
    if n is not None and n != stats.n:
        raise ValueError("n disagrees with stats.n")
    return CriterionScore(mask, "eb", eb_fit(stats)[0])


def ic_scores(rss: float, n: int, q: int, mask: int = -1):
    """``(aic, aicc, bic)``; ``aicc`` is None when ``n - q - 3 <= 0``."""
    if not rss > 0:
        raise SaturatedFit("information criteria need rss > 0")
    aic, aicc, bic = (float(x) for x in ic_kernel(n, q, rss))
    return (
        CriterionScore(mask, "aic", aic),
        None if np.isnan(aicc) else CriterionScore(mask, "aicc", aicc),
        CriterionScore(mask, "bic", bic),
    )


def aicc(rss: float, n: int, q: int, mask: int = -1) -> CriterionScore:
    if n - q - 3 <= 0:
        raise AiccUndefined(f"AICc undefined for n={n}, q={q}")
    return ic_scores(rss, n, q, mask)[1]


def g_prior_diagnostics(hp: Hyperparams, n: int, q: int) -> dict:
    """Mode of g and ``1 / E[1/g]`` under the Beta-prime prior; both O(n)."""
    if q >= n - 1:
        raise Unavailable("the prior on g is irrelevant for q >= n - 1")
    b = hp.b(n, q)
    return {"mode_g": b / (hp.a + 2), "inv_mean_inv_g": b / (hp.a + 1)}


# -- quadrature oracle ---------------------------------------------------------


def log_g_integral(b: float, e: float, m: float, r2: float, q2: float, rtol: float = 1e-10) -> float:
    """``log int_0^inf g^b (1+g)^e {g (1-R^2) + 1 - Q^2}^(-m) dg`` by quadrature.

    Integrates over ``u = log g``, where the integrand is smooth, unimodal
    and decays exponentially in both tails.  The range is split at the
    numerically located mode and the integrand is scaled by its peak value.
    """
    lo_rate, hi_rate = b + 1, m - b - e - 1
    if not (lo_rate > 0 and hi_rate > 0):
        raise ValueError(f"integral diverges (tail rates {lo_rate}, {hi_rate})")
    log_r, log_q = np.log1p(-r2), np.log1p(-q2)

    def logf(u):
        return lo_rate * u + e * np.logaddexp(0.0, u) - m * np.logaddexp(u + log_r, log_q)

    # unimodal in u: the slope falls from b + 1 to b + 1 + e - m
    opt = optimize.minimize_scalar(lambda u: -logf(u), bracket=(-1.0, 1.0), tol=1e-12)
    u0 = float(opt.x)
    peak = float(logf(u0))
    total, err_total = 0.0, 0.0
    for lo, hi in ((-np.inf, u0), (u0, np.inf)):
        res = integrate.quad(lambda u: np.exp(logf(u) - peak), lo, hi,
                             epsabs=0.0, epsrel=rtol, limit=500, full_output=1)
        val, err = res[0], res[1]
        if len(res) > 3:
            raise QuadratureNonConverged(f"quadrature failed: {res[3]}")
        total += val
        err_total += err
    if not total > 0 or err_total > max(1e-9, 10 * rtol) * total:
        raise QuadratureNonConverged(f"quadrature failed: value {total}, error {err_total}")
    return float(np.log(total) + peak)


def log_marginal_oracle(stats: FitStats, hp: Hyperparams = Hyperparams()) -> float:
    """Log Bayes factor by integrating the g-marginal numerically.

    Independent of the Beta-function reduction used by
    :func:`log_bf_general`; only defined for ``q < n - 1``.
    """
    n, q = stats.n, stats.q
    if not stats.small:
        raise Unavailable("the g integral only exists for q < n - 1")
    a = hp.a
    b = hp.b(n, q)
    e = -a - b - 2 + (n - 1 - q) / 2
    logint = log_g_integral(b, e, (n - 1) / 2, stats.r2, stats.q2)
    return -0.5 * stats.log_nu_sum - float(betaln(a + 1, b + 1)) + logint
