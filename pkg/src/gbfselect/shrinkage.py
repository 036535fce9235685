"""Fitted values under the posterior, conditionally on one selected model.

The Bayes estimator of ``X beta`` under scaled quadratic loss shrinks the
least-squares fit along each principal component by ``1 - H / nu_i``.  With
the default design-dependent ``nu`` the smallest components are shrunk the
most.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import FitStats, Hyperparams
from .design import ModelSpectrum, StandardizedDesign
from .errors import InvalidModel, SaturatedFit
from .criteria import SATURATION_TOL


@dataclass(frozen=True)
class ShrinkageFit:
    mask: int
    H: float
    fitted: np.ndarray
    weights: np.ndarray

    def to_dict(self, names=None) -> dict:
        out = {"mask": self.mask, "H": self.H, "shrink_weights": self.weights.tolist(),
               "fitted": self.fitted.tolist()}
        if names is not None:
            out["columns"] = list(names)
        return out


def prior_mean_g(stats: FitStats, hp: Hyperparams) -> float:
    """E[g] used when q >= n - 1, where the data cannot inform it."""
    if hp.eg_rule == "condition":
        return (stats.dmin / stats.dmax) ** 2
    return float(hp.eg_rule)


def shrink_factor(stats: FitStats, hp: Hyperparams = Hyperparams()) -> float:
    """``H(y) = E[(1+g)^-1 / sigma^2 | y] / E[1 / sigma^2 | y]``."""
    if stats.q < 1:
        raise InvalidModel("shrinkage needs at least one predictor")
    if not stats.small:
        return 1.0 / (1.0 + prior_mean_g(stats, hp))
    if stats.rss_scaled < SATURATION_TOL:
        raise SaturatedFit(f"1 - R^2 = {stats.rss_scaled:.3g}")
    n, q, a = stats.n, stats.q, hp.a
    ratio = (1.0 - stats.q2) / (1.0 - stats.r2) * ((n - q - 3) / 2 - a) / (q / 2 + a + 1)
    return 1.0 / (1.0 + ratio)


def component_fit(spec: ModelSpectrum, design: StandardizedDesign, weights: np.ndarray) -> np.ndarray:
    """``ybar + sum_i weights_i (u_i'v) u_i`` without forming U in the q x q case."""
    if not spec.ok:
        raise InvalidModel(f"model {spec.mask:#x} is {spec.status}")
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (spec.r,))
    if spec.w is not None:
        cols = np.flatnonzero([(spec.mask >> j) & 1 for j in range(design.p)])
        Xg = design.X[:, cols]
        proj = spec.w.T @ design.crossmom[cols]
        coef = spec.w @ (weights * proj / spec.d**2)
        centered = Xg @ coef
    else:
        centered = spec.u @ (weights * (spec.u.T @ design.v))
    return design.ybar + centered


def least_squares_fit(spec: ModelSpectrum, design: StandardizedDesign) -> np.ndarray:
    if spec.q == 0:
        return np.full(design.n, design.ybar)
    return component_fit(spec, design, 1.0)


def fitted_values(spec: ModelSpectrum, design: StandardizedDesign, H: float,
                  hp: Hyperparams = Hyperparams()) -> ShrinkageFit:
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    nu = hp.nu_for(spec)
    weights = 1.0 - H / nu
    return ShrinkageFit(mask=spec.mask, H=float(H), fitted=component_fit(spec, design, weights), weights=weights)


def bayes_fit(spec: ModelSpectrum, design: StandardizedDesign, hp: Hyperparams = Hyperparams()) -> ShrinkageFit:
    """Shrink factor and fitted values in one call."""
    from .criteria import fit_statistics

    H = shrink_factor(fit_statistics(spec, hp), hp)
    return fitted_values(spec, design, H, hp)
