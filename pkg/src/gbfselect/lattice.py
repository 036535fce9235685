"""Vectorized spectra and scores for every model of the subset lattice.

Models of equal size share a shape, so their Gram blocks are stacked and
handed to one batched ``eigh`` call.  Results are arrays aligned with an
ascending array of bitmasks; nothing here depends on evaluation order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .criteria import (
    SATURATION_TOL,
    Hyperparams,
    bf_general_kernel,
    eb_kernel,
    gbf_kernel,
    ic_kernel,
)
from .design import EPS, StandardizedDesign
from .errors import BadHyper, TooManyPredictors

MAX_P = 24
_BATCH_ELEMENTS = 1 << 22

OK, RANK_DEFICIENT, SATURATED, UNAVAILABLE = 0, 1, 2, 3
REASONS = {OK: "", RANK_DEFICIENT: "rank_deficient", SATURATED: "saturated", UNAVAILABLE: "unavailable"}


@lru_cache(maxsize=64)
def size_class(p: int, q: int):
    """Bitmasks (ascending) and column indices of all size-``q`` models."""
    combos = list(itertools.combinations(range(p), q))
    idx = np.array(combos, dtype=np.intp).reshape(len(combos), q)
    masks = (np.left_shift(1, idx, dtype=np.int64)).sum(axis=1) if q else np.zeros(1, np.int64)
    order = np.argsort(masks, kind="stable")
    idx, masks = idx[order], masks[order]
    idx.setflags(write=False)
    masks.setflags(write=False)
    return masks, idx


def lattice_masks(p: int, max_q: Optional[int] = None) -> np.ndarray:
    if p > MAX_P:
        raise TooManyPredictors(f"exhaustive enumeration is limited to p <= {MAX_P}, got {p}")
    top = p if max_q is None else min(max_q, p)
    if top == p:
        return np.arange(1 << p, dtype=np.int64)
    return np.sort(np.concatenate([size_class(p, q)[0] for q in range(top + 1)]))


@dataclass
class LatticeSpectra:
    """Per-model spectral summaries; ``status`` uses the module codes."""

    n: int
    p: int
    masks: np.ndarray
    q: np.ndarray
    status: np.ndarray
    r2: np.ndarray
    lsnorm2: np.ndarray
    log_dbar: np.ndarray
    log_dmin: np.ndarray
    vnorm2: float

    def position(self, mask: int) -> int:
        i = int(np.searchsorted(self.masks, mask))
        if i >= len(self.masks) or self.masks[i] != mask:
            raise KeyError(mask)
        return i

    @property
    def rss(self) -> np.ndarray:
        return self.vnorm2 * np.clip(1.0 - self.r2, 0.0, None)


def _inner_batch(design: StandardizedDesign, idx: np.ndarray):
    # eigenvalues alone give d; R^2 and ||beta_LS||^2 are sign-free sums
    # that the normal equations deliver without eigenvectors
    G = design.gram[idx[:, :, None], idx[:, None, :]]
    lam = np.linalg.eigvalsh(G)
    q = idx.shape[1]
    bad = lam[:, 0] <= q * EPS * lam[:, -1]
    if bad.any():
        G[bad] = np.eye(q)
    c = design.crossmom[idx]
    beta = np.linalg.solve(G, c[:, :, None])[:, :, 0]
    v2 = design.vnorm**2
    r2 = np.einsum("ki,ki->k", c, beta) / v2
    lsnorm2 = np.einsum("ki,ki->k", beta, beta) / v2
    return lam, r2, lsnorm2, bad


def _outer_batch(design: StandardizedDesign, idx: np.ndarray):
    Xs = np.transpose(design.X[:, idx], (1, 0, 2))
    M = Xs @ np.transpose(Xs, (0, 2, 1))
    lam, U = np.linalg.eigh(M)
    # centered columns leave one null direction (the constant vector)
    lam, U = lam[:, 1:], U[:, :, 1:]
    q = idx.shape[1]
    bad = lam[:, 0] <= q * EPS * lam[:, -1]
    lam_safe = np.where(lam > 0, lam, 1.0)
    uv = np.einsum("kni,n->ki", U, design.v)
    pc2 = uv**2 / design.vnorm**2
    return lam, pc2.sum(axis=1), (pc2 / lam_safe).sum(axis=1), bad


def lattice_spectra(design: StandardizedDesign, max_q: Optional[int] = None) -> LatticeSpectra:
    n, p = design.n, design.p
    masks = lattice_masks(p, max_q)
    m = len(masks)
    out = {k: np.zeros(m) for k in ("r2", "lsnorm2", "log_dbar", "log_dmin")}
    qarr = np.zeros(m, dtype=np.int64)
    status = np.zeros(m, dtype=np.int8)
    full = len(masks) == 1 << p
    top = p if max_q is None else min(max_q, p)
    for q in range(1, top + 1):
        qmasks, idx = size_class(p, q)
        pos = qmasks if full else np.searchsorted(masks, qmasks)
        qarr[pos] = q
        width = max(q, n) ** 2 if q >= n - 1 else q * q
        step = max(1, _BATCH_ELEMENTS // width)
        for s in range(0, len(qmasks), step):
            sl = slice(s, s + step)
            batch = _inner_batch if q < n - 1 else _outer_batch
            lam, r2, lsnorm2, bad = batch(design, idx[sl])
            ps = pos[sl]
            out["r2"][ps] = r2
            out["lsnorm2"][ps] = lsnorm2
            with np.errstate(divide="ignore"):
                logd = 0.5 * np.log(np.where(lam > 0, lam, np.nan))
            out["log_dbar"][ps] = logd.mean(axis=1)
            out["log_dmin"][ps] = logd[:, 0]
            status[ps] = np.where(bad, RANK_DEFICIENT, OK)
    return LatticeSpectra(
        n=n, p=p, masks=masks, q=qarr, status=status, vnorm2=design.vnorm**2, **out
    )


@dataclass
class LatticeScores:
    criterion: str
    values: np.ndarray
    reason: np.ndarray
    eb_g: Optional[np.ndarray] = None

    @property
    def valid(self) -> np.ndarray:
        return self.reason == OK


def score_lattice(spec: LatticeSpectra, criterion: str, hp: Hyperparams = Hyperparams()) -> LatticeScores:
    """Score every model; excluded models get ``nan`` and a reason code."""
    n = spec.n
    q = spec.q
    reason = spec.status.astype(np.int8).copy()
    small = q < n - 1
    saturated = small & (1.0 - spec.r2 < SATURATION_TOL) & (q > 0)
    reason[(reason == OK) & saturated] = SATURATED
    eb_g = None
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "gbf":
            vals = gbf_kernel(n, q, spec.r2, spec.lsnorm2, spec.log_dbar, spec.log_dmin)
        elif criterion in ("bf", "ze"):
            if criterion == "ze" or hp.nu_scheme == "unit":
                q2 = np.zeros_like(spec.r2)
                lognu = np.zeros_like(spec.r2)
            elif hp.nu_scheme == "paper":
                r = np.minimum(q, n - 1)
                q2 = spec.r2 - np.exp(2 * spec.log_dmin) * spec.lsnorm2
                lognu = 2 * r * (spec.log_dbar - spec.log_dmin)
            else:
                raise BadHyper("an explicit nu vector cannot be applied across the lattice")
            a = hp.a
            vals = bf_general_kernel(n, q, spec.r2, q2, lognu, a)
            if criterion == "ze":
                reason[(reason == OK) & ~small] = UNAVAILABLE
        elif criterion == "eb":
            vals, eb_g, _ = eb_kernel(n, q, spec.r2)
            reason[(reason == OK) & (q >= n - 2)] = UNAVAILABLE
        elif criterion in ("aic", "aicc", "bic"):
            rss = spec.rss
            aic, aicc, bic = ic_kernel(n, q, np.where(rss > 0, rss, np.nan))
            vals = {"aic": aic, "aicc": aicc, "bic": bic}[criterion]
            unavailable = ~small | ~np.isfinite(vals)
            reason[(reason == OK) & unavailable] = UNAVAILABLE
        else:
            raise ValueError(f"unknown criterion {criterion!r}")
    vals = np.asarray(vals, dtype=float).copy()
    if criterion != "aic" and criterion != "aicc" and criterion != "bic":
        vals[q == 0] = 0.0
    if eb_g is not None:
        eb_g = np.where(q == 0, 0.0, eb_g)
    # null model: always valid (score 0 for Bayes factors)
    null = q == 0
    reason[null] = OK
    vals[reason != OK] = np.nan
    return LatticeScores(criterion=criterion, values=vals, reason=reason, eb_g=eb_g)
