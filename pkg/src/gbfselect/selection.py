"""Exhaustive model search: score the lattice, rank, normalize posteriors."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .criteria import CRITERIA, CriterionScore, Hyperparams, higher_is_better
from .design import ModelId, StandardizedDesign, mask_indices
from .errors import AbortEmpty, BadHyper, InputError, MixedCriteria
from .lattice import OK, REASONS, LatticeScores, LatticeSpectra, lattice_masks, lattice_spectra, score_lattice

SCHEMA_VERSION = 1


def enumerate_models(p: int, max_q: Optional[int] = None) -> Iterator[ModelId]:
    """All models with at most ``max_q`` predictors, ascending bitmask."""
    for m in lattice_masks(p, max_q):
        yield ModelId(int(m), p)


@dataclass(frozen=True)
class SelectionConfig:
    criterion: str = "gbf"
    hp: Hyperparams = field(default_factory=Hyperparams)
    prior: Optional[Union[Mapping[int, float], Sequence[float]]] = None
    max_q: Optional[int] = None
    top_k: int = 10

    def __post_init__(self):
        if self.criterion not in CRITERIA + ("bf",):
            raise InputError(f"unknown criterion {self.criterion!r}")
        if self.top_k < 1:
            raise InputError("top_k must be at least 1")
        if self.max_q is not None and self.max_q < 0:
            raise InputError("max_q must be non-negative")
        if self.prior is not None:
            w = np.asarray(list(self.prior.values()) if isinstance(self.prior, Mapping) else self.prior, float)
            if np.any(w < 0) or not np.any(w > 0):
                raise InputError("model prior weights must be nonnegative and not all zero")


def log_prior_weights(prior, masks: np.ndarray) -> np.ndarray:
    """Log prior mass for each mask; missing masks in a mapping get zero mass."""
    if prior is None:
        return np.zeros(len(masks))
    if isinstance(prior, Mapping):
        w = np.array([float(prior.get(int(m), 0.0)) for m in masks])
    else:
        full = np.asarray(prior, dtype=float)
        if full.shape[0] <= int(masks.max()):
            raise InputError("prior weight vector shorter than the model lattice")
        w = full[masks]
    with np.errstate(divide="ignore"):
        return np.log(w)


def _normalize(log_w: np.ndarray) -> np.ndarray:
    m = np.max(log_w)
    e = np.exp(log_w - m)
    return e / e.sum()


def posterior_probs(scores: Sequence[CriterionScore], prior=None) -> np.ndarray:
    """Posterior model probabilities from null-based log Bayes factors."""
    tags = {s.criterion for s in scores}
    if len(tags) != 1:
        raise MixedCriteria(f"scores carry criteria {sorted(tags)}")
    if not higher_is_better(tags.pop()):
        raise MixedCriteria("posterior probabilities need Bayes-factor scores")
    logbf = np.array([s.value for s in scores], dtype=float)
    if prior is None:
        log_pi = np.zeros_like(logbf)
    else:
        with np.errstate(divide="ignore"):
            log_pi = np.log(np.asarray(prior, dtype=float))
    return _normalize(logbf + log_pi)


@dataclass(frozen=True)
class ModelEntry:
    rank: int
    mask: int
    columns: tuple
    q: int
    score: float
    posterior: Optional[float]
    r2: float
    dbar_over_dmin: float
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "rank": self.rank, "mask": self.mask, "columns": list(self.columns), "q": self.q,
            "score": self.score, "posterior": self.posterior, "r2": self.r2,
            "dbar_over_dmin": self.dbar_over_dmin, "status": self.status,
        }


@dataclass
class SelectionResult:
    """Full ranking over the enumerated lattice.

    ``order`` indexes ``spectra.masks`` from best to worst over valid models
    only; excluded models keep ``nan`` scores and a reason code.
    """

    criterion: str
    hp: Hyperparams
    names: tuple
    spectra: LatticeSpectra
    scores: LatticeScores
    order: np.ndarray
    posterior: Optional[np.ndarray]
    wall_time: float = 0.0

    @property
    def masks(self) -> np.ndarray:
        return self.spectra.masks

    @property
    def counts(self) -> dict:
        reason = self.scores.reason
        return {
            "enumerated": int(len(reason)),
            "scored": int(np.sum(reason == OK)),
            "excluded_rank_deficient": int(np.sum(reason == 1)),
            "excluded_saturated": int(np.sum(reason == 2)),
            "excluded_unavailable": int(np.sum(reason == 3)),
        }

    @property
    def excluded(self) -> list:
        bad = np.flatnonzero(self.scores.reason != OK)
        return [(int(self.masks[i]), REASONS[int(self.scores.reason[i])]) for i in bad]

    @property
    def best(self) -> int:
        return int(self.masks[self.order[0]])

    def rank_of(self, mask: int) -> Optional[int]:
        """1-based rank among valid models, None if the model was excluded."""
        pos = self.spectra.position(mask)
        hits = np.flatnonzero(self.order == pos)
        return int(hits[0]) + 1 if hits.size else None

    def entry(self, rank: int) -> ModelEntry:
        i = int(self.order[rank - 1])
        mask = int(self.masks[i])
        q = int(self.spectra.q[i])
        cond = float(np.exp(self.spectra.log_dbar[i] - self.spectra.log_dmin[i])) if q else 1.0
        return ModelEntry(
            rank=rank, mask=mask, columns=tuple(self.names[j] for j in mask_indices(mask)), q=q,
            score=float(self.scores.values[i]),
            posterior=None if self.posterior is None else float(self.posterior[i]),
            r2=float(self.spectra.r2[i]) if q else 0.0, dbar_over_dmin=cond,
        )

    def top(self, k: int) -> list:
        return [self.entry(r) for r in range(1, min(k, len(self.order)) + 1)]

    def inclusion_probs(self) -> Optional[np.ndarray]:
        """Exact marginal inclusion probability of each predictor."""
        if self.posterior is None:
            return None
        p = self.spectra.p
        post = np.nan_to_num(self.posterior)
        bits = (self.masks[:, None] >> np.arange(p)) & 1
        return post @ bits

    def to_dict(self, top_k: int = 10) -> dict:
        incl = self.inclusion_probs()
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": "gbfselect",
            "version": __version__,
            "criterion": self.criterion,
            "ordering": "higher_is_better" if higher_is_better(self.criterion) else "lower_is_better",
            "hyperparams": self.hp.describe(),
            "n": self.spectra.n,
            "p": self.spectra.p,
            "columns": list(self.names),
            "counts": self.counts,
            "models": [e.to_dict() for e in self.top(top_k)],
            "inclusion_probabilities": None if incl is None else dict(zip(self.names, incl.tolist())),
        }


def rank_order(values: np.ndarray, q: np.ndarray, masks: np.ndarray, valid: np.ndarray, higher: bool) -> np.ndarray:
    """Indices of valid entries sorted by score, then smaller q, then smaller mask."""
    idx = np.flatnonzero(valid)
    key = -values[idx] if higher else values[idx]
    return idx[np.lexsort((masks[idx], q[idx], key))]


def rank_models(design: StandardizedDesign, cfg: SelectionConfig = SelectionConfig(),
                spectra: Optional[LatticeSpectra] = None) -> SelectionResult:
    t0 = time.perf_counter()
    if cfg.criterion == "bf" and cfg.hp.nu_scheme == "explicit":
        raise BadHyper("explicit nu vectors are per-model; use the single-model API")
    if spectra is None:
        spectra = lattice_spectra(design, cfg.max_q)
    scores = score_lattice(spectra, cfg.criterion, cfg.hp)
    valid = scores.valid
    if not np.any(valid & (spectra.q > 0)):
        raise AbortEmpty(f"no model besides the null can be scored under {cfg.criterion}")
    higher = higher_is_better(cfg.criterion)
    posterior = None
    if higher:
        log_w = scores.values + log_prior_weights(cfg.prior, spectra.masks)
        valid = valid & np.isfinite(log_w)
        posterior = np.full(len(valid), np.nan)
        posterior[valid] = _normalize(log_w[valid])
        values = log_w
    else:
        values = scores.values
    order = rank_order(values, spectra.q, spectra.masks, valid, higher)
    return SelectionResult(
        criterion=cfg.criterion, hp=cfg.hp, names=design.names, spectra=spectra, scores=scores,
        order=order, posterior=posterior, wall_time=time.perf_counter() - t0,
    )
