"""Monte-Carlo benchmark of the selection criteria on synthetic regressions.

Two design generators are provided.  ``simple`` draws every predictor iid
N(0, 1).  ``correlated`` (p = 16 only) draws five bivariate normal pairs
(x1,x2)...(x9,x10) with correlations 0.9, -0.7, 0.5, -0.3, 0.1, then
x11-x13 iid N(0, 1) and x14-x16 iid U(-1, 1).  The response is
``intercept + coef * sum(true x) + sigma * N(0, 1)`` on the raw predictors.

Every replication draws a fresh design and response from its own Philox
substream keyed by ``(master seed, replication index)``, so a single
replication can be re-run in isolation and results do not depend on how
replications are spread over workers.
"""

from __future__ import annotations

import configparser
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .criteria import CRITERIA, ZELLNER, Hyperparams, higher_is_better
from .design import RawDataset, model_spectrum, standardize
from .errors import GbfError, InputError
from .lattice import lattice_spectra, score_lattice
from .selection import SelectionConfig
from .shrinkage import bayes_fit, component_fit, least_squares_fit

SCHEMA_VERSION = 1
PAIR_CORRELATIONS = (0.9, -0.7, 0.5, -0.3, 0.1)
KINDS = ("correlated", "simple")


@dataclass(frozen=True)
class Scenario:
    kind: str
    n: int
    true: tuple
    p: int = 16
    coef: float = 2.0
    intercept: float = 1.0
    sigma: float = 1.0
    replications: int = 500
    seed: int = 0
    name: str = ""
    criteria: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "correlated" and self.p != 16:
            raise InputError("the correlated design is defined for p = 16 only")
        if self.n < 3 or self.p < 1 or self.replications < 1:
            raise InputError("need n >= 3, p >= 1 and at least one replication")
        true = tuple(sorted(int(j) for j in self.true))
        if not true or true[0] < 1 or true[-1] > self.p or len(set(true)) != len(true):
            raise InputError(f"true predictors must be distinct indices in 1..{self.p}")
        object.__setattr__(self, "true", true)
        if self.criteria is not None:
            crit = tuple(self.criteria)
            for c in crit:
                if c not in CRITERIA:
                    raise InputError(f"unknown criterion {c!r}")
            object.__setattr__(self, "criteria", crit)
        if self.sigma < 0:
            raise InputError("noise sd must be nonnegative")

    @property
    def true_mask(self) -> int:
        return sum(1 << (j - 1) for j in self.true)

    @property
    def q_true(self) -> int:
        return len(self.true)

    def default_criteria(self) -> tuple:
        # with p >= n - 2 some models leave no residual df; only gBF covers them all
        return CRITERIA if self.p < self.n - 2 else ("gbf",)

    def resolved_criteria(self) -> tuple:
        crit = self.criteria or self.default_criteria()
        if self.p >= self.n - 2 and crit != ("gbf",):
            raise InputError(f"only gbf can score every model when p={self.p} >= n-2={self.n - 2}")
        return crit


def replication_rng(seed: int, rep: int, stream: int) -> np.random.Generator:
    """Philox substream ``stream`` (0 = design, 1 = noise) of replication ``rep``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep, stream))
    return np.random.Generator(np.random.Philox(ss))


def gen_design(scenario: Scenario, rep: int) -> np.ndarray:
    rng = replication_rng(scenario.seed, rep, 0)
    n = scenario.n
    if scenario.kind == "simple":
        return rng.standard_normal((n, scenario.p))
    X = np.empty((n, 16))
    z = rng.standard_normal((n, 13))
    for k, rho in enumerate(PAIR_CORRELATIONS):
        z1, z2 = z[:, 2 * k], z[:, 2 * k + 1]
        X[:, 2 * k] = z1
        X[:, 2 * k + 1] = rho * z1 + math.sqrt(1 - rho * rho) * z2
    X[:, 10:13] = z[:, 10:13]
    X[:, 13:16] = rng.uniform(-1.0, 1.0, (n, 3))
    return X


def true_mean(X: np.ndarray, scenario: Scenario) -> np.ndarray:
    cols = [j - 1 for j in scenario.true]
    return scenario.intercept + scenario.coef * X[:, cols].sum(axis=1)


def gen_response(X: np.ndarray, scenario: Scenario, rep: int) -> np.ndarray:
    rng = replication_rng(scenario.seed, rep, 1)
    return true_mean(X, scenario) + scenario.sigma * rng.standard_normal(X.shape[0])


def gen_dataset(scenario: Scenario, rep: int) -> RawDataset:
    X = gen_design(scenario, rep)
    return RawDataset(X, gen_response(X, scenario, rep))


def prediction_error(fitted, alpha: float, X_true: np.ndarray, beta, sigma2: float = 1.0) -> float:
    """``||fitted - alpha 1 - X_T beta||^2 / (n sigma^2)``."""
    fitted = np.asarray(fitted, dtype=float)
    mean = alpha + np.asarray(X_true, dtype=float).reshape(len(fitted), -1) @ np.atleast_1d(beta)
    r = fitted - mean
    return float(r @ r / (len(fitted) * sigma2))


# -- one replication -----------------------------------------------------------


@dataclass
class CriterionOutcome:
    best_mask: int
    best_size: int
    rank: Optional[int]
    rank_in_size: Optional[int]
    pred_err: float


@dataclass
class ReplicationRecord:
    rep: int
    seed: int
    outcomes: Dict[str, CriterionOutcome]
    oracle_err: float
    error: Optional[str] = None


def _best_and_rank(values, q, masks, valid, higher, target):
    """Best model and 1-based rank of ``target`` under (score, q, mask) ordering."""
    key = np.where(valid, -values if higher else values, np.inf)
    top = np.flatnonzero(key == key.min())
    best = top[np.lexsort((masks[top], q[top]))[0]]
    if not valid[target]:
        return best, None, None
    kt, qt, mt = key[target], q[target], masks[target]
    ahead = valid & ((key < kt) | ((key == kt) & ((q < qt) | ((q == qt) & (masks < mt)))))
    return best, int(ahead.sum()) + 1, int((ahead & (q == qt)).sum()) + 1


def run_replication(scenario: Scenario, rep: int, hp: Hyperparams = Hyperparams(),
                    criteria: Optional[Sequence[str]] = None) -> ReplicationRecord:
    criteria = tuple(criteria or scenario.resolved_criteria())
    X = gen_design(scenario, rep)
    y = gen_response(X, scenario, rep)
    design = standardize(RawDataset(X, y))
    spectra = lattice_spectra(design)
    masks, q = spectra.masks, spectra.q
    target = scenario.true_mask
    mean = true_mean(X, scenario)
    sigma2 = scenario.sigma**2 if scenario.sigma > 0 else 1.0

    def err(fitted):
        r = fitted - mean
        return float(r @ r / (scenario.n * sigma2))

    oracle = err(least_squares_fit(model_spectrum(design, target), design))
    zellner = replace(ZELLNER, a=hp.a)
    outcomes = {}
    for crit in criteria:
        sc = score_lattice(spectra, crit, hp)
        best, rank, rank_in = _best_and_rank(sc.values, q, masks, sc.valid, higher_is_better(crit), target)
        bmask = int(masks[best])
        if bmask == 0:
            fitted = np.full(scenario.n, design.ybar)
        else:
            spec = model_spectrum(design, bmask)
            if crit == "gbf":
                fitted = bayes_fit(spec, design, hp).fitted
            elif crit == "ze":
                fitted = bayes_fit(spec, design, zellner).fitted
            elif crit == "eb":
                g = float(sc.eb_g[best])
                fitted = component_fit(spec, design, g / (1.0 + g))
            else:
                fitted = least_squares_fit(spec, design)
        outcomes[crit] = CriterionOutcome(bmask, int(q[best]), rank, rank_in, err(fitted))
    return ReplicationRecord(rep=rep, seed=scenario.seed, outcomes=outcomes, oracle_err=oracle)


def _safe_replication(scenario, hp, criteria, rep):
    try:
        return run_replication(scenario, rep, hp, criteria)
    except GbfError as exc:
        return ReplicationRecord(rep=rep, seed=scenario.seed, outcomes={}, oracle_err=float("nan"),
                                 error=f"{type(exc).__name__}: {exc}")


# -- aggregation ---------------------------------------------------------------


def _quartiles(x: np.ndarray) -> dict:
    if x.size == 0:
        return {"mean": None, "lq": None, "uq": None}
    return {"mean": float(x.mean()), "lq": float(np.quantile(x, 0.25)), "uq": float(np.quantile(x, 0.75))}


def _summary(x: np.ndarray) -> dict:
    if x.size == 0:
        return {k: None for k in ("min", "lq", "median", "mean", "uq", "max")}
    return {
        "min": float(x.min()), "lq": float(np.quantile(x, 0.25)), "median": float(np.median(x)),
        "mean": float(x.mean()), "uq": float(np.quantile(x, 0.75)), "max": float(x.max()),
    }


@dataclass
class BenchReport:
    scenario: Scenario
    hp: Hyperparams
    criteria: tuple
    records: List[ReplicationRecord] = field(repr=False)

    @property
    def ok_records(self) -> list:
        return [r for r in self.records if r.error is None]

    @property
    def failures(self) -> int:
        return len(self.records) - len(self.ok_records)

    def criterion_summary(self, crit: str) -> dict:
        recs = self.ok_records
        p = self.scenario.p
        outs = [r.outcomes[crit] for r in recs]
        N = len(outs)
        rank = np.array([o.rank if o.rank is not None else 0 for o in outs])
        rank_in = np.array([o.rank_in_size if o.rank_in_size is not None else 0 for o in outs])
        defined = rank > 0
        sizes = np.bincount([o.best_size for o in outs], minlength=p + 1) / max(N, 1)
        bits = np.array([[(o.best_mask >> j) & 1 for j in range(p)] for o in outs]).reshape(N, p)
        rel = rank[defined] / float(1 << p)

        def freq(mask):
            return float(np.mean(mask)) if N else 0.0

        return {
            "replications": N,
            "true_rank_first": freq(defined & (rank == 1)),
            "true_rank_top3": freq(defined & (rank <= 3)),
            "prediction_error": _quartiles(np.array([o.pred_err for o in outs])),
            "model_size_freq": sizes.tolist(),
            "predictor_freq": bits.mean(axis=0).tolist() if N else [0.0] * p,
            "true_relative_rank": _summary(rel),
            "true_rank_within_size": {
                "first": freq(defined & (rank_in == 1)),
                "top2": freq(defined & (rank_in >= 1) & (rank_in <= 2)),
                "top3": freq(defined & (rank_in >= 1) & (rank_in <= 3)),
            },
        }

    def to_dict(self) -> dict:
        sc = asdict(self.scenario)
        sc["true"] = list(self.scenario.true)
        sc["criteria"] = list(self.criteria)
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": "gbfselect",
            "version": __version__,
            "scenario": sc,
            "seed": self.scenario.seed,
            "hyperparams": self.hp.describe(),
            "failures": self.failures,
            "oracle_prediction_error": _quartiles(np.array([r.oracle_err for r in self.ok_records])),
            "criteria": {c: self.criterion_summary(c) for c in self.criteria},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        return format_tables(self.to_dict())


def run_replications(scenario: Scenario, criteria: Optional[Sequence[str]] = None,
                     cfg: Optional[SelectionConfig] = None, workers: int = 1) -> BenchReport:
    """Run every replication and aggregate in replication order.

    Only ``cfg.hp`` is used: the benchmark always scores the full lattice
    under a uniform model prior.
    """
    hp = cfg.hp if cfg is not None else Hyperparams()
    criteria = tuple(criteria) if criteria else scenario.resolved_criteria()
    if scenario.p >= scenario.n - 2 and criteria != ("gbf",):
        raise InputError("only gbf is available when p >= n - 2")
    job = partial(_safe_replication, scenario, hp, criteria)
    reps = range(scenario.replications)
    if workers <= 1:
        records = [job(r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(job, reps, chunksize=max(1, scenario.replications // (4 * workers))))
    return BenchReport(scenario=scenario, hp=hp, criteria=criteria, records=records)


def consistency_sweep(base: Scenario, n_grid: Sequence[int], cfg: Optional[SelectionConfig] = None,
                      workers: int = 1) -> list:
    """True-model-first frequency for each sample size in ``n_grid``."""
    criterion = cfg.criterion if cfg is not None else "gbf"
    rows = []
    for n in n_grid:
        rep = run_replications(replace(base, n=int(n), criteria=(criterion,)), (criterion,), cfg, workers)
        s = rep.criterion_summary(criterion)
        f, N = s["true_rank_first"], s["replications"]
        rows.append({"n": int(n), "replications": N, "freq_first": f,
                     "se": math.sqrt(max(f * (1 - f), 0.0) / max(N, 1))})
    return rows


# -- scenario files ------------------------------------------------------------


def bundled_scenarios() -> list:
    return sorted(p.name[:-4] for p in resources.files("gbfselect.scenarios").iterdir() if p.name.endswith(".ini"))


def load_scenario(source) -> Scenario:
    """Read an INI scenario file, or a bundled scenario by name.

    The ``[scenario]`` section takes ``kind``, ``n``, ``true`` (comma list of
    1-based predictor indices) and optionally ``p``, ``coef``,
    ``intercept``, ``sigma``, ``replications``, ``seed``, ``criteria``.
    """
    path = Path(source)
    if not path.exists():
        bundled = resources.files("gbfselect.scenarios") / f"{source}.ini"
        if not bundled.is_file():
            raise InputError(f"no scenario file or bundled scenario named {source!r}")
        text, name = bundled.read_text(), str(source)
    else:
        text, name = path.read_text(), path.stem
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
        sec = cp["scenario"]
        kw = dict(
            kind=sec.get("kind"), n=sec.getint("n"),
            true=tuple(int(t) for t in sec.get("true").split(",") if t.strip()),
            p=sec.getint("p", 16), coef=sec.getfloat("coef", 2.0),
            intercept=sec.getfloat("intercept", 1.0), sigma=sec.getfloat("sigma", 1.0),
            replications=sec.getint("replications", 500), seed=sec.getint("seed", 0),
            name=sec.get("name", name),
        )
        crit = sec.get("criteria")
    except (configparser.Error, KeyError, ValueError, AttributeError, TypeError) as exc:
        raise InputError(f"bad scenario file {source}: {exc}") from None
    if crit:
        kw["criteria"] = tuple(c.strip() for c in crit.split(",") if c.strip())
    return Scenario(**kw)


# -- text tables ---------------------------------------------------------------


_LABELS = {"gbf": "gBF", "ze": "ZE", "eb": "EB", "aic": "AIC", "aicc": "AICc", "bic": "BIC"}


def _f(x, nd=2):
    return "  -  " if x is None else f"{x:.{nd}f}"


def format_tables(report: dict) -> str:
    """Aligned text tables in the layout of the published simulation tables."""
    sc = report["scenario"]
    # sorted JSON keys lose the run order; the scenario keeps it
    crits = {c: report["criteria"][c] for c in sc.get("criteria") or report["criteria"] if c in report["criteria"]}
    p, qt = sc["p"], len(sc["true"])
    lines = [
        f"scenario {sc['name'] or '-'}: {sc['kind']} design, n={sc['n']}, p={p}, "
        f"true={{{','.join(f'x{j}' for j in sc['true'])}}}, N={sc['replications']}, seed={sc['seed']}",
        "",
        "Rank of the true model",
        f"{'':8s}{'1st':>8s}{'1st-3rd':>9s}",
    ]
    for c, s in crits.items():
        lines.append(f"{_LABELS.get(c, c):8s}{_f(s['true_rank_first']):>8s}{_f(s['true_rank_top3']):>9s}")
    lines += ["", "Prediction error", f"{'':8s}{'mean':>7s}  (LQ, UQ)"]
    o = report["oracle_prediction_error"]
    lines.append(f"{'oracle':8s}{_f(o['mean']):>7s}  ({_f(o['lq'])}, {_f(o['uq'])})")
    for c, s in crits.items():
        e = s["prediction_error"]
        lines.append(f"{_LABELS.get(c, c):8s}{_f(e['mean']):>7s}  ({_f(e['lq'])}, {_f(e['uq'])})")
    lines += ["", "Model size frequencies", f"{'':8s}" + "".join(f"{k:>6d}" for k in range(p + 1))]
    for c, s in crits.items():
        lines.append(f"{_LABELS.get(c, c):8s}" + "".join(f"{v:6.2f}" for v in s["model_size_freq"]))
    true = set(sc["true"])
    lines += ["", "Predictor frequencies",
              f"{'':8s}" + "".join(f"{f'x{j}' + ('T' if j in true else 'F'):>6s}" for j in range(1, p + 1))]
    for c, s in crits.items():
        lines.append(f"{_LABELS.get(c, c):8s}" + "".join(f"{v:6.2f}" for v in s["predictor_freq"]))
    lines += ["", "Relative rank of the true model (rank / 2^p)",
              f"{'':8s}" + "".join(f"{k:>8s}" for k in ("Min", "LQ", "Median", "Mean", "UQ", "Max"))]
    for c, s in crits.items():
        r = s["true_relative_rank"]
        lines.append(f"{_LABELS.get(c, c):8s}" + "".join(
            f"{_f(r[k], 3):>8s}" for k in ("min", "lq", "median", "mean", "uq", "max")))
    lines += ["", f"True model rank among models with {qt} predictors",
              f"{'':8s}{'1st':>8s}{'1st-2nd':>9s}{'1st-3rd':>9s}"]
    for c, s in crits.items():
        w = s["true_rank_within_size"]
        lines.append(f"{_LABELS.get(c, c):8s}{_f(w['first']):>8s}{_f(w['top2']):>9s}{_f(w['top3']):>9s}")
    if report.get("failures"):
        lines += ["", f"failed replications: {report['failures']}"]
    return "\n".join(lines) + "\n"
