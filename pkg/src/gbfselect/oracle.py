"""Self-check: closed-form Bayes factors against quadrature of the g integral."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .criteria import A_DEFAULT, Hyperparams, fit_statistics, log_bf_general, log_gbf, log_marginal_oracle, log_ze
from .design import RawDataset, model_spectrum, standardize

ORACLE_RTOL = 1e-6
A_GRID = (-0.9, -0.75, -0.6)
NU_SCHEMES = ("paper", "unit", "explicit")


@dataclass
class OracleInstance:
    n: int
    q: int
    a: float
    nu_scheme: str
    closed_form: float
    quadrature: float

    @property
    def rel_err(self) -> float:
        return abs(self.closed_form - self.quadrature) / max(1.0, abs(self.quadrature))


@dataclass
class OracleReport:
    instances: List[OracleInstance] = field(default_factory=list)
    orthogonal_err: float = 0.0
    rtol: float = ORACLE_RTOL

    @property
    def max_rel_err(self) -> float:
        return max((i.rel_err for i in self.instances), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.rtol and self.orthogonal_err < self.rtol

    def summary(self) -> str:
        worst = max(self.instances, key=lambda i: i.rel_err, default=None)
        lines = [f"instances: {len(self.instances)}", f"max relative error: {self.max_rel_err:.3e}"]
        if worst is not None:
            lines.append(f"worst: n={worst.n} q={worst.q} a={worst.a} nu={worst.nu_scheme}")
        lines.append(f"orthogonal gBF vs ZE abs error: {self.orthogonal_err:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def random_instance(rng: np.random.Generator, n: int, q: int) -> RawDataset:
    """Correlated Gaussian design with a moderate signal."""
    mix = np.eye(q) + 0.5 * rng.standard_normal((q, q)) / math.sqrt(q)
    X = rng.standard_normal((n, q)) @ mix
    beta = rng.normal(0.0, 0.5, q)
    y = 1.0 + X @ beta + rng.standard_normal(n)
    return RawDataset(X, y)


def random_nu(rng: np.random.Generator, q: int) -> tuple:
    return tuple(np.sort(1.0 + rng.exponential(2.0, q))[::-1])


def orthogonal_design(rng: np.random.Generator, n: int, q: int) -> RawDataset:
    """Centered columns with ``X'X = n I`` so every singular value is equal."""
    Z = rng.standard_normal((n, q))
    Z -= Z.mean(axis=0)
    Q, _ = np.linalg.qr(Z)
    X = Q * math.sqrt(n)
    y = 1.0 + X @ rng.normal(0.0, 0.5, q) + rng.standard_normal(n)
    return RawDataset(X, y)


def run_oracle_check(instances: int = 100, seed: int = 0, perturb: float = 0.0) -> OracleReport:
    """Compare closed form and quadrature on random instances.

    ``perturb`` is added to every closed-form value and exists so the
    failure path can be exercised.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    report = OracleReport()
    for k in range(instances):
        n = int(rng.integers(10, 41))
        q = int(rng.integers(1, n - 2))
        a = A_GRID[k % len(A_GRID)]
        scheme = NU_SCHEMES[(k // len(A_GRID)) % len(NU_SCHEMES)]
        design = standardize(random_instance(rng, n, q))
        spec = model_spectrum(design, (1 << q) - 1, strict=True)
        hp = Hyperparams(a=a, nu_scheme=scheme, nu=random_nu(rng, q) if scheme == "explicit" else None)
        stats = fit_statistics(spec, hp)
        closed = log_bf_general(stats, hp).value + perturb
        report.instances.append(OracleInstance(n, q, a, scheme, closed, log_marginal_oracle(stats, hp)))
    err = 0.0
    for n, q in ((12, 3), (25, 6), (40, 10)):
        design = standardize(orthogonal_design(rng, n, q))
        spec = model_spectrum(design, (1 << q) - 1, strict=True)
        ze = log_ze(fit_statistics(spec, Hyperparams(nu_scheme="unit")), A_DEFAULT).value
        err = max(err, abs(log_gbf(spec).value + perturb - ze))
    report.orthogonal_err = err
    return report
