"""Data ingestion, standardization and per-model spectral summaries.

Predictors are centered and scaled so that ``x_j' 1 = 0`` and
``x_j' x_j / n = 1``; the response is only centered.  Everything a
criterion needs from a submodel is reduced to its singular values and the
correlations between the response and the principal components, which we
obtain from eigendecompositions of cached Gram blocks instead of fresh SVDs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConstantColumn, DegenerateResponse, InputError, NonFinite, RankDeficient

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RawDataset:
    X: np.ndarray
    y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InputError(f"shape mismatch: X {X.shape}, y {y.shape}")
        n, p = X.shape
        if n < 3:
            raise InputError(f"need at least 3 rows, got {n}")
        if p < 1:
            raise InputError("need at least one predictor")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFinite("data contain NaN or Inf")
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise InputError(f"{len(names)} names for {p} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizedDesign:
    """Centered response and standardized predictors with cached moments.

    Attributes
    ----------
    v : ndarray (n,)
        ``y - ybar``.
    vnorm : float
        ``||v||``.
    X : ndarray (n, p)
        Centered columns with ``x'x / n = 1``.
    gram : ndarray (p, p)
        ``X'X``; ``gram / n`` has unit diagonal.
    crossmom : ndarray (p,)
        ``X'v``.
    ybar : float
    center, scale : ndarray (p,)
        Raw column ``j`` equals ``X[:, j] * scale[j] + center[j]``.
    names : tuple of str
    """

    v: np.ndarray
    vnorm: float
    X: np.ndarray
    gram: np.ndarray
    crossmom: np.ndarray
    ybar: float
    center: np.ndarray
    scale: np.ndarray
    names: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def mask_of(self, columns: Sequence[Union[str, int]]) -> int:
        """Bitmask for a list of column names or 0-based indices."""
        mask = 0
        for c in columns:
            if isinstance(c, str):
                if c not in self.names:
                    raise InputError(f"unknown column {c!r}")
                j = self.names.index(c)
            else:
                j = int(c)
                if not 0 <= j < self.p:
                    raise InputError(f"column index {j} out of range")
            mask |= 1 << j
        return mask

    def columns_of(self, mask: int) -> list:
        return [self.names[j] for j in mask_indices(mask)]


def standardize(raw: RawDataset) -> StandardizedDesign:
    X = raw.X
    n = raw.n
    center = X.mean(axis=0)
    Xc = X - center
    ss = np.einsum("ij,ij->j", Xc, Xc)
    for j in range(raw.p):
        # relative test so tiny-but-genuine columns survive
        if ss[j] <= (EPS * n * max(1.0, np.abs(X[:, j]).max())) ** 2:
            raise ConstantColumn(raw.names[j])
    scale = np.sqrt(ss / n)
    Xs = Xc / scale
    # a second centering pass removes the O(eps) residue of the first
    Xs -= Xs.mean(axis=0)
    Xs /= np.sqrt(np.einsum("ij,ij->j", Xs, Xs) / n)

    ybar = float(raw.y.mean())
    v = raw.y - ybar
    v -= v.mean()
    vnorm = float(np.linalg.norm(v))
    if vnorm <= EPS * n * max(1.0, float(np.abs(raw.y).max())):
        raise DegenerateResponse("response is constant")

    gram = Xs.T @ Xs
    gram = 0.5 * (gram + gram.T)
    for a in (v, Xs, gram):
        a.setflags(write=False)
    crossmom = Xs.T @ v
    crossmom.setflags(write=False)
    return StandardizedDesign(
        v=v, vnorm=vnorm, X=Xs, gram=gram, crossmom=crossmom, ybar=ybar,
        center=center, scale=scale, names=raw.names,
    )


def read_csv(path: Union[str, Path], response: str, drop: Sequence[str] = ()) -> RawDataset:
    """Load a headed CSV; every non-response, non-dropped column is a predictor.

    Numbers are parsed with ``float`` (dot decimal, locale independent).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise InputError(f"response column {response!r} not found in {path}")
    for d in drop:
        if d not in header:
            raise InputError(f"--drop column {d!r} not found in {path}")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    keep = [j for j, h in enumerate(header) if h != response and h not in drop]
    return RawDataset(
        X=data[:, keep], y=data[:, header.index(response)],
        names=tuple(header[j] for j in keep),
    )


# -- model ids ---------------------------------------------------------------


@dataclass(frozen=True, order=True)
class ModelId:
    mask: int
    p: int

    def __post_init__(self):
        if not 0 <= self.mask < (1 << self.p):
            raise InputError(f"mask {self.mask} out of range for p={self.p}")

    @property
    def q(self) -> int:
        return popcount(self.mask)

    @property
    def columns(self) -> list:
        return mask_indices(self.mask)

    def bits(self) -> str:
        """Predictor flags, predictor 1 first."""
        return "".join("1" if self.mask >> j & 1 else "0" for j in range(self.p))


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_indices(mask: int) -> list:
    out, j = [], 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


# -- spectra -----------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpectrum:
    """Eigenstructure of one submodel.

    ``d`` are the ``r = min(q, n - 1)`` nonzero singular values of ``X_gamma``
    in descending order and ``pc_corr[i] = u_i'v / ||v||``.  ``w`` holds the
    Gram eigenvectors (q x r) when the q x q form was used, ``u`` the left
    singular vectors (n x r) when the n x n outer form was used.
    """

    mask: int
    q: int
    n: int
    r: int
    d: np.ndarray
    pc_corr: np.ndarray
    dbar: float
    dmin: float
    lsnorm2: float
    status: str = "ok"
    w: Optional[np.ndarray] = field(default=None, repr=False)
    u: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def r2(self) -> float:
        return float(np.sum(self.pc_corr**2))

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _ordered_eigh(M: np.ndarray):
    lam, vec = np.linalg.eigh(M)
    # fix eigenvector signs: largest |entry| positive, first such on ties
    piv = np.argmax(np.abs(vec), axis=0)
    sgn = np.sign(vec[piv, np.arange(vec.shape[1])])
    sgn[sgn == 0] = 1.0
    vec = vec * sgn
    # descending eigenvalues; exact ties fall back to lexicographic eigenvector order
    keys = [vec[i] for i in range(vec.shape[0] - 1, -1, -1)] + [-lam]
    order = np.lexsort(keys)
    return lam[order], vec[:, order]


def model_spectrum(design: StandardizedDesign, model: Union[int, ModelId], strict: bool = False) -> ModelSpectrum:
    """Spectral summary of the submodel selected by ``model``.

    Rank-deficient submodels come back with ``status='rank_deficient'``;
    pass ``strict=True`` to raise :class:`RankDeficient` instead.
    """
    mask = model.mask if isinstance(model, ModelId) else int(model)
    cols = mask_indices(mask)
    q = len(cols)
    n = design.n
    if q == 0:
        raise InputError("the null model has no spectrum")
    if cols[-1] >= design.p:
        raise InputError(f"mask {mask} refers to columns beyond p={design.p}")

    if q < n - 1:
        G = design.gram[np.ix_(cols, cols)]
        lam, W = _ordered_eigh(G)
        r = q
        proj = W.T @ design.crossmom[cols]
        U = None
    else:
        Xg = design.X[:, cols]
        lam, U = _ordered_eigh(Xg @ Xg.T)
        r = n - 1
        lam, U = lam[:r], U[:, :r]
        W = None
    tol = q * EPS * max(lam[0], 0.0)
    status = "ok" if lam[-1] > tol else "rank_deficient"
    d = np.sqrt(np.clip(lam, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        if U is None:
            pc = proj / (d * design.vnorm)
        else:
            pc = U.T @ design.v / design.vnorm
        lsnorm2 = float(np.sum(pc**2 / lam))
        dbar = float(np.exp(np.mean(np.log(d))))
    if status != "ok" and strict:
        raise RankDeficient(f"model {mask:#x} is rank deficient")
    return ModelSpectrum(
        mask=mask, q=q, n=n, r=r, d=d, pc_corr=pc, dbar=dbar, dmin=float(d[-1]),
        lsnorm2=lsnorm2, status=status, w=W, u=U,
    )
