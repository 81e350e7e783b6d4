"""Penalized regression splines for additive hour/day models.

Three smoother kinds are supported:

* ``CUBIC_REGRESSION`` -- natural cubic spline parametrized by its values at
  ``k`` evenly spaced knots, penalized by the integrated squared second
  derivative (optionally cyclic).
* ``P_SPLINE`` -- cubic B-splines with a second-order difference penalty.
* ``TENSOR_INTERACTION`` -- row-wise Kronecker product of two centered
  marginal bases, penalized by ``S1 (x) I + I (x) S2`` under a single
  smoothing parameter. Main effects are excluded by construction.

Every smoother is centered over the training data by absorbing a sum-to-zero
constraint, so the intercept carries the mean level. Fitting is Gaussian
penalized least squares; smoothing parameters are chosen by GCV.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

__all__ = [
    "BasisKind",
    "Covariate",
    "BasisSpec",
    "PenaltyMatrix",
    "Smoother",
    "GamFit",
    "RankDeficientError",
    "LAMBDA_GRID",
    "build_basis",
    "fit_penalized_ls",
    "select_lambda_gcv",
    "gcv_score",
    "predict",
    "adjusted_r2",
    "fit_from_dict",
]

FORMAT_VERSION = 1
LAMBDA_GRID = np.logspace(-4, 8, 25)
RIDGE = 1e-10


class BasisKind(str, Enum):
    CUBIC_REGRESSION = "cr"
    P_SPLINE = "ps"
    TENSOR_INTERACTION = "ti"


class Covariate(str, Enum):
    HOUR = "hour"
    DAY = "day"
    HOUR_DAY = "hour:day"


DOMAIN = {Covariate.HOUR: (0.0, 23.0), Covariate.DAY: (0.0, 6.0)}
PERIOD = {Covariate.HOUR: 24.0, Covariate.DAY: 7.0}


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind
    k: int | tuple[int, int]
    covariate: Covariate
    cyclic: bool = False
    margins: tuple["BasisSpec", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        object.__setattr__(self, "covariate", Covariate(self.covariate))
        if self.kind is BasisKind.TENSOR_INTERACTION:
            if len(self.margins) != 2:
                raise ValueError("tensor interaction needs exactly two marginal specs")
            ks = tuple(int(m.k) for m in self.margins)
            object.__setattr__(self, "k", ks)
        else:
            if int(self.k) < 3:
                raise ValueError(f"k must be >= 3 for univariate bases, got {self.k}")
            if self.covariate is Covariate.HOUR_DAY:
                raise ValueError("univariate basis needs a single covariate")
            if self.cyclic and self.kind is BasisKind.P_SPLINE:
                raise ValueError("cyclic P-splines are not supported; use a cyclic cubic regression spline")

    @property
    def label(self) -> str:
        if self.kind is BasisKind.TENSOR_INTERACTION:
            return f"ti({self.margins[0].covariate.value},{self.margins[1].covariate.value})"
        return f"s({self.covariate.value})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "k": self.k if isinstance(self.k, int) else list(self.k),
             "covariate": self.covariate.value, "cyclic": self.cyclic}
        if self.margins:
            d["margins"] = [m.to_dict() for m in self.margins]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        margins = tuple(cls.from_dict(m) for m in d.get("margins", ()))
        k = d["k"] if isinstance(d["k"], int) else tuple(d["k"])
        return cls(BasisKind(d["kind"]), k, Covariate(d["covariate"]), bool(d.get("cyclic", False)), margins)


@dataclass(frozen=True)
class PenaltyMatrix:
    S: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("penalty must be square")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("penalty must be symmetric")
        object.__setattr__(self, "S", 0.5 * (S + S.T))

    def quadratic(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return float(beta @ self.S @ beta)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.S).min())


# -- raw marginal bases ------------------------------------------------------

def _cr_matrices(knots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map from knot values to knot second derivatives (F) and the penalty."""
    k = len(knots)
    h = np.diff(knots)
    D = np.zeros((k - 2, k))
    B = np.zeros((k - 2, k - 2))
    for i in range(k - 2):
        D[i, i] = 1.0 / h[i]
        D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        D[i, i + 2] = 1.0 / h[i + 1]
        B[i, i] = (h[i] + h[i + 1]) / 3.0
        if i + 1 < k - 2:
            B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
    BinvD = linalg.solve(B, D, assume_a="sym")
    F = np.vstack([np.zeros(k), BinvD, np.zeros(k)])
    S = D.T @ BinvD
    return F, 0.5 * (S + S.T)


def _cc_matrices(knots: np.ndarray, period: float) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic version: knot ``k`` wraps onto knot 0 after ``period``."""
    k = len(knots)
    h = np.diff(np.append(knots, knots[0] + period))
    D = np.zeros((k, k))
    B = np.zeros((k, k))
    for i in range(k):
        im, ip = (i - 1) % k, (i + 1) % k
        B[i, i] = (h[im] + h[i]) / 3.0
        B[i, ip] += h[i] / 6.0
        B[i, im] += h[im] / 6.0
        D[i, im] += 1.0 / h[im]
        D[i, i] += -1.0 / h[im] - 1.0 / h[i]
        D[i, ip] += 1.0 / h[i]
    F = linalg.solve(B, D, assume_a="sym")
    S = D.T @ F
    return F, 0.5 * (S + S.T)


def _cr_design(x: np.ndarray, knots: np.ndarray, F: np.ndarray, period: float | None) -> np.ndarray:
    k = len(knots)
    if period is None:
        ext = knots
    else:
        ext = np.append(knots, knots[0] + period)
        x = knots[0] + np.mod(x - knots[0], period)
    j = np.clip(np.searchsorted(ext, x, side="right") - 1, 0, len(ext) - 2)
    h = ext[j + 1] - ext[j]
    am = (ext[j + 1] - x) / h
    ap = (x - ext[j]) / h
    cm = ((ext[j + 1] - x) ** 3 / h - h * (ext[j + 1] - x)) / 6.0
    cp = ((x - ext[j]) ** 3 / h - h * (x - ext[j])) / 6.0
    jn = (j + 1) % k
    n = len(x)
    X = np.zeros((n, k))
    rows = np.arange(n)
    X[rows, j] += am
    X[rows, jn] += ap
    X += cm[:, None] * F[j] + cp[:, None] * F[jn]
    return X


def _ps_knots(lo: float, hi: float, k: int, degree: int = 3) -> np.ndarray:
    n_int = k - degree
    dx = (hi - lo) / n_int
    return lo + dx * np.arange(-degree, n_int + degree + 1)


def _ps_design(x: np.ndarray, knots: np.ndarray, degree: int = 3) -> np.ndarray:
    return BSpline.design_matrix(np.asarray(x, dtype=float), knots, degree).toarray()


def _diff_penalty(k: int, order: int = 2) -> np.ndarray:
    D = np.diff(np.eye(k), n=order, axis=0)
    return D.T @ D


@dataclass
class _Marginal:
    """A raw (unconstrained) univariate basis on a fixed covariate domain."""

    spec: BasisSpec
    knots: np.ndarray
    F: np.ndarray | None
    S: np.ndarray

    @classmethod
    def create(cls, spec: BasisSpec) -> "_Marginal":
        lo, hi = DOMAIN[spec.covariate]
        k = int(spec.k)
        if spec.kind is BasisKind.CUBIC_REGRESSION:
            if spec.cyclic:
                period = PERIOD[spec.covariate]
                knots = lo + period * np.arange(k) / k
                F, S = _cc_matrices(knots, period)
            else:
                knots = np.linspace(lo, hi, k)
                F, S = _cr_matrices(knots)
            return cls(spec, knots, F, S)
        if spec.kind is BasisKind.P_SPLINE:
            return cls(spec, _ps_knots(lo, hi, k), None, _diff_penalty(k, 2))
        raise ValueError(f"not a marginal kind: {spec.kind}")

    def design(self, x: np.ndarray) -> np.ndarray:
        if self.spec.kind is BasisKind.CUBIC_REGRESSION:
            period = PERIOD[self.spec.covariate] if self.spec.cyclic else None
            return _cr_design(x, self.knots, self.F, period)
        return _ps_design(x, self.knots)


def _sum_to_zero(X: np.ndarray) -> np.ndarray:
    """Null-space basis Z of the constraint 1'X b = 0 (QR of the constraint)."""
    c = X.sum(axis=0)[:, None]
    q, _ = np.linalg.qr(c, mode="complete")
    return q[:, 1:]


def _rowwise_kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], -1)


@dataclass
class Smoother:
    """A centered smoother: raw bases plus the constraint absorption matrices.

    ``design`` and ``penalty`` hold the training design block and the
    constrained penalty, which is what the fitting code consumes.
    """

    spec: BasisSpec
    margins: list[_Marginal]
    Z: list[np.ndarray]  # one per margin
    Zt: np.ndarray | None  # extra absorption for an unbalanced tensor block
    penalty: PenaltyMatrix
    design: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.penalty.S.shape[0]

    def evaluate(self, values: dict[Covariate, np.ndarray] | np.ndarray) -> np.ndarray:
        cols = _covariate_columns(self.spec, values)
        blocks = [m.design(x) @ Z for m, x, Z in zip(self.margins, cols, self.Z)]
        X = blocks[0] if len(blocks) == 1 else _rowwise_kron(blocks[0], blocks[1])
        return X if self.Zt is None else X @ self.Zt

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "Z": [z.tolist() for z in self.Z],
            "Zt": None if self.Zt is None else self.Zt.tolist(),
            "penalty": self.penalty.S.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Smoother":
        spec = BasisSpec.from_dict(d["spec"])
        margin_specs = spec.margins or (spec,)
        margins = [_Marginal.create(m) for m in margin_specs]
        Zt = None if d["Zt"] is None else np.array(d["Zt"])
        return cls(spec, margins, [np.array(z) for z in d["Z"]], Zt, PenaltyMatrix(np.array(d["penalty"])), np.empty((0, 0)))


def _covariate_columns(spec: BasisSpec, values) -> list[np.ndarray]:
    covs = [m.covariate for m in spec.margins] if spec.margins else [spec.covariate]
    if isinstance(values, dict):
        cols = [np.asarray(values[c], dtype=float) for c in covs]
    else:
        arr = np.asarray(values, dtype=float)
        cols = [arr] if arr.ndim == 1 else [arr[:, i] for i in range(arr.shape[1])]
        if len(cols) != len(covs):
            raise ValueError(f"{spec.label} needs {len(covs)} covariate columns")
    for c, x in zip(covs, cols):
        lo, hi = DOMAIN[c]
        if not np.all(np.isfinite(x)) or x.min(initial=lo) < lo or x.max(initial=hi) > hi:
            raise ValueError(f"{c.value} values must lie within [{lo:g}, {hi:g}]")
    return cols


def build_basis(spec: BasisSpec, values, constrain: bool = True) -> Smoother:
    """Construct a smoother on training covariates.

    Parameters
    ----------
    spec : BasisSpec
    values : array or dict
        Covariate vector (univariate) or an ``(n, 2)`` array / dict keyed by
        ``Covariate`` for tensor interactions.
    constrain : bool
        Absorb the sum-to-zero identifiability constraint (default). With
        ``False`` the raw basis is returned, e.g. to inspect B-spline rows.
    """
    cols = _covariate_columns(spec, values)
    margin_specs = spec.margins or (spec,)
    margins, Zs, blocks, pens = [], [], [], []
    for ms, x in zip(margin_specs, cols):
        n_unique = len(np.unique(x))
        if int(ms.k) > n_unique:
            raise ValueError(f"k={ms.k} exceeds the {n_unique} unique {ms.covariate.value} values")
        m = _Marginal.create(ms)
        X = m.design(x)
        Z = _sum_to_zero(X) if constrain else np.eye(X.shape[1])
        margins.append(m)
        Zs.append(Z)
        blocks.append(X @ Z)
        pens.append(Z.T @ m.S @ Z)
    Zt = None
    if len(blocks) == 1:
        X, S = blocks[0], pens[0]
    else:
        X = _rowwise_kron(blocks[0], blocks[1])
        d1, d2 = pens[0].shape[0], pens[1].shape[0]
        S = np.kron(pens[0], np.eye(d2)) + np.kron(np.eye(d1), pens[1])
        colsum = X.sum(axis=0)
        if constrain and np.abs(colsum).max() > 1e-9 * max(1.0, np.abs(X).sum(axis=0).max()):
            # unbalanced hour/day coverage: the tensor block is not centered by its margins alone
            Zt = _sum_to_zero(X)
            X, S = X @ Zt, Zt.T @ S @ Zt
    return Smoother(spec, margins, Zs, Zt, PenaltyMatrix(S), X)


# -- fitting -----------------------------------------------------------------

@dataclass
class GamFit:
    specs: tuple[BasisSpec, ...]
    smoothers: list[Smoother] = field(repr=False)
    intercept: float
    coefs: list[np.ndarray] = field(repr=False)
    lam: np.ndarray
    edf: np.ndarray  # per smoother
    n: int
    rss: float
    tss: float
    gcv: float = float("nan")
    flags: tuple[str, ...] = ()

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.intercept], *self.coefs])

    @property
    def edf_total(self) -> float:
        return 1.0 + float(self.edf.sum())

    @property
    def sigma2(self) -> float:
        return self.rss / max(self.n - self.edf_total, 1e-12)

    @property
    def r2(self) -> float:
        return 1.0 - self.rss / self.tss if self.tss > 0 else 1.0

    @property
    def adj_r2(self) -> float:
        return adjusted_r2(self)

    def to_dict(self) -> dict:
        return {
            "format": "nordbess.GamFit",
            "version": FORMAT_VERSION,
            "specs": [s.to_dict() for s in self.specs],
            "smoothers": [s.to_dict() for s in self.smoothers],
            "intercept": self.intercept,
            "coefs": [c.tolist() for c in self.coefs],
            "lambda": self.lam.tolist(),
            "edf": self.edf.tolist(),
            "n": self.n,
            "rss": self.rss,
            "tss": self.tss,
            "gcv": self.gcv,
            "flags": list(self.flags),
        }


def fit_from_dict(d: dict) -> GamFit:
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported GamFit version {d.get('version')}")
    return GamFit(
        tuple(BasisSpec.from_dict(s) for s in d["specs"]),
        [Smoother.from_dict(s) for s in d["smoothers"]],
        float(d["intercept"]),
        [np.array(c, dtype=float) for c in d["coefs"]],
        np.array(d["lambda"], dtype=float),
        np.array(d["edf"], dtype=float),
        int(d["n"]),
        float(d["rss"]),
        float(d["tss"]),
        float(d["gcv"]),
        tuple(d["flags"]),
    )


def _covariates(hours, days) -> dict[Covariate, np.ndarray]:
    out = {}
    if hours is not None:
        out[Covariate.HOUR] = np.asarray(hours, dtype=float)
    if days is not None:
        out[Covariate.DAY] = np.asarray(days, dtype=float)
    return out


class _Problem:
    """Cached cross products for repeated penalized solves on one design."""

    def __init__(self, y: np.ndarray, smoothers: list[Smoother]):
        self.y = y
        self.n = len(y)
        self.smoothers = smoothers
        self.X = np.column_stack([np.ones(self.n)] + [s.design for s in smoothers])
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ y
        self.blocks = []
        start = 1
        for s in smoothers:
            self.blocks.append(slice(start, start + s.dim))
            start += s.dim
        self.p = start
        self.tss = float(((y - y.mean()) ** 2).sum())

    def penalty(self, lam: np.ndarray) -> np.ndarray:
        P = np.zeros((self.p, self.p))
        for sl, s, l in zip(self.blocks, self.smoothers, lam):
            P[sl, sl] += l * s.penalty.S
        return P

    def solve(self, lam: np.ndarray):
        G = self.XtX + self.penalty(lam)
        try:
            cf = linalg.cho_factor(G, lower=False, check_finite=False)
        except linalg.LinAlgError:
            aug = np.vstack([self.X, _sqrt_psd(self.penalty(lam))])
            if np.linalg.matrix_rank(aug) < self.p:
                raise RankDeficientError("design is rank deficient after identifiability constraints")
            G = G + RIDGE * max(1.0, np.trace(G) / self.p) * np.eye(self.p)
            cf = linalg.cho_factor(G, lower=False, check_finite=False)
        beta = linalg.cho_solve(cf, self.Xty, check_finite=False)
        F = linalg.cho_solve(cf, self.XtX, check_finite=False)  # (X'X + S)^-1 X'X
        resid = self.y - self.X @ beta
        rss = float(resid @ resid)
        edf_diag = np.diag(F)
        edf = np.array([edf_diag[sl].sum() for sl in self.blocks])
        return beta, rss, edf, float(edf_diag.sum())


def _sqrt_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0.0, None))).T


def _check_response(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) == 0:
        raise ValueError("response must be a non-empty vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    return y


def _assemble(specs, smoothers, prob: _Problem, lam, beta, rss, edf, gcv=float("nan"), flags=()) -> GamFit:
    return GamFit(
        tuple(specs),
        smoothers,
        float(beta[0]),
        [beta[sl].copy() for sl in prob.blocks],
        np.asarray(lam, dtype=float),
        edf,
        prob.n,
        rss,
        prob.tss,
        gcv,
        tuple(flags),
    )


def fit_penalized_ls(y, hours=None, days=None, specs: Sequence[BasisSpec] = (), lam=None) -> GamFit:
    """Minimize ||y - X b||^2 + sum_j lam_j b' S_j b for fixed smoothing parameters."""
    y = _check_response(y)
    covs = _covariates(hours, days)
    smoothers = [build_basis(s, covs) for s in specs]
    lam = np.ones(len(specs)) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), (len(specs),)).copy()
    if np.any(lam < 0):
        raise ValueError("smoothing parameters must be nonnegative")
    prob = _Problem(y, smoothers)
    beta, rss, edf, trA = prob.solve(lam)
    return _assemble(specs, smoothers, prob, lam, beta, rss, edf, _gcv(prob.n, rss, trA))


def _gcv(n: int, rss: float, trA: float) -> float:
    denom = n - trA
    return n * rss / denom**2 if denom > 0 else math.inf


def gcv_score(y, hours=None, days=None, specs: Sequence[BasisSpec] = (), lam=None) -> float:
    """n * RSS / (n - tr(A))^2 for given smoothing parameters."""
    fit = fit_penalized_ls(y, hours, days, specs, lam)
    return fit.gcv


def _golden(f, a: float, b: float, tol: float = 1e-3, max_iter: int = 60) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def select_lambda_gcv(y, hours=None, days=None, specs: Sequence[BasisSpec] = (), grid=LAMBDA_GRID,
                      max_sweeps: int = 6) -> tuple[np.ndarray, GamFit]:
    """Choose smoothing parameters by GCV.

    A coordinate-descent scan over the logarithmic ``grid`` (one smoother at
    a time, others held fixed) is followed by a golden-section refinement of
    each log-lambda within one grid step of the scan optimum. Deterministic.
    """
    y = _check_response(y)
    covs = _covariates(hours, days)
    smoothers = [build_basis(s, covs) for s in specs]
    prob = _Problem(y, smoothers)
    grid = np.asarray(grid, dtype=float)
    log_grid = np.log10(grid)
    m = len(specs)
    cache: dict[tuple, float] = {}

    def score(loglam: np.ndarray) -> float:
        key = tuple(np.round(loglam, 12))
        if key not in cache:
            _, rss, _, trA = prob.solve(10.0 ** np.asarray(loglam))
            cache[key] = _gcv(prob.n, rss, trA)
        return cache[key]

    if m == 0:
        beta, rss, edf, trA = prob.solve(np.zeros(0))
        return np.zeros(0), _assemble(specs, smoothers, prob, [], beta, rss, edf, _gcv(prob.n, rss, trA))

    idx = np.full(m, len(grid) // 2)
    scanned = []
    for _ in range(max_sweeps):
        changed = False
        for j in range(m):
            vals = []
            for gi in range(len(grid)):
                trial = log_grid[idx].copy()
                trial[j] = log_grid[gi]
                vals.append(score(trial))
            scanned.extend(vals)
            best = int(np.argmin(vals))  # first minimum on ties -> smallest lambda
            if vals[best] < vals[idx[j]] - 1e-14 * abs(vals[idx[j]]):
                idx[j] = best
                changed = True
        if not changed:
            break

    flags = []
    finite = np.array([s for s in scanned if np.isfinite(s)])
    # GCV ~ mean squared residual, so rounding noise scales with mean(y^2)
    noise = 1e-24 * max(float(np.mean(y**2)), 1e-300)
    if finite.size == 0 or finite.max() - finite.min() <= max(1e-12 * abs(finite.min()), noise):
        flags.append("gcv_flat")
        warnings.warn("GCV surface is flat; returning the most smoothed fit", RuntimeWarning, stacklevel=2)
        loglam = np.full(m, log_grid[-1])
    else:
        loglam = log_grid[idx].astype(float)
        step = log_grid[1] - log_grid[0] if len(grid) > 1 else 1.0
        for j in range(m):
            lo = max(log_grid[0], loglam[j] - step)
            hi = min(log_grid[-1], loglam[j] + step)

            def f1(v, j=j):
                t = loglam.copy()
                t[j] = v
                return score(t)

            cand = _golden(f1, lo, hi)
            if f1(cand) < score(loglam):
                loglam[j] = cand
    lam = 10.0 ** loglam
    beta, rss, edf, trA = prob.solve(lam)
    fit = _assemble(specs, smoothers, prob, lam, beta, rss, edf, _gcv(prob.n, rss, trA), flags)
    return lam, fit


def predict(fit: GamFit, hours=None, days=None) -> np.ndarray:
    """Intercept plus every smoother evaluated at the given covariates."""
    covs = _covariates(hours, days)
    n = len(next(iter(covs.values()))) if covs else 0
    out = np.full(n, fit.intercept)
    for sm, b in zip(fit.smoothers, fit.coefs):
        out = out + sm.evaluate(covs) @ b
    return out


def smoother_values(fit: GamFit, hours=None, days=None) -> list[np.ndarray]:
    """Per-smoother contributions f_j(x) (useful for plotting partial effects)."""
    covs = _covariates(hours, days)
    return [sm.evaluate(covs) @ b for sm, b in zip(fit.smoothers, fit.coefs)]


def adjusted_r2(fit: GamFit) -> float:
    """1 - (1 - R^2)(n - 1)/(n - edf - 1) with edf counted over smoothers only."""
    edf = float(fit.edf.sum())
    if fit.n <= edf + 1:
        raise ValueError(f"adjusted R^2 undefined for n={fit.n}, edf={edf:.3f}")
    return 1.0 - (1.0 - fit.r2) * (fit.n - 1) / (fit.n - edf - 1)
