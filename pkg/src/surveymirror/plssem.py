"""Partial least squares path modeling (PLS-PM) with bootstrap inference.

The estimator is the classical Wold/Lohmöller iteration with reflective
(mode A) outer estimation and a choice of centroid, factorial or path inner
weighting. Path coefficients are ordinary least squares fits of each
endogenous latent score on its structural predecessors.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.random import SeedSequence, default_rng
from scipy.stats import norm

from .survey import ResponseMatrix, SurveySpec

__all__ = [
    "BootstrapError",
    "ConvergenceWarning",
    "DegenerateBlockError",
    "InnerScheme",
    "LatentScores",
    "PathEstimates",
    "PlsError",
    "PlsOptions",
    "PlsResult",
    "SingularPredictorsError",
    "ZeroVarianceError",
    "bootstrap",
    "estimate_scores",
    "fit",
    "format_coefficient",
    "path_coefficients",
    "significance_mark",
    "standardize",
]

MARKS = ("", "*", "**", "***")
# two-sided normal critical values for p < 0.05, 0.01, 0.001
_Z_CRIT = tuple(float(norm.ppf(1 - p / 2)) for p in (0.05, 0.01, 0.001))
MAX_FAILURE_RATE = 0.05


class PlsError(ValueError):
    pass


class ZeroVarianceError(PlsError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"zero-variance column(s): {', '.join(map(str, self.columns))}")


class DegenerateBlockError(PlsError):
    def __init__(self, latent, reason):
        self.latent = latent
        super().__init__(f"degenerate block {latent!r}: {reason}")


class SingularPredictorsError(PlsError):
    def __init__(self, latent):
        self.latent = latent
        super().__init__(f"collinear predictor scores for endogenous latent {latent!r}")


class BootstrapError(PlsError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class InnerScheme(str, Enum):
    CENTROID = "centroid"
    FACTORIAL = "factorial"
    PATH = "path"


@dataclass(frozen=True)
class PlsOptions:
    inner_scheme: InnerScheme = InnerScheme.CENTROID
    max_iterations: int = 100
    tolerance: float = 1e-6
    standardization_denominator: str = "n_minus_1"

    def __post_init__(self):
        object.__setattr__(self, "inner_scheme", InnerScheme(self.inner_scheme))
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.standardization_denominator not in ("n", "n_minus_1"):
            raise ValueError("standardization_denominator must be 'n' or 'n_minus_1'")

    @property
    def ddof(self) -> int:
        return 1 if self.standardization_denominator == "n_minus_1" else 0


def standardize(columns, denominator: str = "n_minus_1", labels=None) -> np.ndarray:
    """Center each column and scale it to unit variance.

    ``denominator`` is ``"n_minus_1"`` (sample variance) or ``"n"``.
    Raises :class:`ZeroVarianceError` naming the constant columns.
    """
    X = np.asarray(columns, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise PlsError("standardization needs at least 2 rows")
    ddof = {"n_minus_1": 1, "n": 0}[denominator]
    centered = X - X.mean(axis=0)
    sd = np.sqrt((centered ** 2).sum(axis=0) / (X.shape[0] - ddof))
    flat = sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    if flat.any():
        names = labels if labels is not None else range(X.shape[1])
        raise ZeroVarianceError([n for n, f in zip(names, flat) if f])
    return centered / sd


@dataclass(frozen=True)
class LatentScores:
    """Standardized latent scores and the outer model that produced them."""

    latents: tuple[str, ...]
    scores: np.ndarray
    outer_weights: dict[str, float]
    loadings: dict[str, float]
    converged: bool
    iterations: int
    ddof: int = 1

    def column(self, latent: str) -> np.ndarray:
        return self.scores[:, self.latents.index(latent)]


@dataclass(frozen=True)
class PathEstimates:
    coefficients: dict[tuple[str, str], float]
    r_squared: dict[str, float]


@dataclass
class PlsResult:
    estimates: PathEstimates
    sds: dict[tuple[str, str], float]
    marks: dict[tuple[str, str], str]
    n_bootstrap: int
    seed: int
    n_failed: int = 0
    n_unconverged: int = 0
    outer_weights: dict[str, float] = field(default_factory=dict)
    loadings: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    iterations: int = 0
    replicates: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def paths(self) -> list[tuple[str, str]]:
        return list(self.estimates.coefficients)

    @property
    def coefficients(self) -> dict[tuple[str, str], float]:
        return self.estimates.coefficients

    def cell(self, path: tuple[str, str]) -> str:
        return format_coefficient(self.coefficients[path], self.sds[path], self.marks[path])

    def to_dict(self) -> dict:
        return {
            "paths": [
                {"from": s, "to": t, "coefficient": self.coefficients[(s, t)],
                 "sd": self.sds[(s, t)], "mark": self.marks[(s, t)]}
                for s, t in self.paths
            ],
            "r_squared": dict(self.estimates.r_squared),
            "outer_weights": dict(self.outer_weights),
            "loadings": dict(self.loadings),
            "n_bootstrap": self.n_bootstrap,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "n_unconverged": self.n_unconverged,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        """Coefficient table: marks after the value, SD in parentheses beneath."""
        labels = [f"{s} -> {t}" for s, t in self.paths]
        width = max(len(x) for x in labels + ["Path"])
        lines = [f"{'Path':<{width}}  Estimate", "-" * (width + 12)]
        for label, path in zip(labels, self.paths):
            lines.append(f"{label:<{width}}  {self.coefficients[path]:.4f}{self.marks[path]}")
            lines.append(f"{'':<{width}}  ({self.sds[path]:.4f})")
        lines.append("")
        lines.append(f"Bootstrap samples: {self.n_bootstrap} (seed {self.seed}, failed {self.n_failed}, "
                     f"unconverged {self.n_unconverged})")
        lines.append("Significance: * p < 0.05, ** p < 0.01, *** p < 0.001 "
                     "(two-sided, normal approximation to coefficient / bootstrap SD)")
        return "\n".join(lines) + "\n"


def format_coefficient(coefficient: float, sd: float, mark: str) -> str:
    return f"{coefficient:.4f}{mark} ({sd:.4f})"


def significance_mark(coefficient: float, sd: float) -> str:
    if sd == 0:
        return "***" if coefficient != 0 else ""
    z = abs(coefficient / sd)
    return MARKS[sum(z > c for c in _Z_CRIT)]


# --------------------------------------------------------------------------
# model structure


@dataclass(frozen=True)
class _Model:
    latents: tuple[str, ...]
    items: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]  # column indices per latent
    adjacency: np.ndarray  # adjacency[i, j] = 1 for path i -> j

    @classmethod
    def from_spec(cls, spec: SurveySpec) -> "_Model":
        items = spec.item_ids
        latents = spec.latent_names
        col = {item: k for k, item in enumerate(items)}
        blocks = tuple(np.array([col[i] for i in lv.item_ids]) for lv in spec.latents)
        A = np.zeros((len(latents), len(latents)))
        for p in spec.paths:
            A[latents.index(p.source), latents.index(p.target)] = 1
        return cls(latents, items, blocks, A)


def _indicator_matrix(data, spec: SurveySpec) -> np.ndarray:
    if isinstance(data, ResponseMatrix):
        return data.values(spec.item_ids).astype(float)
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(spec.item_ids):
        raise PlsError(f"expected a matrix with {len(spec.item_ids)} columns in spec item order")
    return X


def _corr_with(Xs: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Correlations of standardized columns ``Xs`` with vector ``z``."""
    zc = z - z.mean()
    zn = np.sqrt(zc @ zc)
    if zn == 0:
        return np.zeros(Xs.shape[1])
    xn = np.sqrt((Xs * Xs).sum(axis=0))
    return (Xs.T @ zc) / (xn * zn)


def _inner_weights(Y: np.ndarray, A: np.ndarray, scheme: InnerScheme) -> np.ndarray:
    """Matrix E with inner proxy Z[:, j] = sum_i E[i, j] Y[:, i]."""
    L = A.shape[0]
    C = np.corrcoef(Y, rowvar=False) if L > 1 else np.ones((1, 1))
    connected = (A + A.T) > 0
    if scheme is InnerScheme.CENTROID:
        # correlations at rounding level carry no sign
        return np.where(connected & (np.abs(C) > 1e-12), np.sign(C), 0.0)
    if scheme is InnerScheme.FACTORIAL:
        return np.where(connected, C, 0.0)
    E = np.zeros((L, L))
    for j in range(L):
        preds = np.flatnonzero(A[:, j])
        if preds.size:
            coef, *_ = np.linalg.lstsq(Y[:, preds], Y[:, j], rcond=None)
            E[preds, j] = coef
        succ = np.flatnonzero(A[j, :])
        E[succ, j] = C[succ, j]
    return E


def _scale_weights(Xb: np.ndarray, w: np.ndarray, ddof: int, latent: str) -> np.ndarray:
    y = Xb @ w
    sd = np.sqrt(((y - y.mean()) ** 2).sum() / (len(y) - ddof))
    if not sd > 1e-12:
        raise DegenerateBlockError(latent, "composite score has zero variance")
    return w / sd


def _estimate(Xs: np.ndarray, model: _Model, options: PlsOptions):
    """Core iteration on already-standardized indicators."""
    ddof = options.ddof
    weights = [_scale_weights(Xs[:, b], np.ones(len(b)), ddof, lv)
               for b, lv in zip(model.blocks, model.latents)]
    Y = np.column_stack([Xs[:, b] @ w for b, w in zip(model.blocks, weights)])
    converged = False
    iterations = 0
    for iterations in range(1, options.max_iterations + 1):
        E = _inner_weights(Y, model.adjacency, options.inner_scheme)
        Z = Y @ E
        new = []
        for j, (b, lv) in enumerate(zip(model.blocks, model.latents)):
            z = Z[:, j] if np.any(E[:, j]) else Y[:, j]  # isolated latent: own score
            w = _corr_with(Xs[:, b], z)
            if not np.any(np.abs(w) > 1e-12):
                # the proxy says nothing about this block; keep its weights
                w = weights[j]
            new.append(_scale_weights(Xs[:, b], w, ddof, lv))
        change = max(np.abs(n - o).max() for n, o in zip(new, weights))
        weights = new
        Y = np.column_stack([Xs[:, b] @ w for b, w in zip(model.blocks, weights)])
        if change < options.tolerance:
            converged = True
            break
    # orient each block so its dominant indicator loads positively
    loadings = []
    for j, b in enumerate(model.blocks):
        lam = _corr_with(Xs[:, b], Y[:, j])
        if lam[np.argmax(np.abs(lam))] < 0:
            weights[j] = -weights[j]
            Y[:, j] = -Y[:, j]
            lam = -lam
        loadings.append(lam)
    return Y, weights, loadings, converged, iterations


def _warn_degenerate_blocks(Xs: np.ndarray, model: _Model):
    for b, lv in zip(model.blocks, model.latents):
        if len(b) < 2:
            continue
        R = np.corrcoef(Xs[:, b], rowvar=False)
        off = R[~np.eye(len(b), dtype=bool)]
        if np.all(np.abs(off) < 1e-12):
            warnings.warn(f"block {lv!r}: indicators are mutually uncorrelated", RuntimeWarning, stacklevel=3)


def estimate_scores(data, spec: SurveySpec, options: PlsOptions | None = None) -> LatentScores:
    """Estimate standardized latent scores by the iterative PLS algorithm.

    ``data`` is a :class:`ResponseMatrix` or a numeric array whose columns
    follow ``spec.item_ids``. A run that hits ``max_iterations`` returns its
    last iterate with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    options = options or PlsOptions()
    model = _Model.from_spec(spec)
    Xs = standardize(_indicator_matrix(data, spec), options.standardization_denominator, model.items)
    _warn_degenerate_blocks(Xs, model)
    Y, weights, loadings, converged, iterations = _estimate(Xs, model, options)
    if not converged:
        warnings.warn(f"PLS did not converge in {options.max_iterations} iterations", ConvergenceWarning,
                      stacklevel=2)
    outer, load = {}, {}
    for b, w, lam in zip(model.blocks, weights, loadings):
        for k, col in enumerate(b):
            outer[model.items[col]] = float(w[k])
            load[model.items[col]] = float(lam[k])
    return LatentScores(model.latents, Y, outer, load, converged, iterations, options.ddof)


def _regress(Y: np.ndarray, latents, spec: SurveySpec):
    coefs, r2 = {}, {}
    index = {n: k for k, n in enumerate(latents)}
    for target in spec.endogenous:
        preds = spec.predecessors(target)
        P = Y[:, [index[p] for p in preds]]
        y = Y[:, index[target]]
        G = P.T @ P
        if np.linalg.cond(G) > 1e12:
            raise SingularPredictorsError(target)
        beta = np.linalg.solve(G, P.T @ y)
        resid = y - P @ beta
        yc = y - y.mean()
        r2[target] = float(min(1.0, max(0.0, 1.0 - (resid @ resid) / (yc @ yc))))
        for p, b in zip(preds, beta):
            coefs[(p, target)] = float(b)
    # report in declared path order
    ordered = {(p.source, p.target): coefs[(p.source, p.target)] for p in spec.paths}
    return ordered, r2


def path_coefficients(scores: LatentScores, spec: SurveySpec, allow_unconverged: bool = False) -> PathEstimates:
    """OLS path coefficients and R-squared per endogenous latent."""
    if not scores.converged and not allow_unconverged:
        raise PlsError("latent scores did not converge; pass allow_unconverged=True to use them anyway")
    coefs, r2 = _regress(scores.scores, scores.latents, spec)
    return PathEstimates(coefs, r2)


def _replicate(i, X, model, spec, options, seed, ref_weights):
    rng = default_rng(SeedSequence(seed, spawn_key=(i,)))
    idx = rng.integers(0, X.shape[0], X.shape[0])
    try:
        Xs = standardize(X[idx], options.standardization_denominator)
        Y, weights, _, converged, _ = _estimate(Xs, model, options)
        for j, (w, ref) in enumerate(zip(weights, ref_weights)):
            if w @ ref < 0:
                Y[:, j] = -Y[:, j]
        coefs, _ = _regress(Y, model.latents, spec)
    except PlsError:
        return None
    return np.fromiter(coefs.values(), dtype=float), converged


def bootstrap(data, spec: SurveySpec, options: PlsOptions | None = None, B: int = 5000, seed: int = 0,
              workers: int = 1) -> PlsResult:
    """Full-sample fit plus ``B`` respondent resamples.

    Replicate ``i`` draws its rows from a stream derived from ``(seed, i)``,
    so results do not depend on ``workers``. Each replicate's latent scores
    are oriented to the full-sample outer weights before regression.
    Replicates that fail (zero-variance resample, collinear predictors) are
    skipped; more than 5% failures raise :class:`BootstrapError`. A
    replicate that hits ``max_iterations`` keeps its last iterate, as the
    full-sample fit does, and is counted in ``n_unconverged``.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    options = options or PlsOptions()
    model = _Model.from_spec(spec)
    X = _indicator_matrix(data, spec)
    full = estimate_scores(X, spec, options)
    estimates = path_coefficients(full, spec, allow_unconverged=True)
    ref = [np.array([full.outer_weights[model.items[c]] for c in b]) for b in model.blocks]

    def run(i):
        return _replicate(i, X, model, spec, options, seed, ref)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(run, range(B)))
    else:
        reps = [run(i) for i in range(B)]
    ok = [r[0] for r in reps if r is not None]
    n_failed = B - len(ok)
    n_unconverged = sum(1 for r in reps if r is not None and not r[1])
    if n_failed > MAX_FAILURE_RATE * B or len(ok) < 2:
        raise BootstrapError(f"{n_failed} of {B} bootstrap replicates failed")
    R = np.vstack(ok)
    sd = R.std(axis=0, ddof=1)
    paths = list(estimates.coefficients)
    sds = {p: float(s) for p, s in zip(paths, sd)}
    marks = {p: significance_mark(estimates.coefficients[p], sds[p]) for p in paths}
    return PlsResult(
        estimates=estimates,
        sds=sds,
        marks=marks,
        n_bootstrap=B,
        seed=seed,
        n_failed=n_failed,
        n_unconverged=n_unconverged,
        outer_weights=full.outer_weights,
        loadings=full.loadings,
        converged=full.converged,
        iterations=full.iterations,
        replicates=R,
    )


def fit(data, spec: SurveySpec, options: PlsOptions | None = None, B: int = 5000, seed: int = 0,
        workers: int = 1) -> PlsResult:
    """Estimate the model and its bootstrap standard deviations."""
    if not spec.paths:
        raise PlsError(f"spec {spec.name!r} declares no structural paths")
    return bootstrap(data, spec, options, B=B, seed=seed, workers=workers)
