"""Distribution and individual-level comparisons of Likert responses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .survey import LikertScale, ResponseMatrix

__all__ = [
    "DistributionReport",
    "LikertDistribution",
    "MetricError",
    "bin_responses",
    "compare_distributions",
    "consistency",
    "default_grid",
    "jensen_shannon",
    "kde_curve",
    "likert_histogram",
    "silverman_bandwidth",
    "wasserstein",
]


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class LikertDistribution:
    scale: LikertScale
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @classmethod
    def from_probabilities(cls, probabilities, scale: LikertScale | None = None) -> "LikertDistribution":
        """Distribution with given level probabilities (counts are the
        probabilities themselves, so ``probabilities`` round-trips)."""
        p = np.asarray(probabilities, dtype=float)
        if scale is None:
            scale = LikertScale(1, len(p))
        if len(p) != scale.n_levels or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
            raise MetricError("probabilities must be nonnegative, sum to 1 and cover every scale level")
        return cls(scale, p)

    @classmethod
    def point_mass(cls, level: int, scale: LikertScale) -> "LikertDistribution":
        return likert_histogram([level], scale)


def likert_histogram(responses: Sequence[int], scale: LikertScale) -> LikertDistribution:
    """Counts per scale level; empty levels are kept."""
    r = np.asarray(responses)
    if r.size == 0:
        raise MetricError("cannot build a histogram from no responses")
    if not np.all(np.equal(np.mod(r, 1), 0)):
        raise MetricError("responses must be integers")
    r = r.astype(int)
    bad = r[(r < scale.min) | (r > scale.max)]
    if bad.size:
        raise MetricError(f"response {bad[0]} outside [{scale.min}, {scale.max}]")
    counts = np.bincount(r - scale.min, minlength=scale.n_levels)
    return LikertDistribution(scale, counts)


def _check_scales(P: LikertDistribution, Q: LikertDistribution):
    if (P.scale.min, P.scale.max) != (Q.scale.min, Q.scale.max):
        raise MetricError(f"scale mismatch: {P.scale.min}-{P.scale.max} vs {Q.scale.min}-{Q.scale.max}")


def _kl_to_mixture(p: np.ndarray, q: np.ndarray) -> float:
    # KL(p || (p+q)/2) in bits; p/m written as 2p/(p+q) so tiny masses cannot underflow m
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(2 * p[nz] / (p[nz] + q[nz]))))


def jensen_shannon(P: LikertDistribution, Q: LikertDistribution) -> float:
    """Jensen-Shannon divergence in bits, so 0 <= JSD <= 1."""
    _check_scales(P, Q)
    p, q = P.probabilities, Q.probabilities
    # sum the two halves in a fixed order so the result is exactly symmetric
    a, b = _kl_to_mixture(p, q), _kl_to_mixture(q, p)
    value = 0.5 * (min(a, b) + max(a, b))
    return min(1.0, max(0.0, value))


def wasserstein(P: LikertDistribution, Q: LikertDistribution) -> float:
    """First-order Wasserstein distance with unit spacing between levels."""
    _check_scales(P, Q)
    diff = np.cumsum(P.probabilities)[:-1] - np.cumsum(Q.probabilities)[:-1]
    return float(np.abs(diff).sum())


def bin_responses(values, scale: LikertScale) -> np.ndarray:
    """-1 below the scale midpoint (disagree), 0 at it, +1 above (agree)."""
    return np.sign(np.asarray(values, dtype=float) - scale.midpoint).astype(int)


def consistency(human: ResponseMatrix, llm: ResponseMatrix) -> float:
    """Percentage of respondent-item cells whose agreement bins match.

    Respondents are matched by id; both matrices must hold the same ids and
    items. Cells are pooled over all respondents and items.
    """
    if set(human.ids) != set(llm.ids) or len(human) != len(llm):
        only_h = sorted(set(human.ids) - set(llm.ids))
        only_l = sorted(set(llm.ids) - set(human.ids))
        raise MetricError(f"respondent id mismatch (human only: {only_h[:5]}, llm only: {only_l[:5]})")
    if human.items != llm.items:
        raise MetricError(f"item mismatch: {human.items} vs {llm.items}")
    sh, sl = human.spec.scale, llm.spec.scale
    if (sh.min, sh.max) != (sl.min, sl.max):
        raise MetricError("scale mismatch")
    H = human.values()
    order = {rid: k for k, rid in enumerate(llm.ids)}
    G = llm.values()[[order[rid] for rid in human.ids]]
    match = bin_responses(H, sh) == bin_responses(G, sh)
    return 100.0 * match.sum() / match.size


def silverman_bandwidth(responses) -> float:
    """Silverman's rule, 0.9 * min(sd, IQR / 1.34) * n^(-1/5).

    Likert samples often have a zero IQR; the nonzero spread is used then,
    and a half-level width when the sample is constant.
    """
    x = np.asarray(responses, dtype=float)
    if x.size == 0:
        raise MetricError("cannot compute a bandwidth from no responses")
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spreads = [s for s in (sd, (q75 - q25) / 1.34) if s > 0]
    if not spreads:
        return 0.5
    return 0.9 * min(spreads) * x.size ** (-0.2)


def default_grid(scale: LikertScale, points_per_level: int = 20) -> np.ndarray:
    lo, hi = scale.min - 1, scale.max + 1
    return np.linspace(lo, hi, (hi - lo) * points_per_level + 1)


def kde_curve(responses, bandwidth: float | None = None, grid=None) -> np.ndarray:
    """Gaussian kernel density on ``grid``; returns an (n, 2) array of x, density."""
    x = np.asarray(responses, dtype=float)
    if x.size == 0:
        raise MetricError("cannot estimate a density from no responses")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if not bandwidth > 0:
        raise MetricError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        grid = np.linspace(x.min() - 3 * bandwidth, x.max() + 3 * bandwidth, 201)
    g = np.asarray(grid, dtype=float)
    u = (g[:, None] - x[None, :]) / bandwidth
    density = np.exp(-0.5 * u * u).sum(axis=1) / (x.size * bandwidth * math.sqrt(2 * math.pi))
    return np.column_stack([g, density])


@dataclass
class DistributionReport:
    """Human-vs-generated comparison over a set of target items.

    Means weight every item equally.
    """

    items: tuple[str, ...]
    jsd: dict[str, float]
    wasserstein: dict[str, float]
    consistency: float
    kde_human: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    kde_llm: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    n_respondents: int = 0

    @property
    def mean_jsd(self) -> float:
        return float(np.mean([self.jsd[i] for i in self.items]))

    @property
    def mean_wasserstein(self) -> float:
        return float(np.mean([self.wasserstein[i] for i in self.items]))

    def to_dict(self, include_curves: bool = False) -> dict:
        doc = {
            "items": list(self.items),
            "n_respondents": self.n_respondents,
            "jsd": dict(self.jsd),
            "wasserstein": dict(self.wasserstein),
            "mean_jsd": self.mean_jsd,
            "mean_wasserstein": self.mean_wasserstein,
            "consistency": self.consistency,
            "averaging": "items weighted equally; consistency pooled over respondent-item cells",
        }
        if include_curves:
            doc["kde_human"] = {k: v.tolist() for k, v in self.kde_human.items()}
            doc["kde_llm"] = {k: v.tolist() for k, v in self.kde_llm.items()}
        return doc


def compare_distributions(human: ResponseMatrix, llm: ResponseMatrix, items: Sequence[str] | None = None,
                          bandwidth: float | None = None, grid=None) -> DistributionReport:
    """Per-item JSD, Wasserstein and KDE curves plus pooled consistency.

    Only respondents present in both matrices are compared.
    """
    items = tuple(items) if items is not None else llm.items
    common = set(human.ids) & set(llm.ids)
    if not common:
        raise MetricError("no respondents in common")
    h = human.subset(common).restrict(items)
    g = llm.subset(common).restrict(items)
    scale = human.spec.scale
    if grid is None:
        grid = default_grid(scale)
    jsd, wd, kh, kl = {}, {}, {}, {}
    for item in items:
        hv, gv = h.column(item), g.column(item)
        P, Q = likert_histogram(hv, scale), likert_histogram(gv, scale)
        jsd[item] = jensen_shannon(P, Q)
        wd[item] = wasserstein(P, Q)
        kh[item] = kde_curve(hv, bandwidth, grid)
        kl[item] = kde_curve(gv, bandwidth, grid)
    return DistributionReport(items, jsd, wd, consistency(h, g), kh, kl, len(h))
