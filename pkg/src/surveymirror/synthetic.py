"""Planted-model survey generator.

Latent variables are unit-variance: exogenous scores are standard normal and
each endogenous latent is ``sum(beta * predecessor) + e`` with the residual
variance chosen so the latent keeps unit variance. Indicators are
``loading * latent + noise``; for Likert output they are mapped linearly so
that +-3 covers the scale range, then rounded and clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .survey import Respondent, ResponseMatrix, SurveySpec

__all__ = ["SyntheticSample", "parse_betas", "simulate_study", "generate_synthetic_study", "discretize"]


@dataclass(frozen=True)
class SyntheticSample:
    spec: SurveySpec
    latents: np.ndarray  # n x n_latents, spec latent order
    indicators: np.ndarray  # n x n_items, continuous, spec item order
    implied_cov: np.ndarray  # population covariance of the latents


def parse_betas(betas, spec: SurveySpec) -> dict[tuple[str, str], float]:
    """Normalize ``{(src, tgt): b}`` or ``{"src->tgt": b}`` and check it
    matches the spec's path graph exactly."""
    out = {}
    for key, value in dict(betas).items():
        if isinstance(key, str):
            src, _, tgt = key.partition("->")
            key = (src.strip(), tgt.strip())
        out[tuple(key)] = float(value)
    declared = {(p.source, p.target) for p in spec.paths}
    if set(out) != declared:
        missing = sorted(declared - set(out))
        extra = sorted(set(out) - declared)
        raise ValueError(f"planted betas must match the spec paths (missing {missing}, extra {extra})")
    return out


def _per_item(value, spec: SurveySpec, what: str) -> np.ndarray:
    if isinstance(value, Mapping):
        try:
            return np.array([float(value[i]) for i in spec.item_ids])
        except KeyError as exc:
            raise ValueError(f"{what} missing for item {exc}") from None
    return np.full(len(spec.item_ids), float(value))


def _topological(spec: SurveySpec) -> list[str]:
    order, done = [], set()
    names = list(spec.latent_names)
    while len(order) < len(names):
        for n in names:
            if n not in done and all(p in done for p in spec.predecessors(n)):
                order.append(n)
                done.add(n)
    return order


def simulate_study(spec: SurveySpec, betas, loadings=0.9, noise_sd=0.6, n: int = 1000,
                   seed: int = 0) -> SyntheticSample:
    """Draw latent scores and continuous indicators from a planted model."""
    if n < 2:
        raise ValueError("need n >= 2")
    betas = parse_betas(betas, spec)
    lam = _per_item(loadings, spec, "loading")
    sig = _per_item(noise_sd, spec, "noise sd")
    if np.any(sig < 0):
        raise ValueError("noise sd must be nonnegative")
    names = spec.latent_names
    idx = {name: k for k, name in enumerate(names)}
    L = len(names)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, L))
    cov = np.zeros((L, L))
    eta = np.zeros((n, L))
    for name in _topological(spec):
        j = idx[name]
        preds = [idx[p] for p in spec.predecessors(name)]
        if not preds:
            cov[j, j] = 1.0
            eta[:, j] = eps[:, j]
            continue
        b = np.array([betas[(names[p], name)] for p in preds])
        explained = float(b @ cov[np.ix_(preds, preds)] @ b)
        resid = 1.0 - explained
        if resid < -1e-12:
            raise ValueError(f"planted betas imply negative residual variance for {name!r} "
                             f"(explained variance {explained:.4f} > 1)")
        resid = max(resid, 0.0)
        eta[:, j] = eta[:, preds] @ b + np.sqrt(resid) * eps[:, j]
        row = b @ cov[preds, :]
        cov[j, :] = row
        cov[:, j] = row
        cov[j, j] = 1.0
    item_latent = np.array([idx[spec.latent_of(i)] for i in spec.item_ids])
    noise = rng.standard_normal((n, len(item_latent)))
    X = eta[:, item_latent] * lam + noise * sig
    return SyntheticSample(spec, eta, X, cov)


def discretize(indicators: np.ndarray, spec: SurveySpec) -> np.ndarray:
    lo, hi = spec.scale.min, spec.scale.max
    mapped = spec.scale.midpoint + np.asarray(indicators) * (hi - lo) / 6.0
    return np.clip(np.floor(mapped + 0.5), lo, hi).astype(int)


def _demographics(spec: SurveySpec, rng: np.random.Generator) -> dict:
    out = {}
    for d in spec.demographics:
        if d.kind == "numeric":
            out[d.name] = int(rng.integers(18, 76))
        else:
            levels = d.levels or ("group_a", "group_b", "group_c")
            out[d.name] = levels[int(rng.integers(len(levels)))]
    return out


def generate_synthetic_study(spec: SurveySpec, betas, loadings=0.9, noise_sd=0.6, n: int = 1000,
                             seed: int = 0) -> ResponseMatrix:
    """Likert-discretized planted-model responses with random demographics."""
    sample = simulate_study(spec, betas, loadings, noise_sd, n, seed)
    values = discretize(sample.indicators, spec)
    rng = np.random.default_rng([seed, 1])
    width = len(str(n))
    respondents = tuple(
        Respondent(f"R{k + 1:0{width}d}", _demographics(spec, rng),
                   {item: int(v) for item, v in zip(spec.item_ids, row)})
        for k, row in enumerate(values)
    )
    return ResponseMatrix(spec, respondents)
