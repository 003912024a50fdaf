"""Deterministic simulated respondent for offline runs and tests.

The simulated model reads only the structured record of what a prompt
carries, so each information regime gets exactly the information its prompt
contains:

* baseline: the scale midpoint plus noise;
* demo: midpoint plus a fixed offset derived from the demographic profile;
* omni: ``midpoint + sum_L w_L * (mean answer on prior latent L - midpoint)``
  plus noise, using the exact prior answers;
* mirror: the same rule applied to the per-topic levels written into the
  persona sketch (which rounds them to half points).

Noise comes from a stream keyed on ``(seed, respondent id, prompt)``, so
two respondents sent the same prompt still get independent draws.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .llm_client import CompletionRequest
from .prompting import PersonaContext, PromptBundle, PromptContext, format_answers
from .survey import LikertScale, Respondent

__all__ = ["SimulatedBackend", "SimulatedRespondentConfig", "simulated_persona", "simulated_respond"]


@dataclass(frozen=True)
class SimulatedRespondentConfig:
    """``rule`` maps each target latent to weights over prior latents.

    Without a rule every target latent weighs all prior latents equally.
    """

    noise: float = 0.0
    seed: int = 0
    rule: Mapping[str, Mapping[str, float]] | None = None
    demographic_offset: float = 0.5

    def __post_init__(self):
        if not self.noise >= 0:
            raise ValueError("noise scale must be >= 0")
        if self.rule is not None:
            for target, weights in self.rule.items():
                for latent, w in weights.items():
                    if not math.isfinite(float(w)):
                        raise ValueError(f"non-finite weight {target}<-{latent}")

    def fingerprint(self) -> str:
        doc = {"noise": self.noise, "seed": self.seed, "demographic_offset": self.demographic_offset,
               "rule": {t: dict(sorted(w.items())) for t, w in sorted(self.rule.items())} if self.rule else None}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def weights_for(self, target: str, available) -> dict[str, float]:
        if self.rule is None:
            available = list(available)
            return {L: 1.0 / len(available) for L in available} if available else {}
        if target not in self.rule:
            raise ValueError(f"simulated answer rule has no entry for target latent {target!r}")
        return {L: float(w) for L, w in self.rule[target].items()}


def _stream(seed: int, respondent_id: str, prompt: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{respondent_id}\n{prompt}".encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


def _round_clamp(x: np.ndarray, scale: LikertScale) -> list[int]:
    return [int(v) for v in np.clip(np.floor(x + 0.5), scale.min, scale.max)]


def _level_phrase(mean: float, scale: LikertScale) -> str:
    d = mean - scale.midpoint
    if d < -1.5:
        return "strongly disagree"
    if d < -0.5:
        return "tend to disagree"
    if d <= 0.5:
        return "feel neutral"
    if d <= 1.5:
        return "tend to agree"
    return "strongly agree"


def simulated_persona(ctx: PersonaContext) -> str:
    """Second-person sketch stating a half-point level for each prior topic."""
    means = _latent_means(ctx.prior_qa)
    parts = ["You are a survey respondent with settled views on these topics."]
    for name, label in ctx.topics:
        m = means[name]
        level = round(m * 2) / 2
        parts.append(f"On {label} ({name}), you {_level_phrase(m, ctx.scale)}, "
                     f"at about {level:.1f} on the {ctx.scale.min} to {ctx.scale.max} scale.")
    return " ".join(parts)


_PERSONA_LEVEL = re.compile(r"\((?P<name>[^()]+)\), you [^,]+, at about (?P<value>\d+(?:\.\d+)?)")


def _persona_levels(text: str) -> dict[str, float]:
    return {m.group("name"): float(m.group("value")) for m in _PERSONA_LEVEL.finditer(text)}


def _latent_means(prior_qa) -> dict[str, float]:
    sums: dict[str, list[int]] = {}
    for a in prior_qa:
        sums.setdefault(a.latent, []).append(a.answer)
    return {L: float(np.mean(v)) for L, v in sums.items()}


def _demographic_shift(demographics) -> float:
    blob = json.dumps([[k, v] for k, v in demographics], default=str)
    u = int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big") / 2 ** 64
    return 2 * u - 1


def _answers(ctx: PromptContext, config: SimulatedRespondentConfig, respondent_id: str, prompt: str) -> list[int]:
    scale = ctx.scale
    mid = scale.midpoint
    n = len(ctx.questions)
    noise = (_stream(config.seed, respondent_id, prompt).normal(0.0, config.noise, n) if config.noise > 0
             else np.zeros(n))
    if ctx.prior_qa is not None:
        info = _latent_means(ctx.prior_qa)
    elif ctx.persona is not None:
        info = _persona_levels(ctx.persona)
    else:
        info = None
    if info is None:
        base = mid
        if ctx.demographics is not None:
            base += config.demographic_offset * _demographic_shift(ctx.demographics)
        return _round_clamp(base + noise, scale)
    values = np.empty(n)
    for k, q in enumerate(ctx.questions):
        weights = config.weights_for(q.latent, info)
        values[k] = mid + sum(w * (info[L] - mid) for L, w in weights.items() if L in info)
    return _round_clamp(values + noise, scale)


def simulated_respond(bundle: PromptBundle, respondent: Respondent | None,
                      config: SimulatedRespondentConfig) -> str:
    """Reply text for ``bundle`` as the bracketed answer list."""
    if respondent is not None and respondent.id != bundle.respondent_id:
        raise ValueError(f"bundle is for {bundle.respondent_id!r}, not {respondent.id!r}")
    return format_answers(_answers(bundle.context, config, bundle.respondent_id, bundle.rendered_text))


@dataclass
class SimulatedBackend:
    config: SimulatedRespondentConfig = field(default_factory=SimulatedRespondentConfig)

    @property
    def model_id(self) -> str:
        return f"simulated-respondent-{self.config.fingerprint()}"

    @property
    def identity(self) -> str:
        return self.model_id

    def complete(self, request: CompletionRequest) -> str:
        ctx = request.context
        if isinstance(ctx, PersonaContext):
            return simulated_persona(ctx)
        if isinstance(ctx, PromptContext):
            rid = request.tag.respondent_id if request.tag else ""
            return format_answers(_answers(ctx, self.config, rid, request.prompt))
        raise ValueError("the simulated backend needs a structured prompt context on the request")
