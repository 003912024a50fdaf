"""Respondent prompts for the four information regimes, persona generation
and parsing of Likert answer replies.

Which ingredients each regime carries:

============  ========  ====  ======  ====
ingredient    baseline  demo  mirror  omni
============  ========  ====  ======  ====
context       yes       yes   yes     yes
demographics  no        yes   no      yes
prior Q&A     no        no    no      yes
persona       no        no    yes     no
questions     yes       yes   yes     yes
============  ========  ====  ======  ====

Personas are written from demographics plus prior answers, but the mirror
answering prompt carries only the persona text.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

from .llm_client import CompletionRequest, RequestTag
from .survey import NOT_PROVIDED, LikertScale, Respondent, SurveySpec

__all__ = [
    "INGREDIENTS",
    "APPROACH_INPUTS",
    "TEMPLATE_VERSION",
    "AnswerCountError",
    "AnswerRangeError",
    "Approach",
    "MissingPriorAnswersError",
    "NoAnswerBlockError",
    "PersonaContext",
    "PersonaGenerationError",
    "PersonaText",
    "PriorAnswer",
    "PromptBundle",
    "PromptContext",
    "PromptError",
    "Question",
    "ReplyParseError",
    "Template",
    "build_prompt",
    "format_answers",
    "format_reminder",
    "generate_persona",
    "load_template",
    "parse_likert_reply",
    "persona_fingerprint",
]

TEMPLATE_VERSION = "v1"
MAX_EMPTY_RETRIES = 3


class Approach(str, Enum):
    BASELINE = "baseline"
    DEMO = "demo"
    MIRROR = "mirror"
    OMNI = "omni"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def ordered(cls, approaches) -> list["Approach"]:
        chosen = {cls(a) for a in approaches}
        return [a for a in cls if a in chosen]


_LABELS = {
    Approach.BASELINE: "Baseline prompt",
    Approach.DEMO: "Demo prompt",
    Approach.MIRROR: "LLM-Mirror",
    Approach.OMNI: "Omni prompt",
}

INGREDIENTS = ("survey_context", "demographics", "prior_qa", "persona", "questions")
APPROACH_INPUTS = {
    Approach.BASELINE: dict(survey_context=True, demographics=False, prior_qa=False, persona=False, questions=True),
    Approach.DEMO: dict(survey_context=True, demographics=True, prior_qa=False, persona=False, questions=True),
    Approach.MIRROR: dict(survey_context=True, demographics=False, prior_qa=False, persona=True, questions=True),
    Approach.OMNI: dict(survey_context=True, demographics=True, prior_qa=True, persona=False, questions=True),
}


class PromptError(ValueError):
    pass


class MissingPriorAnswersError(PromptError):
    def __init__(self, respondent_id, items):
        self.items = list(items)
        super().__init__(f"respondent {respondent_id!r} has no answer for prior item(s) {self.items}")


class PersonaGenerationError(RuntimeError):
    pass


class ReplyParseError(ValueError):
    """Base class for unusable answer replies."""


class NoAnswerBlockError(ReplyParseError):
    pass


class AnswerCountError(ReplyParseError):
    def __init__(self, expected, found):
        self.expected, self.found = expected, found
        super().__init__(f"expected {expected} answers, found {found}")


class AnswerRangeError(ReplyParseError):
    def __init__(self, position, value, scale):
        self.position, self.value = position, value
        super().__init__(f"answer {value} at position {position} outside [{scale.min}, {scale.max}]")


# --------------------------------------------------------------------------
# templates


_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")


class Template:
    """Text with ``{{name}}`` placeholders."""

    def __init__(self, text: str, version: str = TEMPLATE_VERSION, name: str = ""):
        self.text = text
        self.version = version
        self.name = name

    @property
    def placeholders(self) -> list[str]:
        return list(dict.fromkeys(_PLACEHOLDER.findall(self.text)))

    def render(self, values: Mapping[str, str]) -> str:
        missing = [p for p in self.placeholders if p not in values]
        if missing:
            raise KeyError(f"template {self.name!r} needs values for {missing}")
        out = _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), self.text)
        # absent sections render empty; collapse the gaps they leave
        out = re.sub(r"\n{3,}", "\n\n", out)
        return out.strip() + "\n"


@lru_cache(maxsize=None)
def load_template(name: str, version: str = TEMPLATE_VERSION) -> Template:
    text = resources.files("surveymirror").joinpath("templates", f"{name}_{version}.txt").read_text("utf-8")
    return Template(text, version, name)


# --------------------------------------------------------------------------
# structured prompt contents


@dataclass(frozen=True)
class Question:
    item_id: str
    latent: str
    text: str


@dataclass(frozen=True)
class PriorAnswer:
    item_id: str
    latent: str
    text: str
    answer: int


@dataclass(frozen=True)
class PromptContext:
    """What a respondent prompt actually carries."""

    survey_context: str
    questions: tuple[Question, ...]
    scale: LikertScale
    demographics: tuple[tuple[str, object], ...] | None = None
    prior_qa: tuple[PriorAnswer, ...] | None = None
    persona: str | None = None

    def flags(self) -> dict[str, bool]:
        return {
            "survey_context": bool(self.survey_context),
            "demographics": self.demographics is not None,
            "prior_qa": self.prior_qa is not None,
            "persona": self.persona is not None,
            "questions": bool(self.questions),
        }


@dataclass(frozen=True)
class PersonaContext:
    """Inputs of a persona-construction request."""

    respondent_id: str
    survey_context: str
    demographics: tuple[tuple[str, object], ...]
    prior_qa: tuple[PriorAnswer, ...]
    scale: LikertScale
    topics: tuple[tuple[str, str], ...]  # (latent name, display label)


@dataclass(frozen=True)
class PromptBundle:
    approach: Approach
    respondent_id: str
    rendered_text: str
    context: PromptContext
    template_version: str = TEMPLATE_VERSION

    def flags(self) -> dict[str, bool]:
        return self.context.flags()


@dataclass(frozen=True)
class PersonaText:
    respondent_id: str
    text: str
    fingerprint: str
    template_version: str = TEMPLATE_VERSION
    backend: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise PromptError("persona text is empty")


def _humanize(field_name: str) -> str:
    return field_name.replace("_", " ")


def _demographic_pairs(respondent: Respondent, spec: SurveySpec):
    return tuple((name, respondent.demographics.get(name)) for name in spec.demographic_names)


def _prior_answers(respondent: Respondent, spec: SurveySpec, prior_items: Sequence[str]):
    missing = [i for i in prior_items if i not in respondent.answers]
    if missing:
        raise MissingPriorAnswersError(respondent.id, missing)
    return tuple(
        PriorAnswer(i, spec.latent_of(i), spec.item(i).text, int(respondent.answers[i])) for i in prior_items
    )


def _anchors(scale: LikertScale) -> tuple[str, str]:
    return scale.anchors or ("lowest", "highest")


def _render_context(text: str, personal: bool) -> str:
    opener = "You are the following survey respondent." if personal else "You are a survey respondent."
    return f"{opener} {text}".strip()


def _render_demographics(pairs) -> str:
    lines = ["About you:"]
    for name, value in pairs:
        lines.append(f"- {_humanize(name)}: {NOT_PROVIDED if value is None else value}")
    return "\n".join(lines)


def _render_prior_qa(answers, scale: LikertScale) -> str:
    lo, hi = _anchors(scale)
    lines = [f"Your earlier answers in this survey ({scale.min} = {lo}, {scale.max} = {hi}):"]
    for a in answers:
        lines.append(f'- "{a.text}" Your answer: {a.answer}')
    return "\n".join(lines)


def _render_questions(questions) -> str:
    lines = ["Questions:"]
    lines += [f"Q{k}. {q.text}" for k, q in enumerate(questions, start=1)]
    return "\n".join(lines)


def format_answers(values: Sequence[int]) -> str:
    return "[" + ", ".join(str(int(v)) for v in values) + "]"


def build_prompt(approach, respondent: Respondent, spec: SurveySpec, target_items: Sequence[str],
                 persona: PersonaText | None = None, prior_items: Sequence[str] | None = None,
                 template: Template | None = None) -> PromptBundle:
    """Render the answering prompt for one respondent under ``approach``.

    ``prior_items`` defaults to every spec item not in ``target_items``.
    """
    approach = Approach(approach)
    if approach is Approach.MIRROR and persona is None:
        raise PromptError("the mirror approach needs a persona")
    if approach is not Approach.MIRROR and persona is not None:
        raise PromptError(f"a persona was supplied for the {approach.value} approach")
    if persona is not None and persona.respondent_id != respondent.id:
        raise PromptError(f"persona belongs to {persona.respondent_id!r}, not {respondent.id!r}")
    template = template or load_template("respondent")
    target_items = list(target_items)
    if not target_items:
        raise PromptError("no target questions")
    if prior_items is None:
        prior_items = [i for i in spec.item_ids if i not in set(target_items)]
    flags = APPROACH_INPUTS[approach]
    questions = tuple(Question(i, spec.latent_of(i), spec.item(i).text) for i in target_items)
    ctx = PromptContext(
        survey_context=spec.context or "Please answer the survey questions below.",
        questions=questions,
        scale=spec.scale,
        demographics=_demographic_pairs(respondent, spec) if flags["demographics"] else None,
        prior_qa=_prior_answers(respondent, spec, prior_items) if flags["prior_qa"] else None,
        persona=persona.text.strip() if flags["persona"] else None,
    )
    lo, hi = _anchors(spec.scale)
    text = template.render({
        "context": _render_context(ctx.survey_context, approach is not Approach.BASELINE),
        "demographics": _render_demographics(ctx.demographics) if ctx.demographics is not None else "",
        "prior_qa": _render_prior_qa(ctx.prior_qa, spec.scale) if ctx.prior_qa is not None else "",
        "persona": f"Your persona:\n{ctx.persona}" if ctx.persona is not None else "",
        "questions": _render_questions(questions),
        "scale_min": spec.scale.min,
        "scale_max": spec.scale.max,
        "anchor_min": lo,
        "anchor_max": hi,
        "n_questions": len(questions),
        "example": format_answers([round(spec.scale.midpoint)] * len(questions)),
    })
    return PromptBundle(approach, respondent.id, text, ctx, template.version)


_BLOCK = re.compile(r"\[([^\[\]]*)\]")
_INT_LIST = re.compile(r"^\s*[-+]?\d+(\s*,\s*[-+]?\d+)*\s*,?\s*$")


def parse_likert_reply(text: str, n_questions: int, scale: LikertScale) -> list[int]:
    """Extract the bracketed integer answer list from a model reply.

    The last bracketed integer list in the reply is taken as the answer
    block. Raises :class:`NoAnswerBlockError`, :class:`AnswerCountError` or
    :class:`AnswerRangeError`.
    """
    if n_questions < 1:
        raise ValueError("n_questions must be positive")
    blocks = [m.group(1) for m in _BLOCK.finditer(text or "") if _INT_LIST.match(m.group(1))]
    if not blocks:
        raise NoAnswerBlockError("no bracketed integer list in reply")
    values = [int(tok) for tok in blocks[-1].split(",") if tok.strip()]
    if len(values) != n_questions:
        raise AnswerCountError(n_questions, len(values))
    for pos, v in enumerate(values, start=1):
        if not scale.contains(v):
            raise AnswerRangeError(pos, v, scale)
    return values


def format_reminder(error: ReplyParseError, n_questions: int, scale: LikertScale) -> str:
    example = format_answers([round(scale.midpoint)] * n_questions)
    return (f"\nYour previous reply could not be used ({error}). Reply only with a bracketed list of "
            f"{n_questions} integers between {scale.min} and {scale.max}, for example {example}.\n")


# --------------------------------------------------------------------------
# personas


def persona_fingerprint(respondent: Respondent, prior_items: Sequence[str], template_version: str,
                        backend: str) -> str:
    doc = {
        "demographics": {k: respondent.demographics[k] for k in sorted(respondent.demographics)},
        "prior_answers": [[i, int(respondent.answers[i])] for i in prior_items],
        "template_version": template_version,
        "backend": backend,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_persona_request(respondent: Respondent, spec: SurveySpec, prior_items: Sequence[str], model: str,
                          template: Template | None = None, temperature: float = 0.0) -> CompletionRequest:
    template = template or load_template("persona")
    answers = _prior_answers(respondent, spec, prior_items)
    latents = [n for n in spec.latent_names if any(a.latent == n for a in answers)]
    topics = tuple((n, spec.latent(n).display_name) for n in latents)
    ctx = PersonaContext(respondent.id, spec.context, _demographic_pairs(respondent, spec), answers,
                         spec.scale, topics)
    text = template.render({
        "context": _render_context(spec.context, True),
        "demographics": _render_demographics(ctx.demographics),
        "prior_qa": _render_prior_qa(answers, spec.scale),
        "topics": "; ".join(label for _, label in topics),
    })
    return CompletionRequest(model=model, prompt=text, temperature=temperature,
                             tag=RequestTag(respondent.id, "persona", template.version), context=ctx)


def generate_persona(respondent: Respondent, spec: SurveySpec, prior_items: Sequence[str], client,
                     template: Template | None = None) -> PersonaText:
    """Ask ``client`` for a second-person sketch of ``respondent``.

    Empty replies are retried up to three times.
    """
    template = template or load_template("persona")
    request = build_persona_request(respondent, spec, prior_items, client.model, template,
                                    getattr(client, "temperature", 0.0))
    fingerprint = persona_fingerprint(respondent, prior_items, template.version, client.identity)
    for attempt in range(MAX_EMPTY_RETRIES + 1):
        reply = client.complete(request)
        if reply and reply.strip():
            return PersonaText(respondent.id, reply.strip(), fingerprint, template.version, client.identity)
        request = request.with_prompt(request.prompt + "\nYour previous reply was empty. Write the sketch now.\n")
    raise PersonaGenerationError(f"empty persona reply for {respondent.id!r} after {MAX_EMPTY_RETRIES} retries")
