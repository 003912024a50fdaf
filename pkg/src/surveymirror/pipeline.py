"""End-to-end study runs: generate responses per approach, fit PLS-SEM on human
and generated data, compare distributions and write report tables."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .llm_client import HttpBackend, LLMClient, RequestTag, ResponseCache
from .metrics import DistributionReport, compare_distributions, default_grid, kde_curve
from .plssem import PlsError, PlsOptions, PlsResult, fit
from .prompting import (
    TEMPLATE_VERSION,
    Approach,
    PersonaText,
    ReplyParseError,
    build_prompt,
    format_reminder,
    generate_persona,
    load_template,
    parse_likert_reply,
)
from .simulated import SimulatedBackend, SimulatedRespondentConfig
from .survey import (
    BUNDLED_STUDIES,
    Respondent,
    ResponseMatrix,
    SurveySpec,
    load_responses,
    load_study_spec,
    split_items,
    write_responses,
)

__all__ = [
    "ApproachResult",
    "GenerationResult",
    "ReportBundle",
    "StudyConfig",
    "StudyRunError",
    "build_client",
    "emit_report",
    "generate_personas",
    "generate_responses",
    "run_study",
]

log = logging.getLogger(__name__)

MAX_FORMAT_RETRIES = 3
DEGRADED_FAILURE_RATE = 0.10


class StudyRunError(RuntimeError):
    def __init__(self, message, manifest):
        super().__init__(message)
        self.manifest = manifest


@dataclass
class StudyConfig:
    spec: str
    responses: str
    targets: list[str] = field(default_factory=list)
    approaches: list[str] = field(default_factory=lambda: [a.value for a in Approach])
    bootstrap: int = 5000
    seed: int = 0
    backend: str = "simulated"
    backend_settings: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "markdown"
    kde_bandwidth: float | None = None
    cache_dir: str | None = None
    parallelism: int = 8
    workers: int = 1
    temperature: float = 0.0
    inner_scheme: str = "centroid"

    def __post_init__(self):
        if self.bootstrap < 2:
            raise ValueError("bootstrap must be >= 2")
        if not self.approaches:
            raise ValueError("at least one approach is required")
        self.approaches = [a.value for a in Approach.ordered(self.approaches)]
        if self.backend not in ("simulated", "http"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.format not in ("markdown", "csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.parallelism < 1 or self.workers < 1:
            raise ValueError("parallelism and workers must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "StudyConfig":
        doc = dict(doc)
        if base_dir is not None:
            for key in ("responses", "out", "cache_dir", "spec"):
                value = doc.get(key)
                if value and not Path(value).is_absolute() and (key != "spec" or value not in BUNDLED_STUDIES):
                    doc[key] = str(Path(base_dir) / value)
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text("utf-8")), base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)


def build_client(config: StudyConfig) -> LLMClient:
    settings = dict(config.backend_settings)
    if config.backend == "simulated":
        backend = SimulatedBackend(SimulatedRespondentConfig(**settings))
    else:
        if "model" not in settings:
            raise ValueError("the http backend needs backend_settings.model")
        backend = HttpBackend(**settings)
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return LLMClient(backend, cache, temperature=config.temperature)


# --------------------------------------------------------------------------
# generation


@dataclass
class GenerationResult:
    approach: Approach
    matrix: ResponseMatrix | None  # human prior answers + generated target answers
    failed: list[str]
    personas: dict[str, PersonaText] = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        total = len(self.failed) + (len(self.matrix) if self.matrix is not None else 0)
        return len(self.failed) / total if total else 0.0


def generate_personas(human: ResponseMatrix, prior_items: Sequence[str], client: LLMClient,
                      parallelism: int = 8) -> dict[str, PersonaText]:
    spec = human.spec
    template = load_template("persona")

    def one(r: Respondent):
        return r.id, generate_persona(r, spec, prior_items, client, template)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return dict(pool.map(one, human.respondents))


def _ask(bundle, n_questions: int, spec: SurveySpec, client: LLMClient):
    tag = RequestTag(bundle.respondent_id, bundle.approach.value, bundle.template_version)
    prompt = bundle.rendered_text
    for _ in range(MAX_FORMAT_RETRIES + 1):
        reply = client.complete(client.request(prompt, tag, bundle.context))
        try:
            return parse_likert_reply(reply, n_questions, spec.scale)
        except ReplyParseError as exc:
            prompt = bundle.rendered_text + format_reminder(exc, n_questions, spec.scale)
    return None


def generate_responses(human: ResponseMatrix, target_items: Sequence[str], approach, client: LLMClient,
                       personas: dict[str, PersonaText] | None = None, parallelism: int = 8) -> GenerationResult:
    """Ask the backend for every respondent's target answers under ``approach``.

    Respondents whose replies still fail to parse after three format
    reminders are left out and listed in ``failed``.
    """
    approach = Approach(approach)
    spec = human.spec
    target_items = list(target_items)
    prior_items = [i for i in spec.item_ids if i not in set(target_items)]
    if approach is Approach.MIRROR and personas is None:
        personas = generate_personas(human, prior_items, client, parallelism)
    template = load_template("respondent")

    def one(r: Respondent):
        persona = personas[r.id] if approach is Approach.MIRROR else None
        bundle = build_prompt(approach, r, spec, target_items, persona, prior_items, template)
        return r, _ask(bundle, len(target_items), spec, client)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(one, human.respondents))
    rows, failed = [], []
    for r, answers in results:
        if answers is None:
            failed.append(r.id)
        else:
            rows.append(r.with_answers(dict(zip(target_items, answers))))
    matrix = ResponseMatrix(spec, tuple(rows), human.items) if rows else None
    return GenerationResult(approach, matrix, failed, personas or {})


# --------------------------------------------------------------------------
# study runs


@dataclass
class ApproachResult:
    approach: Approach
    generated: ResponseMatrix | None
    pls: PlsResult | None
    distributions: DistributionReport | None
    failed: list[str]
    degraded: bool
    personas_generated: int = 0
    pls_error: str | None = None


@dataclass
class ReportBundle:
    spec: SurveySpec
    target_items: list[str]
    prior_items: list[str]
    human: PlsResult
    approaches: dict[Approach, ApproachResult]
    manifest: dict
    human_data: ResponseMatrix | None = None
    kde_bandwidth: float | None = None


def run_study(config: StudyConfig, client: LLMClient | None = None) -> ReportBundle:
    """Run every configured approach against the human responses.

    The human model is fitted once, with the same bootstrap seed schedule as
    each generated data set. A component error aborts the run; the partial
    manifest is attached to the raised :class:`StudyRunError` and written
    to ``manifest.partial.json`` when an output directory is configured.
    """
    client = client or build_client(config)
    manifest: dict = {
        "study": None,
        "seed": config.seed,
        "bootstrap": config.bootstrap,
        "approaches": list(config.approaches),
        "template_versions": {"respondent": TEMPLATE_VERSION, "persona": TEMPLATE_VERSION},
        "backend": client.identity,
        "completed": [],
    }
    try:
        spec = load_study_spec(config.spec)
        manifest["study"] = spec.name
        human = load_responses(Path(config.responses), spec)
        targets = config.targets or list(spec.outcome_latents)
        prior_items, target_items = split_items(spec, targets)
        manifest.update(targets=targets, prior_items=prior_items, target_items=target_items,
                        n_respondents=len(human))
        options = PlsOptions(inner_scheme=config.inner_scheme)
        human_fit = fit(human, spec, options, B=config.bootstrap, seed=config.seed, workers=config.workers)
        manifest["completed"].append("human_fit")
        results = {}
        for approach in Approach.ordered(config.approaches):
            results[approach] = _run_approach(approach, human, spec, target_items, client, config, options)
            manifest["completed"].append(approach.value)
    except Exception as exc:
        manifest.update(client.stats(), error=f"{type(exc).__name__}: {exc}")
        if config.out:
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "manifest.partial.json").write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
        raise StudyRunError(f"study run aborted: {exc}", manifest) from exc
    del manifest["completed"]
    manifest.update(
        client.stats(),
        failed_respondents={a.value: r.failed for a, r in results.items()},
        degraded=[a.value for a, r in results.items() if r.degraded],
        personas_generated=sum(r.personas_generated for r in results.values()),
        pls_errors={a.value: r.pls_error for a, r in results.items() if r.pls_error},
    )
    return ReportBundle(spec, target_items, prior_items, human_fit, results, manifest, human, config.kde_bandwidth)


def _run_approach(approach, human, spec, target_items, client, config, options) -> ApproachResult:
    gen = generate_responses(human, target_items, approach, client, parallelism=config.parallelism)
    degraded = gen.failure_rate > DEGRADED_FAILURE_RATE
    if gen.matrix is None:
        return ApproachResult(approach, None, None, None, gen.failed, True, len(gen.personas),
                              "no respondent produced a usable reply")
    pls, pls_error = None, None
    try:
        pls = fit(gen.matrix, spec, options, B=config.bootstrap, seed=config.seed, workers=config.workers)
    except PlsError as exc:
        pls_error = str(exc)
        log.warning("%s: PLS fit on generated data failed: %s", approach.value, exc)
    dist = compare_distributions(human, gen.matrix, target_items, bandwidth=config.kde_bandwidth)
    return ApproachResult(approach, gen.matrix, pls, dist, gen.failed, degraded, len(gen.personas), pls_error)


# --------------------------------------------------------------------------
# reports


def _column_label(result: ApproachResult) -> str:
    return result.approach.label + (" (degraded)" if result.degraded else "")


def path_table(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    results = list(bundle.approaches.values())
    header = ["Path", "Human"] + [_column_label(r) for r in results]
    rows = []
    for path in bundle.human.paths:
        row = [f"{path[0]} -> {path[1]}", bundle.human.cell(path)]
        row += [r.pls.cell(path) if r.pls is not None else "n/a" for r in results]
        rows.append(row)
    return header, rows


def _item_table(bundle: ReportBundle, metric: str) -> tuple[list[str], list[list[str]]]:
    results = list(bundle.approaches.values())
    header = ["Item"] + [_column_label(r) for r in results]
    rows = []
    for item in bundle.target_items:
        row = [item]
        for r in results:
            row.append(f"{getattr(r.distributions, metric)[item]:.4f}" if r.distributions else "n/a")
        rows.append(row)
    mean_attr = "mean_jsd" if metric == "jsd" else "mean_wasserstein"
    rows.append(["Mean"] + [f"{getattr(r.distributions, mean_attr):.4f}" if r.distributions else "n/a"
                            for r in results])
    return header, rows


def consistency_table(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    results = list(bundle.approaches.values())
    header = [""] + [_column_label(r) for r in results]
    row = ["Mean"] + [f"{r.distributions.consistency:.2f}%" if r.distributions else "n/a" for r in results]
    return header, [row]


def markdown_table(header, rows, notes=()) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    if notes:
        lines.append("")
        lines += list(notes)
    return "\n".join(lines) + "\n"


def csv_table(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


_PATH_NOTES = (
    "Standard deviation in parentheses. * p < 0.05, ** p < 0.01, *** p < 0.001 "
    "(two-sided, normal approximation to coefficient / bootstrap SD).",
)
_MEAN_NOTE = ("Mean weights every item equally.",)
_CONSISTENCY_NOTE = ("Share of respondent-item cells whose answers fall in the same bin "
                     "(below, at or above the scale midpoint), pooled over cells.",)


def _bundle_dict(bundle: ReportBundle) -> dict:
    return {
        "study": bundle.spec.name,
        "target_items": bundle.target_items,
        "human": bundle.human.to_dict(),
        "approaches": {
            a.value: {
                "label": r.approach.label,
                "degraded": r.degraded,
                "failed": r.failed,
                "pls": r.pls.to_dict() if r.pls else None,
                "pls_error": r.pls_error,
                "distributions": r.distributions.to_dict() if r.distributions else None,
            }
            for a, r in bundle.approaches.items()
        },
        "manifest": bundle.manifest,
    }


def emit_report(bundle: ReportBundle, format: str, out) -> list[Path]:
    """Write report tables, KDE curves, generated responses and the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write(name: str, text: str):
        p = out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        written.append(p)

    tables = {
        "path_coefficients": (path_table(bundle), _PATH_NOTES),
        "jsd": (_item_table(bundle, "jsd"), _MEAN_NOTE),
        "wasserstein": (_item_table(bundle, "wasserstein"), _MEAN_NOTE),
        "consistency": (consistency_table(bundle), _CONSISTENCY_NOTE),
    }
    if format == "markdown":
        for name, ((header, rows), notes) in tables.items():
            write(f"{name}.md", markdown_table(header, rows, notes))
    elif format == "csv":
        for name, ((header, rows), _) in tables.items():
            write(f"{name}.csv", csv_table(header, rows))
    elif format == "json":
        write("report.json", json.dumps(_bundle_dict(bundle), indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {format!r}")

    if bundle.human_data is not None:
        grid = default_grid(bundle.spec.scale)
        for item in bundle.target_items:
            curve = kde_curve(bundle.human_data.column(item), bundle.kde_bandwidth, grid)
            write(f"kde/human__{item}.csv", csv_table(["x", "density"], _curve_rows(curve)))
    for a, r in bundle.approaches.items():
        if r.distributions is not None:
            for item in bundle.target_items:
                write(f"kde/{a.value}__{item}.csv", csv_table(["x", "density"], _curve_rows(r.distributions.kde_llm[item])))
        if r.generated is not None:
            write(f"generated/{a.value}.csv", write_responses(r.generated))
    write("manifest.json", json.dumps(bundle.manifest, indent=2) + "\n")
    return written


def _curve_rows(curve):
    return [[f"{x:.4f}", f"{d:.10f}"] for x, d in curve]
