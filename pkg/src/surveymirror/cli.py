"""Command-line entry point: ``surveymirror <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .llm_client import HttpBackend, LLMClient, ResponseCache
from .metrics import compare_distributions
from .pipeline import (
    StudyConfig,
    StudyRunError,
    csv_table,
    markdown_table,
    emit_report,
    generate_personas,
    generate_responses,
    run_study,
)
from .plssem import PlsOptions, fit
from .prompting import Approach
from .simulated import SimulatedBackend, SimulatedRespondentConfig
from .survey import load_responses, load_study_spec, split_items, write_responses
from .synthetic import generate_synthetic_study

log = logging.getLogger("surveymirror")


def _targets(value, spec):
    if value:
        return [t.strip() for t in value.split(",") if t.strip()]
    return list(spec.outcome_latents)


def _client(args) -> LLMClient:
    if args.backend == "http":
        if not args.model:
            raise SystemExit("--model is required with --backend http")
        backend = HttpBackend(args.model, base_url=args.base_url)
    else:
        rule = json.loads(Path(args.rule).read_text("utf-8")) if args.rule else None
        backend = SimulatedBackend(SimulatedRespondentConfig(noise=args.noise, seed=args.sim_seed, rule=rule))
    cache = ResponseCache(args.cache) if args.cache else None
    return LLMClient(backend, cache, temperature=args.temperature)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fit(args):
    spec = load_study_spec(args.spec)
    data = load_responses(Path(args.responses), spec)
    result = fit(data, spec, PlsOptions(inner_scheme=args.scheme), B=args.bootstrap, seed=args.seed,
                 workers=args.workers)
    _emit(result.to_json() + "\n" if args.format == "json" else result.to_text(), args.out)


def cmd_generate(args):
    spec = load_study_spec(args.spec)
    human = load_responses(Path(args.responses), spec)
    _, target_items = split_items(spec, _targets(args.targets, spec))
    client = _client(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for approach in Approach.ordered(args.approach or [a.value for a in Approach]):
        gen = generate_responses(human, target_items, approach, client, parallelism=args.parallelism)
        if gen.matrix is not None:
            write_responses(gen.matrix, out / f"{approach.value}.csv")
        summary[approach.value] = {"respondents": len(gen.matrix) if gen.matrix else 0, "failed": gen.failed}
    summary.update(client.stats())
    print(json.dumps(summary, indent=2))


def cmd_metrics(args):
    spec = load_study_spec(args.spec)
    _, target_items = split_items(spec, _targets(args.targets, spec))
    human = load_responses(Path(args.responses), spec)
    generated = load_responses(Path(args.generated), spec, items=target_items)
    report = compare_distributions(human, generated, target_items, bandwidth=args.bandwidth)
    if args.format == "json":
        _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
        return
    header = ["Item", "JSD", "Wasserstein"]
    rows = [[i, f"{report.jsd[i]:.4f}", f"{report.wasserstein[i]:.4f}"] for i in target_items]
    rows.append(["Mean", f"{report.mean_jsd:.4f}", f"{report.mean_wasserstein:.4f}"])
    rows.append(["Consistency", f"{report.consistency:.2f}%", ""])
    _emit(csv_table(header, rows) if args.format == "csv" else markdown_table(header, rows), args.out)


def cmd_persona(args):
    spec = load_study_spec(args.spec)
    human = load_responses(Path(args.responses), spec)
    prior_items, _ = split_items(spec, _targets(args.targets, spec))
    if args.respondent:
        missing = sorted(set(args.respondent) - {r.id for r in human.respondents})
        if missing:
            sys.exit(f"surveymirror persona: unknown respondent id(s): {', '.join(missing)}")
        human = human.subset(args.respondent)
    personas = generate_personas(human, prior_items, _client(args), args.parallelism)
    doc = [{"respondent_id": p.respondent_id, "text": p.text, "fingerprint": p.fingerprint,
            "template_version": p.template_version, "backend": p.backend} for p in personas.values()]
    _emit(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", args.out)


def cmd_run(args):
    if args.config:
        config = StudyConfig.from_json(args.config)
        overrides = {}
    else:
        if not (args.spec and args.responses):
            raise SystemExit("run needs --config or both --spec and --responses")
        config = StudyConfig(spec=args.spec, responses=args.responses)
        overrides = {}
        if args.backend == "http":
            overrides["backend_settings"] = {"model": args.model, "base_url": args.base_url}
        else:
            overrides["backend_settings"] = {"noise": args.noise, "seed": args.sim_seed}
            if args.rule:
                overrides["backend_settings"]["rule"] = json.loads(Path(args.rule).read_text("utf-8"))
    for key, value in (("targets", args.targets and _targets(args.targets, None)),
                       ("approaches", args.approach), ("bootstrap", args.bootstrap), ("seed", args.seed),
                       ("backend", args.backend if not args.config else None), ("out", args.out),
                       ("format", args.format), ("cache_dir", args.cache), ("workers", args.workers)):
        if value is not None:
            overrides[key] = value
    config = StudyConfig(**{**config.to_dict(), **overrides})
    if not config.out:
        raise SystemExit("run needs an output directory (--out or config 'out')")
    try:
        bundle = run_study(config)
    except StudyRunError as exc:
        raise SystemExit(str(exc)) from exc
    for p in emit_report(bundle, config.format, config.out):
        print(p)


def cmd_synth(args):
    spec = load_study_spec(args.spec)
    betas = {}
    for part in args.betas.split(","):
        key, _, value = part.partition("=")
        betas[key.strip()] = float(value)
    matrix = generate_synthetic_study(spec, betas, args.loading, args.noise_sd, args.n, args.seed)
    _emit(write_responses(matrix), args.out)


def _common(p, *, responses=True, targets=False, backend=False, required=True,
            out_help="output path (default: stdout)"):
    p.add_argument("--spec", required=required,
                   help="study-spec JSON path or bundled name (study1, study2_case1, study2_case2)")
    if responses:
        p.add_argument("--responses", required=required, help="response CSV")
    if targets:
        p.add_argument("--targets", help="comma-separated target latents (default: outcome latents)")
    if backend:
        p.add_argument("--backend", choices=("simulated", "http"), default="simulated" if required else None)
        p.add_argument("--model", help="model identifier for the http backend")
        p.add_argument("--base-url", default="https://api.openai.com/v1")
        p.add_argument("--noise", type=float, default=0.3, help="simulated respondent noise scale")
        p.add_argument("--sim-seed", type=int, default=0, help="simulated respondent seed")
        p.add_argument("--rule", help="JSON file: target latent -> {prior latent: weight}")
        p.add_argument("--temperature", type=float, default=0.0)
        p.add_argument("--cache", help="response cache directory")
        p.add_argument("--parallelism", type=int, default=8)
    p.add_argument("--out", help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surveymirror", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="PLS-SEM fit with bootstrap SDs")
    _common(p)
    p.add_argument("--bootstrap", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=("centroid", "factorial", "path"), default="centroid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", help="generate LLM responses per approach")
    _common(p, targets=True, backend=True, out_help="output directory for <approach>.csv")
    p.set_defaults(out="generated")
    p.add_argument("--approach", action="append", choices=[a.value for a in Approach])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("metrics", help="compare generated responses with human responses")
    _common(p, targets=True)
    p.add_argument("--generated", required=True, help="generated response CSV")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("persona", help="generate personas from demographics and prior answers")
    _common(p, targets=True, backend=True)
    p.add_argument("--respondent", action="append", help="only this respondent id (repeatable)")
    p.set_defaults(func=cmd_persona)

    p = sub.add_parser("run", help="full study run")
    p.add_argument("--config", help="StudyConfig JSON file")
    _common(p, targets=True, backend=True, required=False, out_help="report directory")
    p.add_argument("--approach", action="append", choices=[a.value for a in Approach])
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("markdown", "csv", "json"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="planted-model synthetic responses")
    _common(p, responses=False)
    p.add_argument("--betas", required=True, help='comma-separated "source->target=beta"')
    p.add_argument("--loading", type=float, default=0.9)
    p.add_argument("--noise-sd", type=float, default=0.6)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
