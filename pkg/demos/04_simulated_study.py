"""
A full study run, offline
=========================

Generate a synthetic human sample, ask the simulated respondent under every
regime and print the report tables. Nothing leaves the machine.
"""

import tempfile
from pathlib import Path

from surveymirror.pipeline import StudyConfig, emit_report, run_study
from surveymirror.survey import bundled_spec, write_responses
from surveymirror.synthetic import generate_synthetic_study

structure = {"pleasure": 0.5, "credibility": 0.45, "economic": 0.4, "intrusiveness": -0.35, "clutter": -0.3}
spec = bundled_spec("study1")
work = Path(tempfile.mkdtemp(prefix="surveymirror-"))
human_csv = work / "human.csv"
write_responses(generate_synthetic_study(spec, {f"{k}->attitude": v for k, v in structure.items()},
                                         n=400, seed=0), human_csv)

# The simulated respondent weighs prior-topic averages by ``rule``.
config = StudyConfig(
    spec="study1",
    responses=str(human_csv),
    bootstrap=200,
    seed=0,
    backend_settings={"noise": 0.3, "seed": 0, "rule": {"attitude": structure}},
    cache_dir=str(work / "cache"),
)
bundle = run_study(config)

for path in emit_report(bundle, "markdown", work / "report"):
    if path.suffix == ".md":
        print(f"## {path.stem}\n")
        print(path.read_text())
print("report written to", work / "report")
