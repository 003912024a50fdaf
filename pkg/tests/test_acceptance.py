"""Acceptance criteria 1-7. Run with ``pytest tests/test_acceptance.py``; the
terminal summary lists one PASS/FAIL/SKIP line per criterion."""

import json
import os
import re
import time
from pathlib import Path

import numpy as np
import pytest

from surveymirror.cli import main
from surveymirror.llm_client import LLMClient
from surveymirror.metrics import LikertDistribution, consistency, jensen_shannon, likert_histogram, wasserstein
from surveymirror.pipeline import StudyConfig, run_study
from surveymirror.plssem import bootstrap, estimate_scores, fit, path_coefficients
from surveymirror.prompting import APPROACH_INPUTS, Approach, build_prompt, generate_persona
from surveymirror.simulated import SimulatedBackend
from surveymirror.survey import LikertScale, bundled_spec, load_responses, split_items, write_responses
from surveymirror.synthetic import discretize, generate_synthetic_study, simulate_study

from helpers import matrix, tiny_spec, two_path_spec

S7 = LikertScale(1, 7)
PLANTED = {"X1->Y": 0.5, "X2->Y": 0.3}
KEYS = [("X1", "Y"), ("X2", "Y")]


def criterion(number, title):
    return pytest.mark.acceptance(number, title)


# ---------------------------------------------------------------- 1

C1 = criterion(1, "PLS-SEM recovery of planted paths, B = 500 under 60 s")


@pytest.fixture(scope="module")
def planted_sample():
    # eight indicators per block; see the README on indicator count and attenuation
    spec = two_path_spec(8)
    return spec, simulate_study(spec, PLANTED, loadings=0.9, noise_sd=0.6, n=2000, seed=0)


def _latent_ols(sample):
    L = (sample.latents - sample.latents.mean(0)) / sample.latents.std(0, ddof=1)
    beta, *_ = np.linalg.lstsq(L[:, :2], L[:, 2], rcond=None)
    return beta


@C1
@pytest.mark.parametrize("kind, tol", [("continuous", 0.05), ("discretized", 0.10)])
def test_c1_planted_recovery(planted_sample, kind, tol, detail):
    spec, sample = planted_sample
    data = sample.indicators if kind == "continuous" else discretize(sample.indicators, spec)
    t0 = time.perf_counter()
    res = fit(data, spec, B=500, seed=0)
    elapsed = time.perf_counter() - t0
    oracle = _latent_ols(sample)
    est = [res.coefficients[k] for k in KEYS]
    detail(f"estimates {est[0]:.4f}, {est[1]:.4f}; latent OLS {oracle[0]:.4f}, {oracle[1]:.4f}; "
           f"planted 0.5, 0.3; B=500 in {elapsed:.1f}s")
    for k, planted in enumerate((0.5, 0.3)):
        assert abs(est[k] - planted) <= tol
        assert abs(est[k] - oracle[k]) <= tol
    assert res.n_failed == 0
    assert elapsed < 60


# ---------------------------------------------------------------- 2

C2 = criterion(2, "metric exactness")


@C2
def test_c2_metric_values(detail):
    two = LikertScale(1, 2)
    jsd = jensen_shannon(LikertDistribution.from_probabilities([0.5, 0.5], two),
                         LikertDistribution.from_probabilities([1.0, 0.0], two))
    d1, d7 = LikertDistribution.point_mass(1, S7), LikertDistribution.point_mass(7, S7)
    w_unif = wasserstein(likert_histogram(range(1, 8), S7), LikertDistribution.point_mass(4, S7))
    spec = tiny_spec(2)
    cons = consistency(matrix(spec, [(1, 4), (7, 7)]), matrix(spec, [(2, 5), (6, 4)]))
    detail(f"JSD {jsd:.6f}; W(uniform, d4) {w_unif:.12f}; consistency {cons}%")
    assert abs(jsd - 0.311278) <= 1e-5
    assert jensen_shannon(d1, d7) == 1.0
    assert wasserstein(d1, d7) == 6.0
    assert abs(w_unif - 12 / 7) <= 1e-9
    assert cons == 50.0


# ---------------------------------------------------------------- 3

C3 = criterion(3, "invariance suite")


@C3
def test_c3_indicator_scale_invariance(detail):
    spec = two_path_spec(4)
    X = simulate_study(spec, PLANTED, n=500, seed=1).indicators
    factors = np.random.default_rng(0).uniform(0.01, 100, X.shape[1])
    a = path_coefficients(estimate_scores(X, spec), spec).coefficients
    b = path_coefficients(estimate_scores(X * factors, spec), spec).coefficients
    worst = max(abs(a[k] - b[k]) for k in KEYS)
    detail(f"max coefficient change {worst:.2e}")
    assert worst <= 1e-9


@C3
def test_c3_bootstrap_determinism(detail):
    spec = two_path_spec(4)
    X = discretize(simulate_study(spec, PLANTED, n=400, seed=2).indicators, spec)
    first = bootstrap(X, spec, B=200, seed=7, workers=1)
    second = bootstrap(X, spec, B=200, seed=7, workers=1)
    threaded = bootstrap(X, spec, B=200, seed=7, workers=8)
    detail("SDs " + ", ".join(f"{first.sds[k]:.6f}" for k in KEYS))
    assert first.sds == second.sds == threaded.sds
    assert first.marks == second.marks == threaded.marks
    assert first.replicates.tobytes() == second.replicates.tobytes() == threaded.replicates.tobytes()


@C3
def test_c3_metric_symmetry(detail):
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        p, q = rng.dirichlet(np.full(7, 0.5), size=2)
        # some pairs with empty levels
        p[rng.random(7) < 0.2] = 0
        if p.sum() == 0:
            p[0] = 1
        P = LikertDistribution.from_probabilities(p / p.sum())
        Q = LikertDistribution.from_probabilities(q)
        assert jensen_shannon(P, Q) == jensen_shannon(Q, P)
        assert wasserstein(P, Q) == wasserstein(Q, P)
    detail("1000 random pairs, exact equality")


# ---------------------------------------------------------------- 4

C4 = criterion(4, "information-regime ingredient contract")


@C4
@pytest.mark.parametrize("study, targets", [("study1", {"attitude"}), ("study2_case2", {"TRUST", "SAT", "LOY"})])
def test_c4_regime_flags_and_mirror_absence(study, targets, detail):
    spec = bundled_spec(study)
    betas = {f"{p.source}->{p.target}": 0.2 for p in spec.paths}
    people = generate_synthetic_study(spec, betas, n=100, seed=11).respondents
    prior, target = split_items(spec, targets)
    client = LLMClient(SimulatedBackend())
    names = [form for n in spec.demographic_names for form in {n, n.replace("_", " ")}]
    prior_texts = [spec.item(i).text for i in prior]
    checked = 0
    for r in people:
        persona = generate_persona(r, spec, prior, client)
        for approach in Approach:
            b = build_prompt(approach, r, spec, target, persona=persona if approach is Approach.MIRROR else None)
            assert b.flags() == APPROACH_INPUTS[approach]
            checked += 1
            if approach is Approach.MIRROR:
                for name in names:
                    assert not re.search(rf"\b{re.escape(name)}\b", b.rendered_text, re.IGNORECASE), name
                for text in prior_texts:
                    assert text not in b.rendered_text
    detail(f"{checked} bundles checked")


# ---------------------------------------------------------------- 5

C5 = criterion(5, "regime ordering with the simulated backend")
STRUCTURE = {"pleasure": 0.5, "credibility": 0.45, "economic": 0.4, "intrusiveness": -0.35, "clutter": -0.3}


@pytest.fixture(scope="module")
def qualitative_run(tmp_path_factory):
    path = tmp_path_factory.mktemp("c5") / "human.csv"
    spec = bundled_spec("study1")
    betas = {f"{k}->attitude": v for k, v in STRUCTURE.items()}
    write_responses(generate_synthetic_study(spec, betas, n=400, seed=0), path)
    cfg = StudyConfig(spec="study1", responses=str(path), approaches=["baseline", "demo", "omni"], bootstrap=200,
                      seed=0, backend_settings={"noise": 0.3, "seed": 0, "rule": {"attitude": STRUCTURE}})
    return run_study(cfg)


@C5
def test_c5_distribution_ordering(qualitative_run, detail):
    r = qualitative_run.approaches
    jsd = {a.value: r[a].distributions.mean_jsd for a in r}
    wd = {a.value: r[a].distributions.mean_wasserstein for a in r}
    detail("mean JSD " + ", ".join(f"{k} {v:.4f}" for k, v in jsd.items())
           + "; mean W " + ", ".join(f"{k} {v:.4f}" for k, v in wd.items()))
    assert jsd["omni"] < jsd["demo"] and jsd["omni"] < jsd["baseline"]
    assert wd["omni"] < wd["demo"] and wd["omni"] < wd["baseline"]


@C5
def test_c5_omni_paths_closer_than_baseline(qualitative_run, detail):
    human = qualitative_run.human.coefficients
    omni = qualitative_run.approaches[Approach.OMNI].pls
    base = qualitative_run.approaches[Approach.BASELINE].pls
    assert omni is not None and base is not None
    gaps = {p[0]: (abs(omni.coefficients[p] - human[p]), abs(base.coefficients[p] - human[p])) for p in human}
    detail("|omni-human| vs |baseline-human|: " + ", ".join(f"{k} {o:.3f}/{b:.3f}" for k, (o, b) in gaps.items()))
    assert all(o < b for o, b in gaps.values())


# ---------------------------------------------------------------- 6

C6 = criterion(6, "human-data replication (conditional)")
HUMAN_DATA = os.environ.get("SURVEYMIRROR_HUMAN_DATA")

STUDY1_HUMAN = {
    ("pleasure", "attitude"): (0.3359, "***"), ("credibility", "attitude"): (0.2559, "***"),
    ("economic", "attitude"): (0.2507, "***"), ("intrusiveness", "attitude"): (-0.1641, "***"),
    ("clutter", "attitude"): (-0.0695, "***"),
}
CASE1_HUMAN = {
    ("LIKE", "LOY"): (0.1623, "***"), ("COMP", "LOY"): (0.0157, ""),
    ("TRUST", "LOY"): (0.3973, "***"), ("SAT", "LOY"): (0.2197, "***"),
}
CASE2_HUMAN = {
    ("LIKE", "TRUST"): (0.3908, "***"), ("LIKE", "SAT"): (0.3596, "***"), ("LIKE", "LOY"): (0.1623, "***"),
    ("COMP", "TRUST"): (0.5037, "***"), ("COMP", "SAT"): (0.1616, "***"), ("COMP", "LOY"): (0.0157, ""),
    ("TRUST", "SAT"): (0.4432, "***"), ("TRUST", "LOY"): (0.3973, "***"), ("SAT", "LOY"): (0.2197, "***"),
}


@C6
@pytest.mark.skipif(not HUMAN_DATA, reason="waived: original survey datasets not available "
                                           "(set SURVEYMIRROR_HUMAN_DATA to a directory with study1.csv, study2.csv)")
@pytest.mark.parametrize("study, csv_name, B, expected", [
    ("study1", "study1.csv", 5000, STUDY1_HUMAN),
    ("study2_case1", "study2.csv", 10000, CASE1_HUMAN),
    ("study2_case2", "study2.csv", 10000, CASE2_HUMAN),
])
def test_c6_human_columns(study, csv_name, B, expected, detail):
    spec = bundled_spec(study)
    res = fit(load_responses(Path(HUMAN_DATA) / csv_name, spec), spec, B=B, seed=0)
    detail(", ".join(f"{s}->{t} {res.cell((s, t))}" for s, t in expected))
    for path, (value, mark) in expected.items():
        assert abs(res.coefficients[path] - value) <= 0.05
        assert np.sign(res.coefficients[path]) == np.sign(value)
        assert bool(res.marks[path]) == bool(mark)


# ---------------------------------------------------------------- 7

C7 = criterion(7, "end-to-end determinism with a warm cache")


@C7
def test_c7_run_twice_byte_identical(tmp_path, detail):
    human = tmp_path / "human.csv"
    betas = ",".join(f"{k}->attitude={v}" for k, v in STRUCTURE.items())
    main(["synth", "--spec", "study1", "--betas", betas, "--n", "150", "--seed", "3", "--out", str(human)])
    common = ["run", "--spec", "study1", "--responses", str(human), "--bootstrap", "50", "--seed", "0",
              "--backend", "simulated", "--noise", "0.3", "--cache", str(tmp_path / "cache")]
    main(common + ["--out", str(tmp_path / "cold")])
    snapshots = []
    for k in range(2):
        out = tmp_path / f"warm{k}"
        main(common + ["--out", str(out)])
        snapshots.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    detail(f"{len(snapshots[0])} files compared")
    assert snapshots[0].keys() == snapshots[1].keys()
    assert snapshots[0] == snapshots[1]
    assert json.loads(snapshots[0][Path("manifest.json")])["backend_calls"] == 0
