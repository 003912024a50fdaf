import json

import numpy as np
import pytest

from surveymirror.llm_client import LLMClient
from surveymirror.metrics import consistency
from surveymirror.pipeline import generate_responses
from surveymirror.prompting import PersonaContext, build_persona_request, build_prompt, generate_persona
from surveymirror.simulated import SimulatedBackend, SimulatedRespondentConfig, simulated_persona, simulated_respond
from surveymirror.survey import Respondent, bundled_spec, split_items
from surveymirror.synthetic import generate_synthetic_study

BETAS = {"pleasure->attitude": 0.5, "credibility->attitude": 0.4, "economic->attitude": 0.4,
         "intrusiveness->attitude": -0.3, "clutter->attitude": -0.2}


@pytest.fixture(scope="module")
def setting():
    spec = bundled_spec("study1")
    prior, target = split_items(spec, {"attitude"})
    human = generate_synthetic_study(spec, BETAS, n=200, seed=5)
    return spec, prior, target, human


def all_sixes(spec, prior):
    return Respondent("r6", {"age": 30, "gender": "female"}, {i: 6 for i in prior})


def test_identity_rule_noise_free(setting):
    spec, prior, target, _ = setting
    b = build_prompt("omni", all_sixes(spec, prior), spec, target)
    assert simulated_respond(b, None, SimulatedRespondentConfig()) == "[6, 6, 6, 6]"


def test_baseline_noise_free_is_midpoint(setting):
    spec, prior, target, human = setting
    for r in human.respondents[:10]:
        b = build_prompt("baseline", r, spec, target)
        assert simulated_respond(b, r, SimulatedRespondentConfig()) == "[4, 4, 4, 4]"


def test_demo_shift_is_fixed_per_profile(setting):
    spec, prior, target, human = setting
    cfg = SimulatedRespondentConfig(demographic_offset=2.0)
    r = human.respondents[0]
    twin = Respondent("other", r.demographics, r.answers)
    a = simulated_respond(build_prompt("demo", r, spec, target), r, cfg)
    # the respondent id is not in the prompt, so equal profiles answer alike
    assert a == simulated_respond(build_prompt("demo", twin, spec, target), twin, cfg)
    answers = {simulated_respond(build_prompt("demo", x, spec, target), x, cfg) for x in human.respondents}
    assert len(answers) > 1


def test_seeded_noise_is_reproducible(setting):
    spec, prior, target, human = setting
    r = human.respondents[1]
    b = build_prompt("omni", r, spec, target)
    cfg = SimulatedRespondentConfig(noise=0.5, seed=9)
    assert simulated_respond(b, r, cfg) == simulated_respond(b, r, cfg)
    replies = {simulated_respond(b, r, SimulatedRespondentConfig(noise=0.5, seed=s)) for s in range(20)}
    assert len(replies) > 1


def test_same_prompt_different_respondents_draw_independently(setting):
    spec, prior, target, human = setting
    cfg = SimulatedRespondentConfig(noise=0.8, seed=0)
    replies = {simulated_respond(build_prompt("baseline", r, spec, target), r, cfg) for r in human.respondents}
    assert len({build_prompt("baseline", r, spec, target).rendered_text for r in human.respondents}) == 1
    assert len(replies) > 1


def test_respondent_mismatch_rejected(setting):
    spec, prior, target, human = setting
    b = build_prompt("omni", human.respondents[0], spec, target)
    with pytest.raises(ValueError):
        simulated_respond(b, human.respondents[1], SimulatedRespondentConfig())


def test_rule_must_cover_targets(setting):
    spec, prior, target, human = setting
    b = build_prompt("omni", human.respondents[0], spec, target)
    with pytest.raises(ValueError, match="no entry"):
        simulated_respond(b, None, SimulatedRespondentConfig(rule={"other": {"pleasure": 1.0}}))
    with pytest.raises(ValueError):
        SimulatedRespondentConfig(rule={"attitude": {"pleasure": float("nan")}})
    with pytest.raises(ValueError):
        SimulatedRespondentConfig(noise=-1)


def test_persona_names_every_prior_factor(setting):
    spec, prior, target, human = setting
    req = build_persona_request(human.respondents[0], spec, prior, "m")
    assert isinstance(req.context, PersonaContext)
    text = simulated_persona(req.context)
    for name in ("pleasure", "credibility", "economic", "intrusiveness", "clutter"):
        assert f"({name})" in text
    assert text == simulated_persona(req.context)


def test_mirror_tracks_omni_within_half_point(setting):
    spec, prior, target, human = setting
    client = LLMClient(SimulatedBackend())
    for r in human.respondents[:30]:
        persona = generate_persona(r, spec, prior, client)
        m = simulated_respond(build_prompt("mirror", r, spec, target, persona=persona), r, client.backend.config)
        o = simulated_respond(build_prompt("omni", r, spec, target), r, client.backend.config)
        diff = np.abs(np.array(json.loads(m)) - np.array(json.loads(o)))
        assert diff.max() <= 1


def test_baseline_variance_below_omni(setting):
    spec, prior, target, human = setting
    client = LLMClient(SimulatedBackend())
    base = generate_responses(human, target, "baseline", client).matrix.values(target)
    omni = generate_responses(human, target, "omni", client).matrix.values(target)
    assert np.all(base.var(axis=0) == 0)
    assert np.all(base.var(axis=0) < omni.var(axis=0))


def test_noise_free_omni_matches_implied_answers(setting):
    spec, prior, target, human = setting
    cfg = SimulatedRespondentConfig()
    gen = generate_responses(human, target, "omni", LLMClient(SimulatedBackend(cfg)))
    implied = []
    latents = [spec.latent_of(i) for i in prior]
    for r in human.respondents:
        means = {L: np.mean([r.answers[i] for i in prior if spec.latent_of(i) == L]) for L in set(latents)}
        level = np.mean(list(means.values()))
        implied.append(r.with_answers({t: int(np.floor(level + 0.5)) for t in target}))
    oracle = type(human)(spec, tuple(implied), tuple(target))
    assert consistency(oracle, gen.matrix.restrict(target)) == 100.0
    np.testing.assert_array_equal(oracle.values(), gen.matrix.values(target))


def test_config_changes_model_id():
    a = SimulatedBackend(SimulatedRespondentConfig(noise=0.3))
    b = SimulatedBackend(SimulatedRespondentConfig(noise=0.4))
    assert a.model_id != b.model_id
    assert a.model_id == SimulatedBackend(SimulatedRespondentConfig(noise=0.3)).model_id
