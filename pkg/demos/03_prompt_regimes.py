"""
What each prompt regime tells the model
=======================================

Render the four respondent prompts for one synthetic Study 1 respondent.
"""

from surveymirror.llm_client import LLMClient
from surveymirror.prompting import Approach, build_prompt, generate_persona
from surveymirror.simulated import SimulatedBackend
from surveymirror.survey import bundled_spec, split_items
from surveymirror.synthetic import generate_synthetic_study

spec = bundled_spec("study1")
betas = {"pleasure->attitude": 0.5, "credibility->attitude": 0.45, "economic->attitude": 0.4,
         "intrusiveness->attitude": -0.35, "clutter->attitude": -0.3}
respondent = generate_synthetic_study(spec, betas, n=5, seed=0).respondents[0]
prior, target = split_items(spec, {"attitude"})
print(f"{len(prior)} prior items, {len(target)} target items")

# The mirror regime answers from a persona, written once per respondent.
client = LLMClient(SimulatedBackend())
persona = generate_persona(respondent, spec, prior, client)

for approach in Approach:
    bundle = build_prompt(approach, respondent, spec, target,
                          persona=persona if approach is Approach.MIRROR else None)
    print("=" * 72)
    print(approach.label, bundle.flags())
    print("-" * 72)
    print(bundle.rendered_text)
