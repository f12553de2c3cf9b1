#!/usr/bin/env python
# What happens when the partner does not hug the way the demos did?
#
# Each scenario below is fed to the same trained model.  When the partner
# stalls, the estimated phase velocity should collapse so the robot waits
# instead of carrying on with the hug by itself.

from sparsebip import ScenarioConfig, VariantConfig, generate_dataset, train
from sparsebip.filtering import run_session
from sparsebip.synth import EDGE_CASES, edge_case_interaction

data = generate_dataset(ScenarioConfig(seed=0), n_demos=61)
model = train(data.demos, VariantConfig.named("group-ols"), data.groups)
v0 = model.initial_state().velocity.mean()

print(f"prior phase velocity {v0:.4f} per step\n")
print(f"{'scenario':<18} {'onset':>5} {'final phase':>11} {'lowest velocity':>16}")
for kind in EDGE_CASES:
    X, _, onset = edge_case_interaction(kind, ScenarioConfig(seed=42))
    out = run_session(model.initial_state(), model.frames(X), seed=0)
    lowest = min(o.phase_velocity for o in out[onset:])
    print(f"{kind:<18} {onset:>5} {out[-1].phase:>11.3f} {lowest / v0:>15.1%}")

# do-nothing and hug-air stall from the first frame; hug-no-contact follows
# the approach and then stops where touch would normally begin
#
# delay-before-hug recovers from stalls of up to about 100 steps.  After the
# default 200-step stall the ensemble picks up the approach, then locks onto
# the mirror-image release half of the symmetric pose profiles and slides back.
