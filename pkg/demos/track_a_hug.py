#!/usr/bin/env python
# Train on synthetic hugs, then follow a hug the model has never seen.
#
# The robot only sees the partner (pose markers and torso force sensors).
# It has to work out how far along the hug is and what its own joints and
# arm sensors should be doing right now.

import numpy as np

from sparsebip import ScenarioConfig, VariantConfig, generate_dataset, train
from sparsebip.filtering import run_session

data = generate_dataset(ScenarioConfig(seed=0), n_demos=61)
held_out = data.demos[-1]
model = train(data.demos[:-1], VariantConfig.named("group-ols"), data.groups)
print(f"trained on {len(model.lengths)} demos, latent dimension {model.dimension}")

# hide everything the robot would not observe at run time
raw = np.full(held_out.samples.shape, np.nan)
obs = held_out.layout.observed
raw[:, obs] = held_out.samples[:, obs]
outputs = run_session(model.initial_state(), model.frames(raw), look_ahead=0.0, seed=1)

truth = data.truth[-1].phase
reduced = model.reduction.apply(held_out)
joints = [k for k in model.layout.controlled if model.layout.channels[k].modality == "joint"]

print(f"\n{'step':>5} {'true phase':>10} {'estimate':>9} {'joint error':>12}")
for k in range(0, held_out.T, max(1, held_out.T // 12)):
    err = np.abs(outputs[k].decoded[joints] - reduced.samples[k, joints]).mean()
    print(f"{k:>5} {truth[k]:>10.3f} {outputs[k].phase:>9.3f} {err:>12.4f}")

final = outputs[-1].phase
print(f"\nfinal phase estimate {final:.3f} (the hug ends at 1.0)")
