#!/usr/bin/env python
# The three ways the model gets smaller, one at a time.

import numpy as np

from sparsebip import ScenarioConfig, VariantConfig, generate_dataset, train
from sparsebip.basis import ols_select, uniform_basis

data = generate_dataset(ScenarioConfig(seed=3), n_demos=61)

# 1. Mutual-information selection keeps the torso sensors that tell us
#    something about the arm forces.  The synthetic data plants two of them.
mifs = train(data.demos, VariantConfig.named("mifs"))
print("planted informative sensors:", ", ".join(data.informative))
print(mifs.selection.to_table())

# 2. Grouping replaces every patch of neighbouring sensors by its maximum.
group = train(data.demos, VariantConfig.named("group"), data.groups)
n_force = sum(ch.modality == "force" for ch in data.layout.channels)
n_group = sum(ch.modality == "force" for ch in group.layout.channels)
print(f"force channels: {n_force} raw -> {n_group} groups")

# 3. Orthogonal least squares places basis functions only where a force
#    channel actually moves, i.e. inside the contact window.
ch = data.layout.index(data.informative[0])
uni = uniform_basis(1, 8)
res = ols_select(data.demos, ch, np.linspace(0, 1, 64), uni.widths[0], tolerance=0.05)
lo, hi = data.config.contact_window
print(f"\ncontact window [{lo}, {hi}]; OLS centers for {data.informative[0]}:",
      np.round(res.sorted_centers, 3))

print("\nlatent dimension per variant")
for name in ("all", "mifs", "group", "group-ols"):
    m = train(data.demos, VariantConfig.named(name), data.groups)
    print(f"  {m.variant.name:<10} {m.dimension}")
