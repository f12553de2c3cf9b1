#!/usr/bin/env python
# Cross-validated comparison of the four model variants.
#
# Usage: python compare_variants.py [folds]
# Ten folds over 121 demos takes a few minutes on one core.

import sys

from sparsebip import ScenarioConfig, generate_dataset
from sparsebip.evaluation import evaluate
from sparsebip.pipeline import VARIANTS

folds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
data = generate_dataset(ScenarioConfig(seed=0))


def progress(name, fold, total):
    print(f"  {name} fold {fold + 1}/{total}", file=sys.stderr)


report = evaluate(data.demos, VARIANTS, folds=folds, seed=0, groups=data.groups, progress=progress)

# rows: look-ahead and metric group; columns: variants (mean per-demo MAE)
print(report.to_table())
print(report.summary())
