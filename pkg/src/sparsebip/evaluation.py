"""Cross-validated comparison of model variants.

Per held-out demonstration the observed channels are replayed through the
filter and the decoded controlled channels are scored by mean absolute error,
for several phase look-aheads at once (look-ahead only changes decoding, so a
single filter run serves all of them).  Variants are compared pairwise with
the Mann-Whitney U test on per-demo MAEs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .filtering import filter_steps
from .model import Interaction
from .pipeline import PipelineConfig, TrainedModel, VariantConfig, train
from .sparsity import GroupMap

LOOK_AHEADS = (0.0, 0.05, 0.1)
METRIC_GROUPS = {"joints": ("joint",), "left": ("larm",), "right": ("rarm",)}
ALPHA = 0.05
EXACT_LIMIT = 16


def mae(predicted, actual, channels: Sequence[int] | None = None) -> float:
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if predicted.shape != actual.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if channels is not None:
        predicted, actual = predicted[:, channels], actual[:, channels]
    return float(np.mean(np.abs(predicted - actual)))


class MWUResult(NamedTuple):
    U: float  # statistic of the first sample
    p: float  # two-sided
    exact: bool


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(a, b) -> MWUResult:
    """U of ``a`` from midrank sums, with a two-sided p-value.

    Exact permutation p (ties included) when ``len(a) + len(b) <= 16``,
    otherwise the tie-corrected normal approximation with continuity correction.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    ranks = _midranks(np.concatenate([a, b]))
    U = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    mid = n * m / 2.0
    dev = abs(U - mid)
    if n + m <= EXACT_LIMIT:
        combos = np.array(list(itertools.combinations(range(n + m), n)))
        u_all = ranks[combos].sum(axis=1) - n * (n + 1) / 2.0
        p = float(np.mean(np.abs(u_all - mid) >= dev - 1e-9))
        return MWUResult(U, min(p, 1.0), True)
    N = n + m
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts)) / (N * (N - 1))
    var = n * m / 12.0 * ((N + 1) - tie)
    if var <= 0:
        return MWUResult(U, 1.0, False)
    z = max(dev - 0.5, 0.0) / math.sqrt(var)
    p = 2.0 * float(ndtr(-z))
    return MWUResult(U, min(max(p, np.finfo(float).tiny), 1.0), False)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold index of every demo: a seeded shuffle dealt round-robin."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"{n} demonstrations cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=int)
    out[order] = np.arange(n) % folds
    return out


def metric_channels(model: TrainedModel, groups=METRIC_GROUPS) -> dict[str, list[int]]:
    """Controlled channel indices of the model layout per metric group (name prefixes)."""
    L = model.layout
    out = {}
    for g, prefixes in groups.items():
        out[g] = [k for k in L.controlled if L.names[k].startswith(tuple(prefixes))]
    return out


def session_errors(model: TrainedModel, demo: Interaction, look_aheads: Sequence[float],
                   seed: int, groups=METRIC_GROUPS) -> dict:
    """Per (look_ahead, metric group) MAE of one held-out demo, plus the final phase."""
    reduced = model.reduction.apply(demo)
    raw = np.full(demo.samples.shape, np.nan)
    obs = demo.layout.observed
    raw[:, obs] = demo.samples[:, obs]
    frames = model.frames(raw, demo.timestep)
    rng = np.random.default_rng(seed)
    phases, weights = [], []
    for step in filter_steps(model.initial_state(), frames, rng):
        phases.append(step.state.phase.mean())
        weights.append(step.state.weights.mean(axis=0))
    phases = np.array(phases)
    weights = np.array(weights)
    chans = metric_channels(model, groups)
    ctrl = reduced.layout.controlled
    basis = model.basis
    out = {}
    for la in look_aheads:
        pred = np.empty((len(phases), len(ctrl)))
        target = np.clip(phases + la, 0.0, 1.0)
        for k, d in enumerate(ctrl):
            seg = basis.segment(d)
            act = np.exp(-0.5 * ((target[:, None] - basis.centers[d]) / basis.widths[d]) ** 2)
            pred[:, k] = np.einsum("tb,tb->t", act, weights[:, seg])
        actual = reduced.samples[:, ctrl]
        pos = {d: k for k, d in enumerate(ctrl)}
        for g, idx in chans.items():
            if idx:
                cols = [pos[d] for d in idx]
                out[(la, g)] = mae(pred[:, cols], actual[:, cols])
    out["final_phase"] = float(phases[-1])
    return out


@dataclass
class EvalReport:
    variants: list[str]
    look_aheads: tuple
    metric_groups: tuple
    per_demo: dict  # variant -> {(look_ahead, group): array of per-demo MAE (demo order)}
    dimensions: dict  # variant -> latent dimension (mean over folds)
    significance: dict = field(default_factory=dict)  # (la, group) -> {(v1, v2): MWUResult}
    final_phase: dict = field(default_factory=dict)  # variant -> array
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def mean_mae(self, variant: str, look_ahead: float, group: str) -> float:
        return float(np.mean(self.per_demo[variant][(look_ahead, group)]))

    def best(self, look_ahead: float, group: str) -> str:
        return min(self.variants, key=lambda v: self.mean_mae(v, look_ahead, group))

    def worse_than_best(self, look_ahead: float, group: str) -> list[str]:
        """Variants significantly worse than the best one in this cell."""
        best = self.best(look_ahead, group)
        out = []
        for v in self.variants:
            if v == best:
                continue
            res = self.significance.get((look_ahead, group), {}).get((best, v))
            if res is not None and res.p < ALPHA:
                out.append(v)
        return out

    def significantly_worse(self, variant: str, than: str, look_ahead: float, group: str) -> bool:
        res = self.significance[(look_ahead, group)][(than, variant)]
        worse = self.mean_mae(variant, look_ahead, group) > self.mean_mae(than, look_ahead, group)
        return worse and res.p < ALPHA

    def to_table(self) -> str:
        """Delimited table shaped like the usual variant-by-look-ahead MAE grid."""
        lines = [f"# seed={self.seed} config_hash={self.meta.get('config_hash')}",
                 "look_ahead,metric," + ",".join(self.variants),
                 "," + "dimension," + ",".join(str(self.dimensions[v]) for v in self.variants)]
        for la in self.look_aheads:
            for g in self.metric_groups:
                cells = [f"{self.mean_mae(v, la, g):.6f}" for v in self.variants]
                lines.append(f"{la:.2f},{g}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def significance_table(self) -> str:
        lines = [f"# seed={self.seed} config_hash={self.meta.get('config_hash')}",
                 "look_ahead,metric,variant_a,variant_b,U,p"]
        for (la, g), pairs in self.significance.items():
            for (a, b), res in pairs.items():
                if a < b:
                    lines.append(f"{la:.2f},{g},{a},{b},{res.U:.1f},{res.p:.6g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        out = [f"seed={self.seed} config_hash={self.meta.get('config_hash')}",
               "dimension: " + ", ".join(f"{v}={self.dimensions[v]}" for v in self.variants)]
        for la in self.look_aheads:
            out.append(f"look-ahead {la:.2f}")
            for g in self.metric_groups:
                best = self.best(la, g)
                worse = set(self.worse_than_best(la, g))
                cells = []
                for v in self.variants:
                    mark = "*" if v == best else ("!" if v in worse else " ")
                    cells.append(f"{v}={self.mean_mae(v, la, g):.4f}{mark}")
                out.append(f"  {g:<7}" + "  ".join(cells))
        if len(self.variants) > 1:
            out.append("* best mean MAE; ! significantly worse than best (Mann-Whitney U, p < 0.05)")
        return "\n".join(out) + "\n"


def _significance(per_demo: dict, variants, look_aheads, groups) -> dict:
    sig = {}
    if len(variants) < 2:
        return sig
    for la in look_aheads:
        for g in groups:
            cell = {}
            for a, b in itertools.permutations(variants, 2):
                cell[(a, b)] = mann_whitney_u(per_demo[a][(la, g)], per_demo[b][(la, g)])
            sig[(la, g)] = cell
    return sig


def cross_validate(demos: Sequence[Interaction], variant: VariantConfig, folds: int = 10,
                   look_aheads: Sequence[float] = LOOK_AHEADS, seed: int = 0,
                   groups: GroupMap | None = None, cfg: PipelineConfig = PipelineConfig(),
                   metric_groups=METRIC_GROUPS, progress=None) -> EvalReport:
    """k-fold evaluation of one variant; per-demo MAEs are kept in dataset order."""
    n = len(demos)
    assign = fold_assignment(n, folds, seed)
    look_aheads = tuple(float(la) for la in look_aheads)
    keys = [(la, g) for la in look_aheads for g in metric_groups]
    per_demo = {k: np.full(n, np.nan) for k in keys}
    final = np.full(n, np.nan)
    dims = []
    for f in range(folds):
        train_idx = np.flatnonzero(assign != f)
        test_idx = np.flatnonzero(assign == f)
        try:
            model = train([demos[k] for k in train_idx], variant, groups, cfg)
        except (ArithmeticError, ValueError) as exc:
            # keep the exception type so callers can still tell data from numerical failures
            exc.args = (f"variant {variant.name}, fold {f}: {exc}",) + exc.args[1:]
            raise
        dims.append(model.dimension)
        for k in test_idx:
            errs = session_errors(model, demos[k], look_aheads,
                                  seed=int(np.random.SeedSequence([seed, f, k]).generate_state(1)[0]),
                                  groups=metric_groups)
            for key in keys:
                per_demo[key][k] = errs.get(key, np.nan)
            final[k] = errs["final_phase"]
        if progress:
            progress(variant.name, f, folds)
    return EvalReport([variant.name], look_aheads, tuple(metric_groups), {variant.name: per_demo},
                      {variant.name: int(round(np.mean(dims)))}, {}, {variant.name: final}, seed,
                      {"config_hash": cfg.digest(), "folds": folds})


def compare(reports: Sequence[EvalReport]) -> EvalReport:
    """Merge single-variant reports (same folds and seed) and add pairwise tests."""
    first = reports[0]
    variants = [v for r in reports for v in r.variants]
    per_demo = {v: r.per_demo[v] for r in reports for v in r.variants}
    dims = {v: r.dimensions[v] for r in reports for v in r.variants}
    final = {v: r.final_phase[v] for r in reports for v in r.variants}
    sig = _significance(per_demo, variants, first.look_aheads, first.metric_groups)
    return EvalReport(variants, first.look_aheads, first.metric_groups, per_demo, dims, sig, final,
                      first.seed, dict(first.meta))


def evaluate(demos: Sequence[Interaction], variants: Sequence[VariantConfig], folds: int = 10,
             look_aheads: Sequence[float] = LOOK_AHEADS, seed: int = 0,
             groups: GroupMap | None = None, cfg: PipelineConfig = PipelineConfig(),
             progress=None) -> EvalReport:
    return compare([cross_validate(demos, v, folds, look_aheads, seed, groups, cfg,
                                   progress=progress) for v in variants])
