"""Spatial-sparsity reductions for contact-force channels.

``group_reduce`` collapses co-located sensors into one channel by taking the
per-step maximum.  ``select_inputs`` greedily picks input force channels whose
basis coefficients carry binned mutual information about the output forces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .model import ChannelSpec, Interaction, LatentModel, SensorLayout, validate_interaction

DEFAULT_MI_THRESHOLD = 0.07
NULL_PERMUTATIONS = 1000
NULL_QUANTILE = 0.95
_NULL_SEED = 20200518


@dataclass(frozen=True)
class GroupMap:
    """``groups`` maps group id -> ordered member channel names."""

    groups: dict
    output_names: dict = field(default_factory=dict)

    def __post_init__(self):
        groups = {g: tuple(m) for g, m in self.groups.items()}
        seen: set[str] = set()
        for g, members in groups.items():
            if not members:
                raise ValueError(f"group {g!r} is empty")
            overlap = seen.intersection(members)
            if overlap:
                raise ValueError(f"channels in more than one group: {sorted(overlap)}")
            seen.update(members)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "output_names",
                           {g: self.output_names.get(g, g) for g in groups})

    @classmethod
    def from_layout(cls, layout: SensorLayout) -> "GroupMap":
        groups: dict[str, list[str]] = {}
        for c in layout.channels:
            if c.group_id is not None:
                groups.setdefault(c.group_id, []).append(c.name)
        return cls(groups)

    def to_dict(self) -> dict:
        return {"groups": {g: list(m) for g, m in sorted(self.groups.items())},
                "output_names": dict(sorted(self.output_names.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupMap":
        return cls(d["groups"], d.get("output_names", {}))


def reduce_layout(layout: SensorLayout, g: GroupMap):
    """Reduced layout plus, per output channel, the input indices it aggregates."""
    grouped = set()
    for gid, members in g.groups.items():
        for name in members:
            if name not in layout.names:
                raise KeyError(f"group {gid!r}: unknown member channel {name!r}")
            grouped.add(name)
    specs, sources = [], []
    for k, c in enumerate(layout.channels):
        if c.name not in grouped:
            specs.append(c)
            sources.append([k])
    for gid in sorted(g.groups):
        idx = layout.indices(g.groups[gid])
        chans = [layout.channels[k] for k in idx]
        if any(c.modality != "force" for c in chans):
            raise ValueError(f"group {gid!r} contains non-force channels")
        roles = {c.role for c in chans}
        if len(roles) != 1:
            raise ValueError(f"group {gid!r} mixes observed and controlled channels")
        specs.append(ChannelSpec(g.output_names[gid], "force", roles.pop(), gid))
        sources.append(idx)
    return SensorLayout(tuple(specs)), sources


def group_reduce(i: Interaction, g: GroupMap) -> Interaction:
    """Replace every group of force channels by its per-step maximum.

    Ungrouped channels keep their order and come first; groups follow sorted
    by group id.
    """
    validate_interaction(i)
    layout, sources = reduce_layout(i.layout, g)
    cols = [i.samples[:, src].max(axis=1) for src in sources]
    return Interaction(layout, np.column_stack(cols), i.timestep)


class MutualInfo(NamedTuple):
    bits: float
    degenerate: bool


def _bin(x: np.ndarray, bins: int):
    """Equal-width bin labels over the observed range; None if ``x`` is constant."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        return None
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _mi_from_counts(counts: np.ndarray) -> np.ndarray:
    """Plug-in MI in bits for joint count tables stacked on the leading axes."""
    n = counts.sum(axis=(-2, -1), keepdims=True)
    p = counts / n
    px = p.sum(axis=-1, keepdims=True)
    py = p.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p / (px * py)), 0.0)
    return np.maximum(terms.sum(axis=(-2, -1)), 0.0)


def mi_binned(x, y, bins: int) -> MutualInfo:
    """Plug-in mutual information (bits) between two equal-width-binned samples."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have the same length")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    bx, by = _bin(x, bins), _bin(y, bins)
    if bx is None or by is None:
        return MutualInfo(0.0, True)
    counts = np.bincount(bx * bins + by, minlength=bins * bins).reshape(bins, bins)
    return MutualInfo(float(_mi_from_counts(counts.astype(float))), False)


@dataclass(frozen=True)
class SelectionReport:
    """Greedy selection outcome.

    ``mi_trace[k]`` is the cumulative score after the k-th recorded step; when
    selection ended on a non-negative sub-threshold increment that step is
    recorded too, with ``stopped_on`` naming the rejected channel.
    """

    selected: tuple[str, ...]
    mi_trace: tuple[float, ...]
    threshold: float
    bins: int
    stopped_on: str | None = None
    note: str = ("threshold applies to per-step increments of the summed, "
                 "chance-corrected MI (bits); equal-width bins")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.mi_trace]))

    def to_table(self) -> str:
        lines = [f"# {self.note}", f"# threshold={self.threshold:g} bins={self.bins}",
                 "channel,increment,cumulative_mi,selected"]
        names = list(self.selected) + ([self.stopped_on] if self.stopped_on else [])
        for k, (name, inc, cum) in enumerate(zip(names, self.increments, self.mi_trace)):
            lines.append(f"{name},{inc:.6f},{cum:.6f},{int(k < len(self.selected))}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"selected": list(self.selected), "mi_trace": list(self.mi_trace),
                "threshold": self.threshold, "bins": self.bins, "stopped_on": self.stopped_on}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionReport":
        return cls(tuple(d["selected"]), tuple(d["mi_trace"]), d["threshold"], d["bins"],
                   d.get("stopped_on"))


def coefficient_summary(demos: Sequence[LatentModel], channel: int) -> np.ndarray:
    """Mean absolute basis coefficient of ``channel`` in each demonstration."""
    return np.array([np.mean(np.abs(m.channel_weights(channel))) for m in demos])


def _standardize(s: np.ndarray) -> np.ndarray:
    sd = s.std()
    return (s - s.mean()) / sd if sd > 0 else np.zeros_like(s)


class _SummedNull:
    """Binned targets with shared permutations, for chance-level summed MI.

    Row 0 of every label table is the observed target; the remaining rows
    apply the same permutation to all targets, so the null keeps the targets'
    mutual dependence and only breaks their link to the candidate aggregate.
    """

    def __init__(self, targets: Sequence[np.ndarray], bins: int, perms: np.ndarray):
        self.bins = bins
        labels = [b for b in (_bin(y, bins) for y in targets) if b is not None]
        n = perms.shape[1]
        self.n = n
        self.shape = (len(labels), perms.shape[0] + 1, bins * bins)
        # c * log2(c) for every count a cell can hold
        k = np.arange(n + 1, dtype=float)
        self.klogk = np.where(k > 0, k * np.log2(np.maximum(k, 1.0)), 0.0)
        if labels:
            tables = np.stack([np.vstack([b[None, :], b[perms]]) for b in labels])
            # one flat bin index per (target, permutation, sample); x adds its row offset
            cells = np.arange(self.shape[0] * self.shape[1]).reshape(self.shape[:2] + (1,))
            self.offsets = cells * bins * bins + tables
            # permuting a target leaves its marginal counts unchanged
            self.target_terms = sum(
                self.klogk[np.bincount(b, minlength=bins)].sum() for b in labels)

    def excess(self, x: np.ndarray) -> float:
        """Summed MI(x; y_t) minus the chosen quantile of its permutation null."""
        bx = _bin(x, self.bins)
        if bx is None or self.shape[0] == 0:
            return 0.0
        T, n = self.shape[0], self.n
        counts = np.bincount((self.offsets + bx * self.bins).ravel(),
                             minlength=int(np.prod(self.shape))).reshape(self.shape)
        joint = self.klogk[counts].sum(axis=(0, 2))
        x_terms = self.klogk[np.bincount(bx, minlength=self.bins)].sum()
        # plug-in MI summed over targets: log2 n + (sum c log c - marginal terms) / n
        total = T * math.log2(n) + (joint - T * x_terms - self.target_terms) / n
        return float(total[0] - np.quantile(total[1:], NULL_QUANTILE))


def select_inputs(demos: Sequence[LatentModel], layout: SensorLayout, candidates: Sequence[str],
                  targets: Sequence[str], bins: int | None = None,
                  threshold: float = DEFAULT_MI_THRESHOLD) -> SelectionReport:
    """Forward selection of input channels by mutual information with the targets.

    Each channel is summarized per demonstration by its mean absolute
    coefficient.  A candidate set is scored by summing, over targets, the MI
    between the set's aggregate (sum of standardized member summaries) and the
    target summary, less the 95th percentile of that sum when the
    demonstrations are shuffled (one fixed permutation set shared by all
    targets).  The candidate with the largest
    score increase joins the set until that increase falls below ``threshold``.
    """
    n = len(demos)
    if n < 2:
        raise ValueError("need at least 2 demonstrations")
    if bins is None:
        bins = math.ceil(math.sqrt(n))
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if n < bins:
        raise ValueError(f"{n} demonstrations cannot fill {bins} bins; lower bins")
    overlap = set(candidates) & set(targets)
    if overlap:
        raise ValueError(f"candidates and targets overlap: {sorted(overlap)}")
    basis = demos[0].basis
    if any(m.basis != basis for m in demos):
        raise ValueError("demonstrations use different basis spaces")

    cand_idx = sorted(layout.indices(candidates))
    z = {d: _standardize(coefficient_summary(demos, d)) for d in cand_idx}
    rng = np.random.default_rng(_NULL_SEED)
    perms = np.array([rng.permutation(n) for _ in range(NULL_PERMUTATIONS)])
    null = _SummedNull([coefficient_summary(demos, d) for d in layout.indices(targets)],
                       bins, perms)
    score = null.excess

    selected: list[int] = []
    trace: list[float] = []
    agg = np.zeros(n)
    current = 0.0
    stopped_on = None
    while len(selected) < len(cand_idx):
        best = None
        for d in cand_idx:
            if d in selected:
                continue
            inc = score(agg + z[d]) - current
            if best is None or inc > best[1]:
                best = (d, inc)
        d, inc = best
        if inc < threshold:
            if inc >= 0:
                trace.append(current + inc)
                stopped_on = layout.names[d]
            break
        selected.append(d)
        agg = agg + z[d]
        current += inc
        trace.append(current)
    return SelectionReport(tuple(layout.names[d] for d in selected), tuple(trace),
                           threshold, bins, stopped_on)
