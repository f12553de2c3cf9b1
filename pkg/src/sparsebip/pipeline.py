"""Training pipeline: variant reductions, basis construction, latent fits.

A :class:`TrainedModel` owns everything needed at run time: the raw layout
the data arrives in, the reductions to apply (grouping, kept channels), the
basis, every demo's weights and length, and the noise settings.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import DEFAULT_OLS_CANDIDATES, DEFAULT_RIDGE, fit, ols_select, uniform_basis
from .filtering import R_FLOOR, ObservationFrame, ProcessNoise, init_ensemble
from .model import BasisSpace, EnsembleState, Interaction, LatentModel, SensorLayout
from .sparsity import (DEFAULT_MI_THRESHOLD, GroupMap, SelectionReport, group_reduce,
                       reduce_layout, select_inputs)

MODEL_FORMAT = "sparsebip-model/1"


@dataclass(frozen=True)
class VariantConfig:
    name: str
    uses_grouping: bool
    uses_mifs: bool
    uses_ols: bool

    def __post_init__(self):
        expected = _VARIANT_FLAGS.get(self.name)
        if expected is None:
            raise ValueError(f"unknown variant {self.name!r}")
        if (self.uses_grouping, self.uses_mifs, self.uses_ols) != expected:
            raise ValueError(f"variant {self.name!r} requires flags {expected}")

    @classmethod
    def named(cls, name: str) -> "VariantConfig":
        name = VARIANT_ALIASES.get(name, name)
        if name not in _VARIANT_FLAGS:
            raise ValueError(f"unknown variant {name!r}")
        return cls(name, *_VARIANT_FLAGS[name])


_VARIANT_FLAGS = {"All": (False, False, False), "MIFS": (False, True, False),
                  "Group": (True, False, False), "Group+OLS": (True, False, True)}
VARIANT_ALIASES = {"all": "All", "mifs": "MIFS", "group": "Group", "group-ols": "Group+OLS"}
VARIANTS = tuple(VariantConfig.named(n) for n in _VARIANT_FLAGS)


@dataclass(frozen=True)
class PipelineConfig:
    basis_per_channel: int = 8
    width_factor: float = 1.0
    ridge: float = DEFAULT_RIDGE
    ols_candidates: int = DEFAULT_OLS_CANDIDATES
    ols_tolerance: float = 0.05
    mi_bins: int | None = None
    mi_threshold: float = DEFAULT_MI_THRESHOLD
    velocity_noise_scale: float = 0.1
    r_relative: float = 0.1
    r_floor: float = R_FLOOR

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pipeline keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Reduction:
    """Maps raw-layout data to the model layout: optional grouping, then channel subset."""

    raw_layout: SensorLayout
    groups: GroupMap | None
    keep: tuple[str, ...] | None = None  # names kept after grouping (None = all)

    @property
    def grouped_layout(self) -> SensorLayout:
        return reduce_layout(self.raw_layout, self.groups)[0] if self.groups else self.raw_layout

    @property
    def layout(self) -> SensorLayout:
        g = self.grouped_layout
        return g if self.keep is None else g.select(g.indices(self.keep))

    def apply(self, i: Interaction) -> Interaction:
        if i.layout.names != self.raw_layout.names:
            raise ValueError("interaction layout does not match the model's raw layout")
        if self.groups:
            i = group_reduce(i, self.groups)
        if self.keep is not None:
            i = i.select(i.layout.indices(self.keep))
        return i

    def apply_array(self, X: np.ndarray) -> np.ndarray:
        """Same as :meth:`apply` on a raw ``(T, D)`` array that may hold NaN."""
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.raw_layout):
            raise ValueError(f"expected {len(self.raw_layout)} raw channels, got {X.shape[1]}")
        if self.groups:
            _, sources = reduce_layout(self.raw_layout, self.groups)
            X = np.column_stack([X[:, src].max(axis=1) for src in sources])
        if self.keep is not None:
            X = X[:, self.grouped_layout.indices(self.keep)]
        return X

    def to_dict(self) -> dict:
        return {"raw_layout": self.raw_layout.to_list(),
                "groups": self.groups.to_dict() if self.groups else None,
                "keep": list(self.keep) if self.keep is not None else None}

    @classmethod
    def from_dict(cls, d: dict) -> "Reduction":
        return cls(SensorLayout.from_list(d["raw_layout"]),
                   GroupMap.from_dict(d["groups"]) if d["groups"] else None,
                   tuple(d["keep"]) if d["keep"] is not None else None)


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrainedModel:
    variant: VariantConfig
    reduction: Reduction
    basis: BasisSpace
    weights: np.ndarray  # (n_demos, B)
    lengths: tuple[int, ...]
    measurement_noise: np.ndarray  # per observed channel of the model layout
    process_noise: ProcessNoise
    selection: SelectionReport | None = None
    config: PipelineConfig = field(default_factory=PipelineConfig)
    meta: dict = field(default_factory=dict)

    @property
    def layout(self) -> SensorLayout:
        return self.reduction.layout

    @property
    def dimension(self) -> int:
        """Latent state dimension (total basis functions)."""
        return self.basis.total

    def demos(self) -> list[LatentModel]:
        return [LatentModel(w, self.basis) for w in self.weights]

    def initial_state(self) -> EnsembleState:
        return init_ensemble(self.demos(), self.lengths, self.process_noise,
                             self.measurement_noise, self.layout.observed)

    def frames(self, raw: np.ndarray, dt: float = 1.0 / 30.0) -> list[ObservationFrame]:
        """Frames over the model's observed channels from raw-layout rows (NaN = missing)."""
        X = self.reduction.apply_array(raw)[:, self.layout.observed]
        return [ObservationFrame.from_values(row, dt) for row in X]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "variant": self.variant.name,
            "reduction": self.reduction.to_dict(),
            "basis": self.basis.to_dict(),
            "weights": self.weights.tolist(),
            "lengths": list(self.lengths),
            "measurement_noise": self.measurement_noise.tolist(),
            "process_noise": asdict(self.process_noise),
            "selection": self.selection.to_dict() if self.selection else None,
            "config": self.config.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"model format {d.get('format')!r} != {MODEL_FORMAT!r}")
        m = cls(VariantConfig.named(d["variant"]), Reduction.from_dict(d["reduction"]),
                BasisSpace.from_dict(d["basis"]), np.asarray(d["weights"], dtype=float),
                tuple(int(t) for t in d["lengths"]), np.asarray(d["measurement_noise"], dtype=float),
                ProcessNoise(**d["process_noise"]),
                SelectionReport.from_dict(d["selection"]) if d["selection"] else None,
                PipelineConfig.from_dict(d["config"]), d.get("meta", {}))
        m.check()
        return m

    def check(self) -> None:
        if self.weights.shape != (len(self.lengths), self.basis.total):
            raise ModelFormatError("weights do not match basis size / demo count")
        if self.basis.n_channels != len(self.layout):
            raise ModelFormatError("basis channel count does not match layout")
        if self.measurement_noise.shape != (len(self.layout.observed),):
            raise ModelFormatError("measurement noise must cover every observed channel")
        if self.selection:
            missing = set(self.selection.selected) - set(self.reduction.grouped_layout.names)
            if missing:
                raise ModelFormatError(f"selected channels not in layout: {sorted(missing)}")


def force_channels(layout: SensorLayout, role: str) -> list[str]:
    return [c.name for c in layout.channels if c.modality == "force" and c.role == role]


def build_basis(interactions: Sequence[Interaction], variant: VariantConfig,
                cfg: PipelineConfig) -> BasisSpace:
    layout = interactions[0].layout
    uni = uniform_basis(len(layout), cfg.basis_per_channel, cfg.width_factor)
    if not variant.uses_ols:
        return uni
    centers, widths = list(uni.centers), list(uni.widths)
    candidates = np.linspace(0.0, 1.0, cfg.ols_candidates)
    for d, ch in enumerate(layout.channels):
        if ch.modality != "force":
            continue
        res = ols_select(list(interactions), d, candidates, uni.widths[d], cfg.ols_tolerance,
                         max_terms=cfg.basis_per_channel)
        centers[d] = res.sorted_centers if res.centers.size else np.array([0.5])
    return BasisSpace(tuple(centers), tuple(widths))


def measurement_noise(residuals, observed, cfg: PipelineConfig) -> np.ndarray:
    """Per observed channel: mean squared fit residual, floored at ``(r_relative * range)^2``.

    The range is the channel's peak-to-peak over all training samples.  The
    relative floor keeps a single channel with a near-perfect fit from
    dominating the gain, which otherwise makes phase tracking brittle.
    """
    resid_var = np.mean(np.square(residuals), axis=0)
    X = np.vstack(observed)
    spread = (cfg.r_relative * np.ptp(X, axis=0)) ** 2
    return np.maximum(np.maximum(resid_var, spread), cfg.r_floor)


def train(interactions: Sequence[Interaction], variant: VariantConfig,
          groups: GroupMap | None = None, cfg: PipelineConfig = PipelineConfig(),
          meta: dict | None = None) -> TrainedModel:
    """Apply the variant's reductions, build its basis and fit every demonstration."""
    if len(interactions) < 2:
        raise ValueError("need at least 2 demonstrations")
    raw_layout = interactions[0].layout
    if variant.uses_grouping:
        if groups is None:
            groups = GroupMap.from_layout(raw_layout)
        reduction = Reduction(raw_layout, groups)
    else:
        reduction = Reduction(raw_layout, None)
    data = [reduction.apply(i) for i in interactions]

    selection = None
    if variant.uses_mifs:
        layout = data[0].layout
        uni = uniform_basis(len(layout), cfg.basis_per_channel, cfg.width_factor)
        latents = [fit(i, uni, cfg.ridge).model for i in data]
        candidates = force_channels(layout, "observed")
        selection = select_inputs(latents, layout, candidates, force_channels(layout, "controlled"),
                                  cfg.mi_bins, cfg.mi_threshold)
        dropped = set(candidates) - set(selection.selected)
        keep = tuple(n for n in layout.names if n not in dropped)
        reduction = replace(reduction, keep=keep)
        data = [i.select(i.layout.indices(keep)) for i in data]

    basis = build_basis(data, variant, cfg)
    fits = [fit(i, basis, cfg.ridge) for i in data]
    layout = data[0].layout
    obs = layout.observed
    R = measurement_noise([f.residual[obs] for f in fits], [i.samples[:, obs] for i in data], cfg)
    return TrainedModel(variant, reduction, basis, np.vstack([f.model.weights for f in fits]),
                        tuple(i.T for i in data), R,
                        ProcessNoise(velocity_scale=cfg.velocity_noise_scale), selection, cfg,
                        dict(meta or {}))
