"""Ensemble Bayesian filtering over the augmented state ``[phase, velocity, weights]``.

The posterior over the latent interaction is carried by an ensemble seeded
with the training demonstrations.  ``predict`` advances every member with a
constant-velocity model plus Gaussian process noise; ``update`` applies the
stochastic (perturbed observation) ensemble Kalman update, with the
observation operator decoding each member's weights at its own phase.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .basis import decode_series
from .model import BasisSpace, EnsembleState, LatentModel

R_FLOOR = 1e-6


class FilterError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ProcessNoise:
    """Diagonal process noise Q, as variances per step.

    ``velocity=None`` means ``(velocity_scale / mean demo length)^2``.
    """

    phase: float = 0.0
    velocity: float | None = None
    weights: float = 0.0
    velocity_scale: float = 0.1

    def diagonal(self, n_weights: int, mean_length: float) -> np.ndarray:
        v = (self.velocity_scale / mean_length) ** 2 if self.velocity is None else self.velocity
        return np.concatenate([[self.phase, v], np.full(n_weights, self.weights)])


@dataclass(frozen=True)
class ObservationFrame:
    """Values of the observed channels at one step; ``mask`` flags availability."""

    values: np.ndarray
    mask: np.ndarray
    step_duration: float = 1.0 / 30.0

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool).ravel()
        vals = np.array(self.values, dtype=float).ravel()
        if vals.shape != mask.shape:
            raise ValueError("values and mask must have the same length")
        vals = np.where(mask, vals, np.nan)
        if not np.all(np.isfinite(vals[mask])):
            raise ValueError("available observations must be finite")
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_values(cls, values, step_duration: float = 1.0 / 30.0) -> "ObservationFrame":
        """Frame whose mask is the set of finite entries of ``values``."""
        values = np.asarray(values, dtype=float)
        return cls(values, np.isfinite(values), step_duration)


@dataclass(frozen=True)
class InferenceOutput:
    phase: float
    phase_velocity: float
    decoded: np.ndarray  # all channels, at phase + look_ahead
    look_ahead: float


def init_ensemble(demos: Sequence[LatentModel], lengths: Sequence[int], q: ProcessNoise,
                  r, observed: Sequence[int]) -> EnsembleState:
    """One member per demonstration: ``[0, 1 / T_j, w_j]``."""
    if len(demos) < 2:
        raise ValueError("need at least 2 demonstrations")
    if len(demos) != len(lengths):
        raise ValueError("one length per demonstration required")
    basis = demos[0].basis
    if any(m.basis != basis for m in demos):
        raise ValueError("demonstrations use different basis spaces")
    lengths = np.asarray(lengths, dtype=float)
    W = np.vstack([m.weights for m in demos])
    members = np.column_stack([np.zeros(len(demos)), 1.0 / lengths, W])
    Q = q.diagonal(basis.total, float(lengths.mean()))
    R = np.broadcast_to(np.asarray(r, dtype=float), (len(observed),))
    return EnsembleState(members, Q, R, basis, tuple(observed))


def observe(basis: BasisSpace, members: np.ndarray, channels: Sequence[int]) -> np.ndarray:
    """Observation operator: every member decoded at its own phase, shape ``(E, len(channels))``."""
    c, w, idx, starts = basis.stacked(channels)
    z = (np.clip(members[:, :1], 0.0, 1.0) - c) / w
    act = np.exp(-0.5 * z * z) * members[:, 2 + idx]
    return np.add.reduceat(act, starts, axis=1)


def _clamp(members: np.ndarray) -> np.ndarray:
    np.clip(members[:, 0], 0.0, 1.0, out=members[:, 0])
    np.maximum(members[:, 1], 0.0, out=members[:, 1])
    return members


def predict(s: EnsembleState, rng: np.random.Generator | None = None) -> EnsembleState:
    """Constant-velocity step plus N(0, Q); phase clamped to [0, 1], velocity to >= 0."""
    x = np.array(s.members)
    x[:, 0] = np.clip(x[:, 0] + x[:, 1], 0.0, 1.0)
    sd = np.sqrt(s.process_noise)
    nz = np.flatnonzero(sd)
    if nz.size:
        if rng is None:
            rng = np.random.default_rng()
        x[:, nz] += rng.standard_normal((x.shape[0], nz.size)) * sd[nz]
    return s.replace(_clamp(x))


def _update(s: EnsembleState, obs: ObservationFrame, rng: np.random.Generator):
    mask = obs.mask
    if mask.shape != (len(s.observed),):
        raise ValueError(f"frame has {mask.size} channels, ensemble observes {len(s.observed)}")
    if not mask.any():
        raise ValueError("frame has no available channel; skip the update")
    chans = [d for d, m in zip(s.observed, mask) if m]
    y = obs.values[mask]
    R = s.measurement_noise[mask]
    x = np.array(s.members)
    E = x.shape[0]
    hx = observe(s.basis, x, chans)
    xa = x - x.mean(axis=0)
    ha = hx - hx.mean(axis=0)
    cxy = xa.T @ ha / (E - 1)
    cyy = ha.T @ ha / (E - 1) + np.diag(R)
    try:
        factor = cho_factor(cyy)
    except LinAlgError:
        raise FilterError("innovation covariance is singular; set measurement noise R > 0") from None
    y_pert = y + rng.standard_normal((E, y.size)) * np.sqrt(R)
    gain_t = cho_solve(factor, cxy.T)  # K^T, shape (m, n)
    x += (y_pert - hx) @ gain_t
    innovation = np.full(mask.size, np.nan)
    innovation[mask] = y - hx.mean(axis=0)
    return s.replace(_clamp(x)), innovation


def update(s: EnsembleState, obs: ObservationFrame,
           rng: np.random.Generator | None = None) -> EnsembleState:
    """Perturbed-observation ensemble Kalman update on the available channels."""
    return _update(s, obs, np.random.default_rng() if rng is None else rng)[0]


def mean_model(s: EnsembleState) -> LatentModel:
    return LatentModel(s.weights.mean(axis=0), s.basis)


def infer(s: EnsembleState, look_ahead: float = 0.0) -> InferenceOutput:
    """Decode the ensemble mean at ``clamp(mean phase + look_ahead)``."""
    if look_ahead < 0:
        raise ValueError("look_ahead must be >= 0")
    phase = float(s.phase.mean())
    target = min(max(phase + look_ahead, 0.0), 1.0)
    decoded = decode_series(mean_model(s), [target])[0]
    return InferenceOutput(phase, float(s.velocity.mean()), decoded, float(look_ahead))


@dataclass(frozen=True)
class Step:
    index: int
    state: EnsembleState
    innovation: np.ndarray  # observed channels; NaN where masked or not updated


def filter_steps(s: EnsembleState, frames: Sequence[ObservationFrame],
                 rng: np.random.Generator) -> Iterator[Step]:
    """Run the recursion and yield the posterior after every frame.

    The initial ensemble already sits at the first frame's phase, so the
    prediction step starts with the second frame.  Fully masked frames are
    prediction-only.
    """
    for k, frame in enumerate(frames):
        if k > 0:
            s = predict(s, rng)
        if frame.mask.any():
            s, innovation = _update(s, frame, rng)
        else:
            innovation = np.full(frame.mask.size, np.nan)
        yield Step(k, s, innovation)


def run_session(s: EnsembleState, frames: Sequence[ObservationFrame], look_ahead: float = 0.0,
                seed: int | None = 0) -> list[InferenceOutput]:
    if len(frames) == 0:
        raise ValueError("no frames")
    rng = np.random.default_rng(seed)
    return [infer(step.state, look_ahead) for step in filter_steps(s, frames, rng)]
