"""Core data model: channel layouts, interactions, basis spaces and latent states.

Everything here is an immutable value object.  Arrays handed to the
constructors are copied and marked read-only, so instances can be shared
freely between sessions.

Vector layouts (latent weights, ensemble members, observation vectors) always
follow the channel order of the owning :class:`SensorLayout`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MODALITIES = ("joint", "force", "pose")
ROLES = ("observed", "controlled")


class LayoutError(ValueError):
    """Raised when a channel layout breaks one of its invariants."""


class InvalidInteraction(ValueError):
    """Raised by :func:`validate_interaction`; ``problems`` lists every violation."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid interaction: " + "; ".join(self.problems))


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ChannelSpec:
    """One degree of freedom.

    ``modality`` is one of ``joint`` (radians), ``force`` (raw sensor units)
    or ``pose`` (normalized image coordinates); ``role`` is ``observed``
    (partner side, available at run time) or ``controlled`` (robot side).
    """

    name: str
    modality: str
    role: str
    group_id: str | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise LayoutError(f"channel {self.name!r}: unknown modality {self.modality!r}")
        if self.role not in ROLES:
            raise LayoutError(f"channel {self.name!r}: unknown role {self.role!r}")
        if self.group_id is not None and self.modality != "force":
            raise LayoutError(f"channel {self.name!r}: only force channels may carry a group_id")

    @property
    def observed(self) -> bool:
        return self.role == "observed"

    def to_dict(self) -> dict:
        return {"name": self.name, "modality": self.modality, "role": self.role,
                "group_id": self.group_id}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        return cls(d["name"], d["modality"], d["role"], d.get("group_id"))


@dataclass(frozen=True)
class SensorLayout:
    """Ordered, frozen tuple of channels; the order is authoritative everywhere."""

    channels: tuple[ChannelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        names = [c.name for c in self.channels]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise LayoutError(f"duplicate channel names: {dup}")
        if not any(c.observed for c in self.channels):
            raise LayoutError("layout has no observed channel")
        if all(c.observed for c in self.channels):
            raise LayoutError("layout has no controlled channel")

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown channel {name!r}") from None

    def indices(self, names: Iterable[str]) -> list[int]:
        return [self.index(n) for n in names]

    @property
    def observed(self) -> list[int]:
        return [k for k, c in enumerate(self.channels) if c.role == "observed"]

    @property
    def controlled(self) -> list[int]:
        return [k for k, c in enumerate(self.channels) if c.role == "controlled"]

    def select(self, keep: Sequence[int]) -> "SensorLayout":
        """Sub-layout keeping channel indices ``keep`` in their original order."""
        keep = sorted(set(keep))
        return SensorLayout(tuple(self.channels[k] for k in keep))

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self.channels]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "SensorLayout":
        return cls(tuple(ChannelSpec.from_dict(d) for d in items))


@dataclass(frozen=True)
class Interaction:
    """A demonstration: ``samples`` has shape ``(T, D)``, one row per step.

    ``columns`` records the channel names the data arrived with (e.g. a table
    header); it defaults to the layout order and is checked against it by
    :func:`validate_interaction`.
    """

    layout: SensorLayout
    samples: np.ndarray
    timestep: float = 1.0 / 30.0
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(np.atleast_2d(self.samples)))
        cols = self.layout.names if self.columns is None else tuple(self.columns)
        object.__setattr__(self, "columns", cols)

    @property
    def T(self) -> int:
        return self.samples.shape[0]

    @property
    def D(self) -> int:
        return self.samples.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.samples[:, self.layout.index(name)]

    def phases(self) -> np.ndarray:
        """Linear phase of every step, ``t / (T - 1)``."""
        return np.linspace(0.0, 1.0, self.T)

    def select(self, keep: Sequence[int]) -> "Interaction":
        keep = sorted(set(keep))
        return Interaction(self.layout.select(keep), self.samples[:, keep], self.timestep)


def validate_interaction(i: Interaction) -> Interaction:
    """Return ``i`` unchanged if it is structurally sound, else raise.

    All violations are collected before raising :class:`InvalidInteraction`.
    """
    problems = []
    try:
        samples = np.asarray(i.samples, dtype=float)
    except (TypeError, ValueError):
        raise InvalidInteraction(["samples are not numeric"]) from None
    if samples.ndim != 2:
        raise InvalidInteraction([f"samples must be 2-D (T, D), got shape {samples.shape}"])
    T, D = samples.shape
    if D != len(i.layout):
        problems.append(f"channel count mismatch: layout has {len(i.layout)}, samples have {D}")
    if tuple(i.columns) != i.layout.names:
        problems.append("channel order disagrees with layout")
    if T < 2:
        problems.append(f"series too short: T={T} (need T >= 2)")
    bad = np.argwhere(~np.isfinite(samples))
    for t, d in bad[:20]:
        name = i.layout.names[d] if d < len(i.layout) else str(d)
        problems.append(f"non-finite value at (channel {d} {name!r}, step {t})")
    if len(bad) > 20:
        problems.append(f"... {len(bad) - 20} more non-finite values")
    if not (np.isfinite(i.timestep) and i.timestep > 0):
        problems.append(f"timestep must be positive, got {i.timestep}")
    if problems:
        raise InvalidInteraction(problems)
    return i


def phase_of(t: int, T: int) -> float:
    """Relative phase of step ``t`` in a series of length ``T``."""
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if not 0 <= t <= T - 1:
        raise ValueError(f"step {t} outside [0, {T - 1}]")
    return t / (T - 1)


@dataclass(frozen=True, eq=False)
class BasisSpace:
    """Gaussian basis centers (phase units) and one width per channel."""

    centers: tuple[np.ndarray, ...]
    widths: tuple[float, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        centers = tuple(_frozen(np.atleast_1d(c)) for c in self.centers)
        widths = tuple(float(w) for w in self.widths)
        if len(centers) != len(widths):
            raise ValueError("centers and widths must have one entry per channel")
        for d, (c, w) in enumerate(zip(centers, widths)):
            if c.size < 1:
                raise ValueError(f"channel {d}: empty basis")
            if np.any(np.diff(c) < 0) or c[0] < 0 or c[-1] > 1:
                raise ValueError(f"channel {d}: centers must be sorted within [0, 1]")
            if not w > 0:
                raise ValueError(f"channel {d}: width must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", widths)
        sizes = np.array([c.size for c in centers], dtype=int)
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(self, "_offsets", np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def n_channels(self) -> int:
        return len(self.centers)

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def total(self) -> int:
        return int(self._offsets[-1])

    def segment(self, d: int) -> slice:
        return slice(int(self._offsets[d]), int(self._offsets[d + 1]))

    def stacked(self, channels: Sequence[int]):
        """Concatenated ``(centers, widths, weight_index, segment_starts)`` for ``channels``.

        Used to evaluate many channels with one vectorized kernel.
        """
        key = tuple(int(d) for d in channels)
        hit = self._cache.get(key)
        if hit is None:
            c = np.concatenate([self.centers[d] for d in key])
            w = np.concatenate([np.full(self.centers[d].size, self.widths[d]) for d in key])
            idx = np.concatenate([np.arange(self._offsets[d], self._offsets[d + 1]) for d in key])
            starts = np.concatenate([[0], np.cumsum([self.centers[d].size for d in key])[:-1]])
            hit = (c, w, idx, starts.astype(int))
            self._cache[key] = hit
        return hit

    def select(self, keep: Sequence[int]) -> "BasisSpace":
        return BasisSpace(tuple(self.centers[d] for d in keep), tuple(self.widths[d] for d in keep))

    def __eq__(self, other):
        if not isinstance(other, BasisSpace):
            return NotImplemented
        return self.widths == other.widths and len(self.centers) == len(other.centers) and all(
            np.array_equal(a, b) for a, b in zip(self.centers, other.centers))

    __hash__ = object.__hash__

    def to_dict(self) -> dict:
        return {"centers": [c.tolist() for c in self.centers], "widths": list(self.widths)}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpace":
        return cls(tuple(np.asarray(c, dtype=float) for c in d["centers"]), tuple(d["widths"]))


@dataclass(frozen=True, eq=False)
class LatentModel:
    """Concatenated basis weights of one demonstration."""

    weights: np.ndarray
    basis: BasisSpace

    def __post_init__(self):
        w = _frozen(self.weights).ravel()
        if w.size != self.basis.total:
            raise ValueError(f"weights have length {w.size}, basis expects {self.basis.total}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)

    def channel_weights(self, d: int) -> np.ndarray:
        return self.weights[self.basis.segment(d)]


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """``members`` is ``(E, 2 + B)``: phase, phase velocity, then weights.

    ``process_noise`` is the diagonal of Q (length ``2 + B``);
    ``measurement_noise`` holds one variance per entry of ``observed``,
    the basis channel indices visible at run time.
    """

    members: np.ndarray
    process_noise: np.ndarray
    measurement_noise: np.ndarray
    basis: BasisSpace
    observed: tuple[int, ...]

    def __post_init__(self):
        m = _frozen(self.members)
        if m.ndim != 2 or m.shape[0] < 2:
            raise ValueError("ensemble needs at least 2 members")
        if m.shape[1] != 2 + self.basis.total:
            raise ValueError(f"member dimension {m.shape[1]} != 2 + {self.basis.total}")
        if np.any(m[:, 0] < 0) or np.any(m[:, 0] > 1) or np.any(m[:, 1] < 0):
            raise ValueError("member phases must lie in [0, 1] and velocities be >= 0")
        q = _frozen(self.process_noise)
        r = _frozen(np.broadcast_to(self.measurement_noise, (len(self.observed),)))
        if q.shape != (m.shape[1],):
            raise ValueError("process_noise must be the diagonal of Q")
        if np.any(q < 0) or np.any(r < 0):
            raise ValueError("noise variances must be >= 0")
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "process_noise", q)
        object.__setattr__(self, "measurement_noise", r)
        object.__setattr__(self, "observed", tuple(int(d) for d in self.observed))

    @property
    def E(self) -> int:
        return self.members.shape[0]

    @property
    def phase(self) -> np.ndarray:
        return self.members[:, 0]

    @property
    def velocity(self) -> np.ndarray:
        return self.members[:, 1]

    @property
    def weights(self) -> np.ndarray:
        return self.members[:, 2:]

    def replace(self, members: np.ndarray) -> "EnsembleState":
        return EnsembleState(members, self.process_noise, self.measurement_noise,
                             self.basis, self.observed)
