"""Synthetic hug-like demonstrations with known ground truth.

Layout (in channel order): robot joints (controlled), partner pose markers
(observed, x/y per marker), torso force sensors (observed inputs) and arm
force sensors (controlled outputs, tagged ``larm``/``rarm``).  Force sensors
are split into groups of neighbouring sensors.

Every demo is generated on a latent phase ``u`` that is a monotone warp of the
linear step phase.  Forces are raised-cosine bumps supported on the contact
window.  Two designated torso sensors are always in contact and the
magnitude of every arm group is an affine function of their magnitudes, so
the informative inputs are known exactly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .filtering import ObservationFrame
from .model import ChannelSpec, Interaction, SensorLayout
from .sparsity import GroupMap

EDGE_CASES = ("do-nothing", "delay-before-hug", "delay-after-raise", "hug-air", "hug-no-contact")
NOISE_FLOOR = 0.5  # raw units; inactive force sensors stay below this
PEAK_FORCE = 40.0  # raw units at amplitude_scale 1
_LAYOUT_SEED = 1729

_MARKERS = ("neck", "hip", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist")


@dataclass(frozen=True)
class ScenarioConfig:
    n_joints: int = 12
    n_force_sensors: int = 61
    n_groups: int = 16
    n_pose: int = 8  # markers; two channels (x, y) each
    duration_steps: tuple = (80, 130)
    contact_window: tuple = (0.35, 0.65)
    amplitude_scale: float = 1.0
    body_jitter: float = 0.2  # per-demo spread of amplitude_scale in datasets
    warp: float = 0.3
    active_fraction: float = 0.3  # chance a non-designated torso sensor is touched
    seed: int = 0
    n_demos: int = 121
    timestep: float = 1.0 / 30.0

    def __post_init__(self):
        object.__setattr__(self, "duration_steps", tuple(int(v) for v in self.duration_steps))
        object.__setattr__(self, "contact_window", tuple(float(v) for v in self.contact_window))
        lo, hi = self.duration_steps
        a, b = self.contact_window
        problems = []
        if lo < 50 or hi < lo:
            problems.append("duration_steps must satisfy 50 <= min <= max")
        if not 0.0 <= a < b <= 1.0:
            problems.append("contact_window must lie inside [0, 1]")
        if not self.amplitude_scale > 0:
            problems.append("amplitude_scale must be > 0")
        if not 0.0 <= self.warp < 1.0:
            problems.append("warp must lie in [0, 1)")
        if not 0.0 <= self.body_jitter < 1.0:
            problems.append("body_jitter must lie in [0, 1)")
        if self.n_groups < 4 or self.n_force_sensors < self.n_groups:
            problems.append("need n_groups >= 4 and at least one sensor per group")
        if self.n_joints < 1 or self.n_pose < 1 or self.n_pose > len(_MARKERS):
            problems.append(f"need n_joints >= 1 and 1 <= n_pose <= {len(_MARKERS)}")
        if self.n_demos < 1:
            problems.append("n_demos must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["duration_steps"] = list(self.duration_steps)
        d["contact_window"] = list(self.contact_window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class LayoutInfo:
    layout: SensorLayout
    groups: GroupMap
    informative: tuple[str, ...]


def build_layout(c: ScenarioConfig) -> LayoutInfo:
    specs = []
    half = c.n_joints // 2
    for j in range(c.n_joints):
        side = "l" if j < half else "r"
        specs.append(ChannelSpec(f"joint_{side}{j if j < half else j - half}", "joint", "controlled"))
    for m in _MARKERS[:c.n_pose]:
        specs.append(ChannelSpec(f"pose_{m}_x", "pose", "observed"))
        specs.append(ChannelSpec(f"pose_{m}_y", "pose", "observed"))
    arm_groups = max(2, (c.n_groups // 2) // 2 * 2)
    sizes = [len(a) for a in np.array_split(np.arange(c.n_force_sensors), c.n_groups)]
    kinds = (["larm"] * (arm_groups // 2) + ["rarm"] * (arm_groups // 2)
             + ["torso"] * (c.n_groups - arm_groups))
    counters = {"larm": 0, "rarm": 0, "torso": 0}
    gcount = {"larm": 0, "rarm": 0, "torso": 0}
    torso, arm = [], []
    for kind, size in zip(kinds, sizes):
        gid = f"{kind}_g{gcount[kind]}"
        gcount[kind] += 1
        for _ in range(size):
            name = f"{kind}_s{counters[kind]:02d}"
            counters[kind] += 1
            role = "observed" if kind == "torso" else "controlled"
            (torso if kind == "torso" else arm).append(ChannelSpec(name, "force", role, gid))
    specs += torso + arm
    layout = SensorLayout(tuple(specs))
    groups = GroupMap.from_layout(layout)
    # one designated sensor on the chest (first torso group), one on the back (last)
    tg = sorted(g for g in groups.groups if g.startswith("torso"))
    informative = (groups.groups[tg[0]][0], groups.groups[tg[-1]][0])
    return LayoutInfo(layout, groups, informative)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _bump(u, window):
    a, b = window
    inside = (u >= a) & (u <= b)
    return np.where(inside, 0.5 * (1.0 - np.cos(2.0 * np.pi * (u - a) / (b - a))), 0.0)


@dataclass(frozen=True)
class DemoTruth:
    phase: np.ndarray  # latent phase of every step (the warp)
    informative: tuple[str, ...]
    contact_window: tuple
    active: tuple[str, ...]  # force channels in contact
    raise_end: float  # latent phase at which the arm raise completes
    amplitude_scale: float

    def to_dict(self) -> dict:
        return {"phase": self.phase.tolist(), "informative": list(self.informative),
                "contact_window": list(self.contact_window), "active": list(self.active),
                "raise_end": self.raise_end, "amplitude_scale": self.amplitude_scale}


def _layout_constants(info: LayoutInfo):
    """Demo-independent channel shapes (fixed seed)."""
    rng = np.random.default_rng(_LAYOUT_SEED)
    L = info.layout
    joints = [k for k, ch in enumerate(L.channels) if ch.modality == "joint"]
    pose = [k for k, ch in enumerate(L.channels) if ch.modality == "pose"]
    arm_groups = sorted(g for g in info.groups.groups if not g.startswith("torso"))
    return {
        "joint_base": rng.uniform(-0.5, 0.5, len(joints)),
        "joint_delta": rng.choice([-1.0, 1.0], len(joints)) * rng.uniform(0.4, 1.2, len(joints)),
        "pose_base": rng.uniform(0.3, 0.7, len(pose)),
        "pose_approach": np.where(np.arange(len(pose)) % 2 == 1, 0.12, 0.02)
        * rng.uniform(0.7, 1.3, len(pose)),
        "pose_raise": rng.choice([-1.0, 1.0], len(pose)) * rng.uniform(0.03, 0.12, len(pose)),
        # arm group magnitude = (c + alpha * u1 + beta * u2) * peak
        "arm_affine": {g: rng.uniform([0.1, 0.2, 0.2], [0.4, 0.9, 0.9]) for g in arm_groups},
    }


def _render(c: ScenarioConfig, info: LayoutInfo, *, contact: bool = True, approach: bool = True):
    """Generate one demo's samples and ground truth from ``c.seed``."""
    timing, motion, touch, noise = (np.random.default_rng(s)
                                    for s in np.random.SeedSequence(c.seed).spawn(4))
    const = _layout_constants(info)
    L = info.layout
    T = int(timing.integers(c.duration_steps[0], c.duration_steps[1] + 1))
    tau = np.linspace(0.0, 1.0, T)
    kappa = timing.uniform(-1.0, 1.0)
    u = tau + c.warp * kappa * np.sin(np.pi * tau) / np.pi

    out = np.zeros((T, len(L)))
    idx = {ch.name: k for k, ch in enumerate(L.channels)}
    by_mod = {m: [k for k, ch in enumerate(L.channels) if ch.modality == m]
              for m in ("joint", "pose", "force")}

    k_slope = 0.04
    r_c = 0.2 + 0.015 * motion.standard_normal()
    l_c = 0.8 + 0.015 * motion.standard_normal()
    arms = _sigmoid((u - r_c) / k_slope) - _sigmoid((u - l_c) / k_slope)
    jitter = 1.0 + 0.08 * motion.standard_normal(len(by_mod["joint"]))
    for n, k in enumerate(by_mod["joint"]):
        out[:, k] = const["joint_base"][n] + const["joint_delta"][n] * jitter[n] * arms
    # partner leads the raise and the release slightly
    p_arms = _sigmoid((u - (r_c - 0.03)) / k_slope) - _sigmoid((u - (l_c - 0.03)) / k_slope)
    walk = _sigmoid((u - 0.05) / k_slope) - _sigmoid((u - 0.93) / k_slope) if approach else 0.0 * u
    pj = 1.0 + 0.08 * motion.standard_normal(len(by_mod["pose"]))
    for n, k in enumerate(by_mod["pose"]):
        out[:, k] = (const["pose_base"][n] + const["pose_approach"][n] * pj[n] * walk
                     + const["pose_raise"][n] * pj[n] * p_arms)
    joint_noise = 0.005 * noise.standard_normal((T, len(by_mod["joint"])))
    pose_noise = 0.003 * noise.standard_normal((T, len(by_mod["pose"])))
    out[:, by_mod["joint"]] += joint_noise
    out[:, by_mod["pose"]] += pose_noise

    # forces: every sensor starts as inactive noise, active ones get a bump
    scale = c.amplitude_scale * PEAK_FORCE
    # idle sensors stay under the noise floor and under 1% of this demo's peak force
    cap = 0.9 * min(NOISE_FLOOR, 0.01 * scale)
    floor = np.minimum(np.abs(0.1 * noise.standard_normal((T, len(by_mod["force"])))), cap)
    force_eps = noise.standard_normal((T, len(by_mod["force"])))
    out[:, by_mod["force"]] = floor
    bump = _bump(u, c.contact_window)
    u1, u2 = touch.uniform(0.5, 1.5, 2)
    magnitude = {info.informative[0]: u1, info.informative[1]: u2}
    torso = [ch.name for ch in L.channels if ch.role == "observed" and ch.modality == "force"]
    draws = touch.uniform(0.0, 1.0, len(torso))
    mags = touch.uniform(0.3, 1.2, len(torso))
    for n, name in enumerate(torso):
        if name not in magnitude and draws[n] < c.active_fraction:
            magnitude[name] = mags[n]
    for g in sorted(const["arm_affine"]):
        c0, alpha, beta = const["arm_affine"][g]
        members = info.groups.groups[g]
        hit = members[int(touch.integers(len(members)))]
        magnitude[hit] = c0 + alpha * u1 + beta * u2
    active = []
    if contact:
        fpos = {k: n for n, k in enumerate(by_mod["force"])}
        for name, m in magnitude.items():
            k = idx[name]
            env = scale * m * bump
            out[:, k] = env * (1.0 + 0.01 * force_eps[:, fpos[k]])
            active.append(name)
    truth = DemoTruth(u, info.informative, c.contact_window, tuple(sorted(active)),
                      float(r_c + 3 * k_slope), c.amplitude_scale)
    return Interaction(L, out, c.timestep), truth


def generate_demo(c: ScenarioConfig, with_truth: bool = False):
    """One synthetic demonstration, bit-identical for a given config."""
    i, truth = _render(c, build_layout(c))
    return (i, truth) if with_truth else i


def demo_config(c: ScenarioConfig, k: int) -> ScenarioConfig:
    """Config of the k-th demo of a dataset: derived seed and body-size scale."""
    ss = np.random.SeedSequence([c.seed, k])
    seed = int(ss.generate_state(1)[0])
    body = np.random.default_rng(ss.spawn(1)[0]).uniform(1.0 - c.body_jitter, 1.0 + c.body_jitter)
    return replace(c, seed=seed, amplitude_scale=c.amplitude_scale * float(body))


@dataclass
class SyntheticDataset:
    layout: SensorLayout
    groups: GroupMap
    demos: list
    truth: list
    config: ScenarioConfig
    informative: tuple = field(default_factory=tuple)

    def ground_truth(self) -> dict:
        return {"informative": list(self.informative),
                "contact_window": list(self.config.contact_window),
                "demos": [t.to_dict() for t in self.truth]}


def generate_dataset(c: ScenarioConfig, n_demos: int | None = None) -> SyntheticDataset:
    info = build_layout(c)
    n = c.n_demos if n_demos is None else n_demos
    demos, truth = [], []
    for k in range(n):
        i, t = _render(demo_config(c, k), info)
        demos.append(i)
        truth.append(t)
    return SyntheticDataset(info.layout, info.groups, demos, truth, c, info.informative)


def _frames(samples: np.ndarray, observed: Sequence[int], dt: float) -> list[ObservationFrame]:
    return [ObservationFrame.from_values(row[observed], dt) for row in samples]


def generate_edge_case(kind: str, c: ScenarioConfig, delay: int = 200, hold: int = 100,
                       with_truth: bool = False):
    """Observed-channel frames for one of the edge-case behaviours in ``EDGE_CASES``.

    ``delay`` is the stall length for the delay cases; ``do-nothing`` lasts a
    normal demo plus ``hold`` steps.  With ``with_truth`` the stall onset step is
    returned as well (the first step at which the behaviour departs from a
    normal demo).
    """
    if kind not in EDGE_CASES:
        raise ValueError(f"unknown edge case {kind!r}; choose from {EDGE_CASES}")
    info = build_layout(c)
    obs = info.layout.observed
    normal, truth = _render(c, info)
    X = np.array(normal.samples)
    if kind == "do-nothing":
        X = np.repeat(X[:1], normal.T + hold, axis=0)
        onset = 0
    elif kind == "delay-before-hug":
        X = np.vstack([np.repeat(X[:1], delay, axis=0), X[1:]])
        onset = 0
    elif kind == "delay-after-raise":
        onset = int(np.searchsorted(truth.phase, truth.raise_end))
        X = np.vstack([X[:onset], np.repeat(X[onset:onset + 1], delay, axis=0), X[onset + 1:]])
    else:
        no_touch, _ = _render(c, info, contact=False, approach=(kind == "hug-no-contact"))
        X = np.array(no_touch.samples)
        onset = 0 if kind == "hug-air" else int(np.searchsorted(truth.phase, c.contact_window[0]))
    frames = _frames(X, obs, c.timestep)
    return (frames, onset) if with_truth else frames


def edge_case_interaction(kind: str, c: ScenarioConfig, delay: int = 200, hold: int = 100):
    """Like :func:`generate_edge_case` but as an Interaction over the full layout.

    Controlled channels are filled with NaN; use it to push edge cases through
    channel reductions before building frames.
    """
    info = build_layout(c)
    frames, onset = generate_edge_case(kind, c, delay, hold, with_truth=True)
    X = np.full((len(frames), len(info.layout)), np.nan)
    X[:, info.layout.observed] = np.vstack([f.values for f in frames])
    return X, info.layout, onset
