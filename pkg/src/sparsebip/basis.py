"""Gaussian radial basis decomposition over the phase domain.

Each channel ``d`` of an interaction is approximated as ``Phi_d(phase) @ w_d``
where ``Phi_d`` holds Gaussian bumps.  ``fit`` recovers the weights by
(ridge-regularized) least squares, ``decode`` maps weights back to channel
values, and ``ols_select`` picks a sparse, non-uniform set of centers with
orthogonal least squares (Chen, Cowan & Grant 1991).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import BasisSpace, Interaction, LatentModel, validate_interaction

DEFAULT_RIDGE = 1e-6
DEFAULT_OLS_CANDIDATES = 64


class FitError(ArithmeticError):
    pass


def gaussian(phase, centers, width) -> np.ndarray:
    """Activation matrix ``exp(-(phase - c)^2 / (2 width^2))``, shape ``(len(phase), len(c))``."""
    phase = np.asarray(phase, dtype=float)
    z = (phase[..., None] - np.asarray(centers, dtype=float)) / width
    return np.exp(-0.5 * z * z)


def basis_row(b: BasisSpace, channel: int, phase: float) -> np.ndarray:
    if not 0.0 <= phase <= 1.0:
        raise ValueError(f"phase {phase} outside [0, 1]")
    return gaussian(phase, b.centers[channel], b.widths[channel])


def uniform_basis(channels: int, B_per_channel, width_factor: float = 1.0) -> BasisSpace:
    """Evenly spaced centers on [0, 1] (inclusive); width = factor * spacing.

    ``B_per_channel`` is an int or one int per channel.  A single center sits
    at 0.5 and, having no spacing, gets width ``width_factor * 0.5``.
    """
    sizes = np.broadcast_to(np.asarray(B_per_channel, dtype=int), (channels,))
    centers, widths = [], []
    for B in sizes:
        if B < 1:
            raise ValueError("need at least one basis function per channel")
        if B == 1:
            centers.append(np.array([0.5]))
            widths.append(width_factor * 0.5)
        else:
            centers.append(np.linspace(0.0, 1.0, B))
            widths.append(width_factor / (B - 1))
    return BasisSpace(tuple(centers), tuple(widths))


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    model: LatentModel
    residual: np.ndarray  # per-channel RMS reconstruction error


def _solve(Phi: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    B = Phi.shape[1]
    if ridge > 0:
        A = np.vstack([Phi, np.sqrt(ridge) * np.eye(B)])
        rhs = np.vstack([Y, np.zeros((B, Y.shape[1]))])
    else:
        A, rhs = Phi, Y
    W, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < B:
        raise FitError(f"singular basis matrix (rank {rank} < {B}); use ridge > 0")
    return W


def fit(i: Interaction, b: BasisSpace, ridge: float = DEFAULT_RIDGE) -> DecompositionResult:
    """Per-channel ridge least squares of the interaction onto ``b``.

    Channels sharing identical centers and width are solved together.
    """
    validate_interaction(i)
    if b.n_channels != i.D:
        raise ValueError(f"basis has {b.n_channels} channels, interaction has {i.D}")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    phase = i.phases()
    weights = np.empty(b.total)
    residual = np.empty(i.D)
    groups: dict[tuple, list[int]] = {}
    for d in range(i.D):
        groups.setdefault((b.centers[d].tobytes(), b.widths[d]), []).append(d)
    for chans in groups.values():
        d0 = chans[0]
        Phi = gaussian(phase, b.centers[d0], b.widths[d0])
        Y = i.samples[:, chans]
        try:
            W = _solve(Phi, Y, ridge)
        except FitError as exc:
            raise FitError(f"channel {i.layout.names[d0]!r}: {exc}") from None
        residual[chans] = np.sqrt(np.mean((Y - Phi @ W) ** 2, axis=0))
        for k, d in enumerate(chans):
            weights[b.segment(d)] = W[:, k]
    return DecompositionResult(LatentModel(weights, b), residual)


def decode(m: LatentModel, phase: float, channels: Sequence[int] | None = None) -> np.ndarray:
    """Channel values at ``phase`` (clamped to [0, 1])."""
    b = m.basis
    if channels is None:
        channels = range(b.n_channels)
    phase = min(max(float(phase), 0.0), 1.0)
    return np.array([gaussian(phase, b.centers[d], b.widths[d]) @ m.channel_weights(d)
                     for d in channels])


def decode_series(m: LatentModel, phases, channels: Sequence[int] | None = None) -> np.ndarray:
    """Vectorized decode over many phases, shape ``(len(phases), len(channels))``."""
    b = m.basis
    if channels is None:
        channels = range(b.n_channels)
    phases = np.clip(np.asarray(phases, dtype=float), 0.0, 1.0)
    cols = [gaussian(phases, b.centers[d], b.widths[d]) @ m.channel_weights(d) for d in channels]
    return np.column_stack(cols) if cols else np.empty((phases.size, 0))


class OLSResult(NamedTuple):
    centers: np.ndarray  # in selection order
    ratios: np.ndarray  # error-reduction ratio of each selected center
    degenerate: bool  # True when the target had nothing to explain

    @property
    def sorted_centers(self) -> np.ndarray:
        return np.sort(self.centers)

    @property
    def unexplained(self) -> float:
        return float(1.0 - self.ratios.sum())


def ols_regressors(targets: Sequence[Interaction] | Interaction, channel: int,
                   candidate_centers, width: float):
    """Per-interaction regressor matrices and target vectors, as two lists."""
    if isinstance(targets, Interaction):
        targets = [targets]
    P, y = [], []
    for i in targets:
        validate_interaction(i)
        P.append(gaussian(i.phases(), candidate_centers, width))
        y.append(i.samples[:, channel])
    return P, y


def ols(P, y, tolerance: float, max_terms: int | None = None):
    """Greedy forward orthogonal least squares.

    ``P`` and ``y`` are a regressor matrix and target vector, or lists of them
    sharing the candidate columns.  In the list form every block keeps its own
    weights: blocks are orthogonalised separately and a candidate's
    error-reduction ratio is the energy it explains summed over blocks,
    divided by the total target energy.

    Returns ``(selected column indices, error-reduction ratios)``.  Columns that
    become numerically dependent on the selection are dropped from the pool.
    """
    if isinstance(P, np.ndarray) and P.ndim == 2:
        P, y = [P], [y]
    P = [np.array(p, dtype=float) for p in P]
    y = [np.asarray(v, dtype=float) for v in y]
    yy = sum(float(v @ v) for v in y)
    M = P[0].shape[1]
    limit = M if max_terms is None else min(M, max_terms)
    norms0 = [np.einsum("ij,ij->j", p, p) for p in P]
    total0 = sum(norms0)
    alive = total0 > 0
    selected, ratios = [], []
    while len(selected) < limit:
        norms = [np.einsum("ij,ij->j", p, p) for p in P]
        alive &= sum(norms) > 1e-10 * np.maximum(total0, 1e-300)
        if not alive.any():
            break
        err = np.zeros(M)
        for p, v, n, n0 in zip(P, y, norms, norms0):
            ok = alive & (n > 1e-10 * np.maximum(n0, 1e-300))
            proj = p.T @ v
            err += np.where(ok, proj * proj / np.where(ok, n, 1.0), 0.0)
        err = np.where(alive, err / yy, -np.inf)
        k = int(np.argmax(err))  # first maximum: lowest index wins ties
        selected.append(k)
        ratios.append(float(err[k]))
        alive[k] = False
        for p, n in zip(P, norms):
            if n[k] > 0:
                wk = p[:, k].copy()
                p -= np.outer(wk, (wk @ p) / n[k])
        if 1.0 - sum(ratios) < tolerance:
            break
    return np.array(selected, dtype=int), np.array(ratios)


def ols_select(i: Interaction | Sequence[Interaction], channel: int, candidate_centers,
               width: float, tolerance: float, max_terms: int | None = None) -> OLSResult:
    """Select Gaussian centers for ``channel`` by orthogonal least squares.

    Passing several interactions selects one basis shared by all of them, each
    interaction keeping its own weights.
    Stops once the unexplained fraction of ``y.y`` drops below ``tolerance``,
    after ``max_terms`` selections, or when the candidates run out.
    """
    candidate_centers = np.asarray(candidate_centers, dtype=float)
    if candidate_centers.size == 0:
        raise ValueError("no candidate centers")
    if not 0.0 < tolerance < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    P, y = ols_regressors(i, channel, candidate_centers, width)
    if all(np.ptp(v) == 0.0 for v in y):
        return OLSResult(np.empty(0), np.empty(0), True)
    idx, ratios = ols(P, y, tolerance, max_terms)
    return OLSResult(candidate_centers[idx], ratios, False)
