"""The windmill family: k receivers acting as equiangular rotations followed
by a projection onto one axis of a 2-D tangent plane.

Every receiver form is a rank-1 projection A_i = phi(angle_i) phi(angle_i)',
and together they tile the plane so tightly that no single direction
satisfies everyone: the three-receiver instance caps single directions at
1/4 while rotating the direction across k letters (or mixing 2k atoms)
reaches 1/2 for every receiver simultaneously.

Angle schedule: odd k walks the full circle in steps of 2*pi/k. For even
k >= 4 that would alias opposite rotations onto the same projection form
(cos^2 has period pi) and collapse the instance, so even k uses half-circle
steps of pi/k, which keeps the k forms distinct and equiangular. k = 2 is
kept at (0, pi) and flagged: both projections coincide and the max-min
degenerates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling_solver import (
    CouplingEnsemble,
    KLetterResult,
    MaxMinSolution,
    QuadraticForm,
    SolverOptions,
    k_letter_construction,
    maxmin_rank1,
    tangent_basis,
)
from .errors import InvalidK
from .prob_core import Channel, ProbDist


def direction(theta: float) -> np.ndarray:
    """Unit vector (cos theta, sin theta) in the tangent plane."""
    return np.array([np.cos(theta), np.sin(theta)])


@dataclass(frozen=True)
class WindmillInstance:
    k: int
    angles: np.ndarray
    forms: tuple
    degenerate: bool

    def frame_sum(self) -> np.ndarray:
        return np.sum([f.matrix for f in self.forms], axis=0)


def make_windmill(k: int) -> WindmillInstance:
    """Build the k-receiver rotated-projection instance on a 2-D tangent plane."""
    if k < 2:
        raise InvalidK(f"need at least 2 receivers, got {k}")
    if k == 2:
        angles = np.array([0.0, np.pi])
    elif k % 2 == 1:
        angles = 2.0 * np.pi * np.arange(k) / k
    else:
        angles = np.pi * np.arange(k) / k
    forms = tuple(
        QuadraticForm(np.outer(direction(a), direction(a)), np.eye(2))
        for a in angles
    )
    return WindmillInstance(k=k, angles=angles, forms=forms, degenerate=(k == 2))


def single_letter_value(w: WindmillInstance,
                        opts: SolverOptions | None = None) -> MaxMinSolution:
    """Best single direction, swept exhaustively over the plane and polished."""
    if opts is None:
        opts = SolverOptions(grid=100_000)
    return maxmin_rank1(w.forms, opts)


def multiletter_value(w: WindmillInstance, theta: float = 0.0) -> np.ndarray:
    """Per-receiver value of the rotating k-letter schedule starting at theta.

    Letter j carries the direction at angle theta + angles[j]; every receiver
    sees the same value 1/2, independent of theta.
    """
    if w.k < 3:
        raise InvalidK("the multi-letter schedule needs at least 3 receivers")
    dirs = np.stack([direction(theta + a) for a in w.angles])
    return k_letter_construction(w.forms, dirs).per_channel_values


def multiletter_construction(w: WindmillInstance, theta: float = 0.0) -> KLetterResult:
    """Full k-letter construction (values plus the binary +/- ensemble)."""
    if w.k < 3:
        raise InvalidK("the multi-letter schedule needs at least 3 receivers")
    dirs = np.stack([direction(theta + a) for a in w.angles])
    return k_letter_construction(w.forms, dirs)


def cardinality_solution(w: WindmillInstance, theta: float = 0.0) -> CouplingEnsemble:
    """The 2k-atom single-letter ensemble +/- phi(theta + angles[j]).

    Uniform weights 1/(2k); the +/- pairing preserves the marginal exactly,
    and every receiver sees efficiency 1/2.
    """
    if w.k < 3:
        raise InvalidK("the cardinality-2k ensemble needs at least 3 receivers")
    atoms = []
    for a in w.angles:
        d = direction(theta + a)
        atoms.extend([d, -d])
    weights = np.full(2 * w.k, 1.0 / (2 * w.k))
    return CouplingEnsemble(weights=weights, atoms=np.stack(atoms))


def ternary_channels() -> tuple:
    """Ternary-input channels realizing the three-receiver windmill exactly.

    Receiver i merges all symbols except symbol i; over the uniform input
    each whitened matrix acts on the tangent plane as the projection onto the
    direction at angle 0, 2*pi/3 or 4*pi/3. Returns (input_dist, channels).
    """
    px = ProbDist(np.full(3, 1.0 / 3.0))
    channels = []
    for sym in range(3):
        rows = np.zeros((2, 3))
        rows[0, sym] = 1.0
        rows[1, [s for s in range(3) if s != sym]] = 1.0
        channels.append(Channel(rows))
    return px, channels


def approx_rank1_channel(theta: float, gain: float = 0.5) -> tuple:
    """Synthesize a binary-output ternary channel whose tangent form is
    gain * phi(theta) phi(theta)'.

    Only gains up to 1/2 keep the channel valid for every theta, so this is
    an approximation of the unit-gain windmill projections: all max-min
    values scale by the common factor `gain`. Returns (input_dist, channel).
    """
    if not 0.0 < gain <= 0.5:
        raise InvalidK(f"gain must lie in (0, 0.5], got {gain}")
    px = ProbDist(np.full(3, 1.0 / 3.0))
    q = tangent_basis(px)
    rho = 0.5 * np.sqrt(3.0 * gain)
    shift = rho * (q @ direction(theta))
    top = np.clip(0.5 + shift, 0.0, 1.0)
    return px, Channel(np.vstack([top, 1.0 - top]))
