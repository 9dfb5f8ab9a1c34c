"""Exact probability objects and the information quantities defined on them.

Distributions, channels and perturbations are validated once at construction
and are immutable afterwards; every operation below is a pure function, so
concurrent use needs no locking. All divergences and mutual informations are
returned in nats (natural log); unit conversion is a display concern.

A perturbation direction J moves a base distribution P to P + eps*J. Its
weighted counterpart L(x) = J(x)/sqrt(P(x)) lives in plain Euclidean
geometry: ||J||^2_P == ||L||^2, which is what makes the second-order
divergence picture linear-algebraic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidEpsilon,
    NonPositiveEntry,
    NotNormalized,
)

# Mass-sum tolerance accepted on user input; internal constructions (channel
# push-forward, tensor powers) preserve mass to much better than this.
NORM_TOL = 1e-9
# Tolerance for a perturbation direction's entries summing to zero.
ZERO_SUM_TOL = 1e-12
# Tolerance for a weighted perturbation's overlap with sqrt(base).
ORTHO_TOL = 1e-10


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbDist:
    """A strictly positive probability vector over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))
        p = self.probs
        if p.ndim != 1 or p.size == 0:
            raise DimensionMismatch("probability vector must be 1-D and nonempty")
        if np.any(p <= 0.0):
            idx = int(np.argmin(p))
            raise NonPositiveEntry(
                f"probability at symbol {idx} is {p[idx]:.6g}; "
                "all entries must be strictly positive"
            )
        total = float(p.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise NotNormalized(f"probabilities sum to {total:.12g}, not 1")

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.probs)

    def close_to(self, other: "ProbDist", tol: float = 1e-12) -> bool:
        return self.alphabet_size == other.alphabet_size and bool(
            np.all(np.abs(self.probs - other.probs) <= tol)
        )


def validate_dist(raw) -> ProbDist:
    """Validate a raw vector as a distribution. Never renormalizes."""
    arr = np.asarray(raw, dtype=float)
    if arr.size == 0:
        raise DimensionMismatch("empty probability vector")
    return ProbDist(arr)


@dataclass(frozen=True)
class Channel:
    """A column-stochastic conditional probability matrix.

    Column x holds P(Y|X=x), so pushing a distribution through the channel is
    the literal matrix-vector product `matrix @ p`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        w = self.matrix
        if w.ndim != 2 or w.size == 0:
            raise DimensionMismatch("channel matrix must be 2-D and nonempty")
        if np.any(w < 0.0):
            y, x = np.unravel_index(int(np.argmin(w)), w.shape)
            raise NonPositiveEntry(
                f"channel entry ({y},{x}) is {w[y, x]:.6g}; entries must be >= 0"
            )
        sums = w.sum(axis=0)
        bad = np.abs(sums - 1.0) > NORM_TOL
        if np.any(bad):
            x = int(np.argmax(bad))
            raise NotNormalized(
                f"channel column {x} sums to {sums[x]:.12g}, not 1"
            )

    @property
    def input_size(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Perturbation:
    """An additive direction J away from a base distribution, with scale eps."""

    base: ProbDist
    direction: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "direction", _readonly(self.direction))
        j = self.direction
        if j.shape != self.base.probs.shape:
            raise DimensionMismatch(
                f"direction has {j.size} entries, base has {self.base.alphabet_size}"
            )
        if abs(float(j.sum())) > ZERO_SUM_TOL:
            raise NotNormalized(
                f"perturbation entries sum to {float(j.sum()):.3e}, not 0"
            )
        if self.epsilon < 0:
            raise InvalidEpsilon(f"epsilon must be nonnegative, got {self.epsilon}")
        q = self.base.probs + self.epsilon * j
        if np.any(q <= 0.0):
            idx = int(np.argmin(q))
            raise InvalidEpsilon(
                f"eps={self.epsilon:g} drives symbol {idx} to {q[idx]:.6g} <= 0"
            )

    def perturbed(self) -> ProbDist:
        return ProbDist(self.base.probs + self.epsilon * self.direction)


@dataclass(frozen=True)
class ScaledPerturbation:
    """A perturbation divided componentwise by sqrt(base).

    The vector is orthogonal to sqrt(base), which is the Euclidean image of
    the mass-preservation constraint sum(J) = 0.
    """

    base: ProbDist
    vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vec", _readonly(self.vec))
        if self.vec.shape != self.base.probs.shape:
            raise DimensionMismatch(
                f"vector has {self.vec.size} entries, base has {self.base.alphabet_size}"
            )
        overlap = float(self.vec @ self.base.sqrt())
        if abs(overlap) > ORTHO_TOL * max(1.0, float(np.linalg.norm(self.vec))):
            raise NotNormalized(
                f"weighted perturbation overlaps sqrt(base) by {overlap:.3e}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def scale(p: Perturbation) -> ScaledPerturbation:
    """Map a direction J to its weighted version L = J / sqrt(base)."""
    return ScaledPerturbation(p.base, p.direction / p.base.sqrt())


def unscale(l: ScaledPerturbation) -> np.ndarray:
    """Recover the additive direction J = L * sqrt(base)."""
    return l.vec * l.base.sqrt()


def kl_divergence(p: ProbDist, q: ProbDist) -> float:
    """Kullback-Leibler divergence sum_x p(x) ln(p(x)/q(x)), in nats."""
    if p.alphabet_size != q.alphabet_size:
        raise DimensionMismatch(
            f"alphabets differ: {p.alphabet_size} vs {q.alphabet_size}"
        )
    val = float(np.sum(p.probs * np.log(p.probs / q.probs)))
    # Guard against -1e-17 style round-off on nearly equal inputs.
    return max(val, 0.0)


def push_forward(w: Channel, p: ProbDist) -> ProbDist:
    """Output distribution W @ p of a channel applied to an input distribution."""
    if w.input_size != p.alphabet_size:
        raise DimensionMismatch(
            f"channel expects {w.input_size} input symbols, got {p.alphabet_size}"
        )
    out = w.matrix @ p.probs
    if np.any(out <= 0.0):
        idx = int(np.argmin(out))
        raise NonPositiveEntry(
            f"output symbol {idx} has probability {out[idx]:.6g}; "
            "whitening by the output distribution would be singular"
        )
    return ProbDist(out)


def exact_mutual_information(weights, conditionals) -> float:
    """I(U;X) computed exactly as the weighted divergence to the marginal.

    `weights` must form a distribution over u; `conditionals` is one
    distribution per u over a common alphabet.
    """
    w = validate_dist(weights)
    conds = list(conditionals)
    if len(conds) != w.alphabet_size:
        raise DimensionMismatch(
            f"{w.alphabet_size} weights but {len(conds)} conditionals"
        )
    n = conds[0].alphabet_size
    if any(c.alphabet_size != n for c in conds):
        raise DimensionMismatch("conditionals live on different alphabets")
    marginal = ProbDist(
        np.sum([wu * c.probs for wu, c in zip(w.probs, conds)], axis=0)
    )
    return float(
        sum(wu * kl_divergence(c, marginal) for wu, c in zip(w.probs, conds))
    )


def weighted_inner_product(j1, j2, p: ProbDist) -> float:
    """Inner product sum_x j1(x) j2(x) / p(x) of two perturbation directions."""
    a = np.asarray(j1, dtype=float)
    b = np.asarray(j2, dtype=float)
    if a.shape != b.shape or a.shape != p.probs.shape:
        raise DimensionMismatch("directions and weights must share one alphabet")
    return float(np.sum(a * b / p.probs))
