"""The divergence transition matrix and its singular structure.

For a channel W and input distribution P_X with output P_Y = W P_X, the
matrix B = diag(1/sqrt(P_Y)) W diag(sqrt(P_X)) carries weighted input
perturbations to weighted output perturbations. Its top singular value is 1
with right singular vector sqrt(P_X); everything orthogonal to that vector is
a valid perturbation direction, and the second singular value sets the best
achievable per-bit visibility of a thin information layer at the output.

This module also contains empirical certificates: tables showing that the
divergence really is quadratic to second order, that forward and reverse
divergences agree to that order, and that the output/input energy ratio never
beats the squared second singular value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonPositiveEntry,
    NumericalError,
    SingularOutput,
    ZeroPerturbation,
)
from .prob_core import (
    Channel,
    Perturbation,
    ProbDist,
    ScaledPerturbation,
    kl_divergence,
    push_forward,
    scale,
    weighted_inner_product,
    _readonly,
)

# Two non-top singular values closer than this are treated as one multiplet.
MULTIPLICITY_TOL = 1e-9
# Below this, the second singular value is reported as exactly zero and the
# channel flagged as locally useless.
USELESS_TOL = 1e-12
# Residual-decay acceptance ratio per halving of eps. Exact third-order decay
# gives 1/8 and symmetric cases 1/16; 0.3 leaves room for noise without
# accepting second-order residuals.
DECAY_RATIO_BOUND = 0.3
# Residuals below this are considered exhausted by round-off and pass the
# decay test vacuously.
DECAY_NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class Dtm:
    """Divergence transition matrix with its input/output distributions."""

    matrix: np.ndarray
    input_dist: ProbDist
    output_dist: ProbDist
    channel: Channel

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        b = self.matrix
        if b.shape != (self.output_dist.alphabet_size, self.input_dist.alphabet_size):
            raise DimensionMismatch("matrix shape disagrees with the distributions")
        rebuilt = (
            self.channel.matrix
            * self.input_dist.sqrt()[None, :]
            / self.output_dist.sqrt()[:, None]
        )
        if not np.allclose(b, rebuilt, atol=1e-12, rtol=0.0):
            raise DimensionMismatch(
                "matrix is not the whitened form of the stored channel"
            )
        svals = np.linalg.svd(b, compute_uv=False)
        if abs(svals[0] - 1.0) > 1e-9:
            raise NumericalError(
                f"top singular value is {svals[0]:.12g}, expected 1"
            )

    @property
    def input_size(self) -> int:
        return self.input_dist.alphabet_size

    @property
    def output_size(self) -> int:
        return self.output_dist.alphabet_size


def build_dtm(w: Channel, px: ProbDist) -> Dtm:
    """Whiten a channel by its input and output distributions."""
    try:
        py = push_forward(w, px)
    except NonPositiveEntry as exc:
        raise SingularOutput(str(exc)) from exc
    b = w.matrix * px.sqrt()[None, :] / py.sqrt()[:, None]
    return Dtm(b, px, py, w)


@dataclass(frozen=True)
class SvdResult:
    """Full singular value decomposition under a deterministic sign convention.

    `right_vectors` and `left_vectors` are complete orthonormal bases of the
    input and output spaces (columns); `singular_values` has min(|Y|,|X|)
    entries sorted descending. Each right vector's largest-magnitude entry is
    positive, ties broken by lowest index, and the matching left vector is
    flipped along with it.
    """

    singular_values: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray

    def __post_init__(self):
        for name in ("singular_values", "right_vectors", "left_vectors"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def reconstruct(self) -> np.ndarray:
        r = self.singular_values.size
        return (
            self.left_vectors[:, :r]
            * self.singular_values[None, :]
        ) @ self.right_vectors[:, :r].T

    def padded_values(self) -> np.ndarray:
        """Singular values padded with zeros to the input-space dimension."""
        n = self.right_vectors.shape[0]
        out = np.zeros(n)
        out[: self.singular_values.size] = self.singular_values
        return out


def tangent_basis(px: ProbDist) -> np.ndarray:
    """Deterministic orthonormal basis of the directions orthogonal to sqrt(px).

    Gram-Schmidt over the standard basis, lowest index first, seeded with
    sqrt(px); columns of the result span the valid perturbation directions.
    """
    root = px.sqrt()
    m = root.size
    cols = [root]
    for idx in range(m):
        if len(cols) == m:
            break
        v = np.zeros(m)
        v[idx] = 1.0
        for _ in range(2):  # twice for orthogonality at the 1e-15 level
            for c in cols:
                v = v - (c @ v) * c
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            cols.append(v / nrm)
    return np.column_stack(cols[1:])


def _apply_sign_convention(u: np.ndarray, v: np.ndarray):
    for j in range(v.shape[1]):
        col = v[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            v[:, j] = -col
            if j < u.shape[1]:
                u[:, j] = -u[:, j]
    return u, v


def svd(d: Dtm) -> SvdResult:
    """SVD of the divergence transition matrix, deterministically oriented."""
    try:
        u, s, vt = np.linalg.svd(d.matrix, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    v = vt.T
    u, v = _apply_sign_convention(u, v)
    result = SvdResult(s, v, u)
    # Reconstruction is an invariant of the decomposition, not of the input.
    assert np.linalg.norm(result.reconstruct() - d.matrix) <= 1e-9
    return result


@dataclass(frozen=True)
class LocalCapacity:
    """Second singular value of a DTM with its direction and degeneracy."""

    sigma: float
    direction: ScaledPerturbation
    multiplicity: int
    locally_useless: bool

    @property
    def efficiency(self) -> float:
        """Squared second singular value: the best per-bit coupling ratio."""
        return self.sigma * self.sigma


def local_capacity(d: Dtm) -> LocalCapacity:
    """Second singular value, its right singular vector, and its multiplicity.

    Works on the tangent-restricted Gram form, so the returned direction is
    orthogonal to sqrt(P_X) even when the top singular value is degenerate
    (e.g. a lossless channel, where every singular value is 1).
    """
    if d.input_size < 2:
        raise DimensionMismatch("input alphabet must have at least 2 symbols")
    q = tangent_basis(d.input_dist)
    bq = d.matrix @ q
    gram = bq.T @ bq
    eigs, vecs = np.linalg.eigh(0.5 * (gram + gram.T))
    tangent_sigmas = np.sqrt(np.clip(eigs, 0.0, None))
    sigma = float(tangent_sigmas[-1])
    multiplicity = int(np.sum(np.abs(tangent_sigmas - sigma) <= MULTIPLICITY_TOL))
    useless = sigma < USELESS_TOL
    vec = q @ vecs[:, -1]
    i = int(np.argmax(np.abs(vec)))
    if vec[i] < 0:
        vec = -vec
    direction = ScaledPerturbation(d.input_dist, vec)
    return LocalCapacity(
        sigma=0.0 if useless else sigma,
        direction=direction,
        multiplicity=multiplicity,
        locally_useless=useless,
    )


@dataclass(frozen=True)
class DecayRow:
    eps: float
    exact: float
    quadratic: float
    residual: float


@dataclass(frozen=True)
class DecayTable:
    """Residual table over an eps sweep with per-halving decay ratios.

    A ratio passes when |residual(eps/2)| <= 0.3 |residual(eps)| or both
    residuals sit at the round-off floor; `passed` requires every ratio to
    pass. Ratios are only formed between entries that are exact halvings.
    """

    rows: tuple
    ratios: tuple
    passed: bool


def _decay_table(eps_list, evaluate) -> DecayTable:
    rows = [evaluate(float(e)) for e in eps_list]
    ratios = []
    ok = True
    for a, b in zip(rows, rows[1:]):
        if a.eps <= 0.0 or abs(b.eps - a.eps / 2.0) > 1e-12 * a.eps:
            continue
        ra, rb = abs(a.residual), abs(b.residual)
        if ra <= DECAY_NOISE_FLOOR and rb <= DECAY_NOISE_FLOOR:
            ratios.append(0.0)
            continue
        ratio = rb / max(ra, 1e-300)
        ratios.append(float(ratio))
        if ratio > DECAY_RATIO_BOUND:
            ok = False
    return DecayTable(rows=tuple(rows), ratios=tuple(ratios), passed=ok)


def verify_quadratic_approx(p: ProbDist, j, eps_list) -> DecayTable:
    """Compare exact divergence D(P || P+eps*J) to its quadratic model.

    The residual must shrink at third order, so its ratio across consecutive
    halvings of eps stays below 0.3.
    """
    j = np.asarray(j, dtype=float)
    half_norm = 0.5 * weighted_inner_product(j, j, p)

    def row(eps: float) -> DecayRow:
        if eps == 0.0:
            return DecayRow(0.0, 0.0, 0.0, 0.0)
        pert = Perturbation(p, j, eps)  # raises InvalidEpsilon off the simplex
        exact = kl_divergence(p, pert.perturbed())
        quad = half_norm * eps * eps
        return DecayRow(eps, exact, quad, exact - quad)

    return _decay_table(eps_list, row)


def verify_divergence_symmetry(p: ProbDist, j, eps_list) -> DecayTable:
    """Gap |D(P||Q) - D(Q||P)| for Q = P+eps*J, with the same decay test."""
    j = np.asarray(j, dtype=float)

    def row(eps: float) -> DecayRow:
        if eps == 0.0:
            return DecayRow(0.0, 0.0, 0.0, 0.0)
        q = Perturbation(p, j, eps).perturbed()
        forward = kl_divergence(p, q)
        backward = kl_divergence(q, p)
        gap = abs(forward - backward)
        return DecayRow(eps, forward, backward, gap)

    return _decay_table(eps_list, row)


def strong_dpi_ratio(d: Dtm, l: ScaledPerturbation) -> float:
    """Energy ratio ||B l||^2 / ||l||^2 of a valid perturbation direction.

    Never exceeds the squared second singular value (up to round-off);
    equality holds along the second right singular vector.
    """
    if l.base.alphabet_size != d.input_size:
        raise DimensionMismatch("perturbation lives on a different alphabet")
    nrm2 = float(l.vec @ l.vec)
    if nrm2 <= 0.0:
        raise ZeroPerturbation("perturbation vector is zero")
    img = d.matrix @ l.vec
    return float(img @ img) / nrm2
