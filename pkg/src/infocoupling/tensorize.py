"""Kronecker-power structure of channels and their whitened matrices.

Multi-letter inputs tensorize everything: distributions, channels and the
whitened matrix all become Kronecker powers, and singular values of the power
are products of base singular values. Perturbations over n letters decompose
against the tensor product of the base right singular vectors; a perturbation
is first-order product-form exactly when its coefficients avoid indices with
two or more non-top positions.

Index convention: multi-indices (i1, ..., in) are flattened little-endian,
slot 1 varying fastest (flat = i1 + m*i2 + m^2*i3 + ...). Equivalently the
basis vector for (i1, ..., in) is kron(v[in], ..., kron(v[i2], v[i1])).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import BasisMismatch, DimensionMismatch, InputError, SizeCap
from .local_geom import Dtm, SvdResult
from .prob_core import ProbDist, _readonly

DENSE_LIMIT = 4096
DIST_SIZE_CAP = 10**6


def _check_power(size: int, n: int, cap: int, what: str) -> int:
    if n < 1:
        raise InputError(f"letter count must be >= 1, got {n}")
    total = size**n
    if total > cap:
        raise SizeCap(f"{what} would have {total} entries, cap is {cap}")
    return total


def kron_power_dist(p: ProbDist, n: int) -> ProbDist:
    """The i.i.d. distribution of n letters drawn from p."""
    _check_power(p.alphabet_size, n, DIST_SIZE_CAP, "tensor-power distribution")
    out = p.probs
    for _ in range(n - 1):
        out = np.kron(out, p.probs)  # any slot order: entries are symmetric products
    return ProbDist(out)


def tensor_basis_vector(vectors: np.ndarray, index) -> np.ndarray:
    """Basis vector for a multi-index under the little-endian flat layout."""
    cols = [vectors[:, i] for i in index]
    return reduce(np.kron, reversed(cols))


@dataclass(frozen=True)
class TensorOperator:
    """Lazy n-letter action of a base matrix, one slot at a time.

    Never materializes the Kronecker power; applying it to a vector costs
    O(n * |X|^n) instead. `dense()` is available below DENSE_LIMIT as the
    oracle cross-check.
    """

    base: Dtm
    letters: int

    def __post_init__(self):
        _check_power(self.base.input_size, self.letters, DIST_SIZE_CAP, "tensor input")

    @property
    def input_dim(self) -> int:
        return self.base.input_size**self.letters

    @property
    def output_dim(self) -> int:
        return self.base.output_size**self.letters

    def apply(self, vec) -> np.ndarray:
        return apply_kron_power(self.base.matrix, self.letters, vec)

    def dense(self) -> np.ndarray:
        return dense_kron(self.base, self.letters)


def apply_kron_power(matrix: np.ndarray, n: int, vec) -> np.ndarray:
    """Apply the n-fold Kronecker power of a matrix to a flat vector."""
    rows, cols = matrix.shape
    v = np.asarray(vec, dtype=float)
    if v.shape != (cols**n,):
        raise DimensionMismatch(
            f"vector has {v.size} entries, operator expects {cols ** n}"
        )
    t = v.reshape((cols,) * n, order="F")
    for axis in range(n):
        t = np.moveaxis(np.tensordot(matrix, t, axes=(1, axis)), 0, axis)
    return t.reshape(-1, order="F")


def dense_kron(d: Dtm, n: int) -> np.ndarray:
    """Explicit Kronecker power of the whitened matrix (small sizes only)."""
    _check_power(d.input_size, n, DENSE_LIMIT, "dense tensor input")
    _check_power(d.output_size, n, DENSE_LIMIT, "dense tensor output")
    return reduce(np.kron, [d.matrix] * n)


def product_singular_values(s: SvdResult, n: int, top_m: int):
    """Top products of n singular values with their multi-indices.

    Returns up to `top_m` pairs ``(value, index)`` sorted by descending value,
    ties in lexicographic index order. Values are padded with zeros when the
    output space is smaller than the input space.
    """
    if top_m < 1:
        raise InputError(f"top_m must be >= 1, got {top_m}")
    svals = s.padded_values()
    total = _check_power(svals.size, n, DIST_SIZE_CAP, "singular-value products")
    grids = np.meshgrid(*([svals] * n), indexing="ij")
    products = reduce(np.multiply, [g.reshape(-1) for g in grids])
    indices = np.stack(
        np.meshgrid(*([np.arange(svals.size)] * n), indexing="ij"), axis=-1
    ).reshape(total, n)
    order = sorted(range(total), key=lambda i: (-products[i], tuple(indices[i])))
    keep = order[: min(top_m, total)]
    return [(float(products[i]), tuple(int(x) for x in indices[i])) for i in keep]


@dataclass(frozen=True)
class ProductCoeffs:
    """Coefficients of a vector against the tensor singular basis.

    `coeffs[i1, ..., in]` multiplies the basis vector of multi-index
    (i1, ..., in); Parseval holds because the basis is orthonormal.
    """

    coeffs: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _readonly(self.coeffs))
        object.__setattr__(self, "basis", _readonly(self.basis))

    @property
    def letters(self) -> int:
        return self.coeffs.ndim

    def energy(self) -> float:
        return float(np.sum(self.coeffs**2))

    def reconstruct(self) -> np.ndarray:
        t = self.coeffs
        for axis in range(t.ndim):
            t = np.moveaxis(np.tensordot(self.basis, t, axes=(1, axis)), 0, axis)
        return t.reshape(-1, order="F")


def decompose(l, s: SvdResult, n: int) -> ProductCoeffs:
    """Expand a vector over |X|^n in the tensor product of right singular vectors."""
    basis = s.right_vectors
    m = basis.shape[0]
    v = np.asarray(l, dtype=float)
    _check_power(m, n, DIST_SIZE_CAP, "tensor coefficients")
    if v.shape != (m**n,):
        raise DimensionMismatch(f"vector has {v.size} entries, expected {m ** n}")
    t = v.reshape((m,) * n, order="F")
    for axis in range(n):
        t = np.moveaxis(np.tensordot(basis.T, t, axes=(1, axis)), 0, axis)
    out = ProductCoeffs(t, basis)
    assert abs(out.energy() - float(v @ v)) <= 1e-10 * max(1.0, float(v @ v))
    return out


def is_product_form(c: ProductCoeffs, tol: float) -> bool:
    """True when all coefficient mass sits on indices with at most one
    non-top position (first-order signature of a product distribution)."""
    mixed = c.coeffs.copy()
    idx = np.indices(mixed.shape)
    nonzero_positions = np.sum(idx != 0, axis=0)
    mixed[nonzero_positions <= 1] = 0.0
    return float(np.sqrt(np.sum(mixed**2))) <= tol


@dataclass(frozen=True)
class BasisRelation:
    """Orthogonal matrix relating the non-top right singular vectors of two
    whitened matrices built over the same input distribution."""

    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi", _readonly(self.psi))
        q = self.psi
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise DimensionMismatch("relation matrix must be square")
        if np.linalg.norm(q @ q.T - np.eye(q.shape[0])) > 1e-9:
            raise InputError("relation matrix is not orthogonal; bases are inconsistent")


def basis_relation(s1: SvdResult, s2: SvdResult) -> BasisRelation:
    """Change-of-basis between the non-top right singular vectors of two SVDs."""
    if s1.right_vectors.shape != s2.right_vectors.shape:
        raise DimensionMismatch("decompositions live on different input spaces")
    if np.linalg.norm(s1.right_vectors[:, 0] - s2.right_vectors[:, 0]) > 1e-9:
        raise BasisMismatch(
            "top right singular vectors differ; the matrices were not built "
            "from the same input distribution"
        )
    return BasisRelation(s1.right_vectors[:, 1:].T @ s2.right_vectors[:, 1:])


@dataclass(frozen=True)
class PurifyResult:
    """Outcome of moving doubly-mixed coefficient mass onto pure indices."""

    vector: np.ndarray
    norms_before: tuple
    norms_after: tuple
    moved_energy: float
    guaranteed: bool

    def __post_init__(self):
        object.__setattr__(self, "vector", _readonly(self.vector))


def purify(l, s1: SvdResult, s2: SvdResult) -> PurifyResult:
    """Reassign each doubly-mixed coefficient of a 2-letter vector to a pure index.

    Mass at (i, j) with both i, j nonzero moves to (i, 0) (the deterministic
    choice). The per-component norm argument is only airtight for a single
    moved component landing on originally empty first-slot rows: several
    components can collide at one destination (amplitudes may cancel) or
    interact through the second channel's cross terms. `guaranteed` is True
    exactly in the airtight case; the actual before/after norms through both
    channels are always reported.
    """
    basis_relation(s1, s2)  # validates the shared top vector
    coeffs = decompose(l, s1, 2)
    c = coeffs.coeffs.copy()
    m = c.shape[0]
    # Coefficients at the round-off floor are not treated as mass.
    floor = 1e-14 * max(1.0, float(np.sqrt(coeffs.energy())))
    row_slots_empty = all(abs(c[i, 0]) <= floor for i in range(1, m))
    mixed_total = 0.0
    moved = 0
    for i in range(1, m):
        for j in range(1, m):
            if abs(c[i, j]) > floor:
                moved += 1
                mixed_total += float(c[i, j] ** 2)
                c[i, 0] += c[i, j]
                c[i, j] = 0.0
    vec_after = ProductCoeffs(c, coeffs.basis).reconstruct()
    vec_before = np.asarray(l, dtype=float)

    def norms(vec):
        out = []
        for s in (s1, s2):
            b = s.reconstruct()
            out.append(float(np.linalg.norm(apply_kron_power(b, 2, vec))))
        return tuple(out)

    before = norms(vec_before)
    after = norms(vec_after)
    return PurifyResult(
        vector=vec_after,
        norms_before=before,
        norms_after=after,
        moved_energy=mixed_total,
        guaranteed=(moved <= 1 and row_slots_empty),
    )
