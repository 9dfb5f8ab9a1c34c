"""Max-min solvers for coupling a thin common layer into one or more channels.

Everything happens on the tangent space of valid perturbation directions (the
orthogonal complement of sqrt(P_X)), where each receiver i contributes a
quadratic form A_i and the single-letter problem is

    maximize over unit x:   min_i  x' A_i x.

Three solution notions are implemented:

* rank-1 (`maxmin_rank1`): one direction; non-convex, solved by deterministic
  multi-start projected supergradient ascent plus exhaustive angular grids in
  dimension <= 3 and local polishing. The returned value is always an exactly
  evaluated lower bound.
* dual (`maxmin_dual`): min over simplex weights of the top eigenvalue of the
  blended form; convex, upper-bounds every coupling strategy.
* ensemble (`maxmin_ensemble`): a finite auxiliary variable mixing several
  directions (trace form); solved via the dual optimum and a small
  column-generation feasibility program, closing the gap the rank-1 problem
  may leave open.

n-letter product constructions assign one direction per letter slot and
realize ensemble values with a single binary auxiliary variable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from . import kernels
from .errors import (
    BasisMismatch,
    DimensionMismatch,
    EmptyInput,
    FeasibilityFailure,
    GapDetected,
    InputError,
    InvalidEpsilon,
    NumericalError,
    ZeroPerturbation,
)
from .local_geom import Dtm, local_capacity, tangent_basis
from .prob_core import (
    Perturbation,
    ProbDist,
    ScaledPerturbation,
    exact_mutual_information,
    _readonly,
)
from .tensorize import apply_kron_power, kron_power_dist, _check_power

EIGENSPACE_TOL = 1e-7  # relative width of the "top eigenspace" of a blend


# ---------------------------------------------------------------------------
# tangent space and quadratic forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticForm:
    """Symmetric PSD form x -> x'Ax on tangent coordinates.

    `basis` holds the orthonormal tangent vectors as columns of an
    (ambient x m) matrix; `source` optionally points back at the whitened
    channel matrix the form came from.
    """

    matrix: np.ndarray
    basis: np.ndarray
    source: Dtm | None = None

    def __post_init__(self):
        a = 0.5 * (np.asarray(self.matrix, dtype=float) + np.asarray(self.matrix, dtype=float).T)
        if np.max(np.abs(a - np.asarray(self.matrix))) > 1e-12:
            raise InputError("form matrix must be symmetric")
        object.__setattr__(self, "matrix", _readonly(a))
        object.__setattr__(self, "basis", _readonly(self.basis))
        if self.basis.ndim != 2 or self.basis.shape[1] != a.shape[0]:
            raise DimensionMismatch("basis columns must match the form dimension")
        gram = self.basis.T @ self.basis
        if np.max(np.abs(gram - np.eye(a.shape[0]))) > 1e-9:
            raise InputError("basis columns must be orthonormal")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] < -1e-9 or eigs[-1] > 1.0 + 1e-9:
            raise InputError(
                f"form eigenvalues must lie in [0, 1], got [{eigs[0]:.3g}, {eigs[-1]:.3g}]"
            )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ (self.matrix @ x))


def tangent_form(d: Dtm) -> QuadraticForm:
    """Gram form of the whitened channel restricted to the tangent space."""
    q = tangent_basis(d.input_dist)
    bq = d.matrix @ q
    a = bq.T @ bq
    return QuadraticForm(0.5 * (a + a.T), q, d)


# ---------------------------------------------------------------------------
# solutions and ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingEnsemble:
    """A finite auxiliary variable: atom weights plus one direction per atom.

    Atoms are rows; they live in tangent coordinates when `basis` is set (and
    map to weighted perturbations through it) or directly in the ambient
    (possibly multi-letter) space when `basis` is None. The weighted atom
    average must vanish so the input marginal is preserved.
    """

    weights: np.ndarray
    atoms: np.ndarray
    basis: np.ndarray | None = None
    base: ProbDist | None = None
    epsilon: float = 0.0
    letters: int = 1

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "atoms", _readonly(np.atleast_2d(self.atoms)))
        if self.basis is not None:
            object.__setattr__(self, "basis", _readonly(self.basis))
        w = self.weights
        if w.ndim != 1 or w.size != self.atoms.shape[0]:
            raise DimensionMismatch("one weight per atom required")
        if np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InputError("weights must be positive and sum to 1")
        if self.epsilon < 0:
            raise InvalidEpsilon("epsilon must be nonnegative")
        mean = w @ self.atoms
        scale_ref = max(1.0, float(np.max(np.abs(self.atoms))))
        if float(np.linalg.norm(mean)) > 1e-10 * scale_ref:
            raise InputError(
                "weighted atoms must average to zero to preserve the marginal"
            )

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def scaled_vectors(self) -> np.ndarray:
        """Atoms mapped to the ambient space (rows are weighted perturbations)."""
        if self.basis is None:
            return np.asarray(self.atoms)
        return self.atoms @ self.basis.T

    def perturbations(self) -> list:
        if self.base is None:
            raise InputError("ensemble carries no base distribution")
        return [ScaledPerturbation(self.base, v) for v in self.scaled_vectors()]

    def with_epsilon(self, eps: float) -> "CouplingEnsemble":
        return replace(self, epsilon=float(eps))


@dataclass(frozen=True)
class MaxMinSolution:
    """Primal value and optimizer together with the dual certificate."""

    value: float
    optimizer: object  # unit tangent vector (ndarray) or CouplingEnsemble
    dual_weights: np.ndarray
    dual_value: float

    def __post_init__(self):
        object.__setattr__(self, "dual_weights", _readonly(self.dual_weights))
        if isinstance(self.optimizer, np.ndarray):
            object.__setattr__(self, "optimizer", _readonly(self.optimizer))
        if not (-1e-9 <= self.value <= self.dual_value + 1e-9):
            raise NumericalError(
                f"weak duality violated: value={self.value!r} dual={self.dual_value!r}"
            )
        if self.dual_value > 1.0 + 1e-9:
            raise NumericalError(f"dual value {self.dual_value!r} exceeds 1")

    @property
    def gap(self) -> float:
        return self.dual_value - self.value


@dataclass(frozen=True)
class SolverOptions:
    starts: int = 12
    max_iters: int = 400
    tol: float = 1e-6
    seed: int = 0
    grid: int = 0  # 0 = automatic resolution from tol


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _prepare(forms) -> tuple:
    forms = list(forms)
    if not forms:
        raise EmptyInput("need at least one quadratic form")
    m = forms[0].dim
    if any(f.dim != m for f in forms):
        raise DimensionMismatch("forms have mixed dimensions")
    stack = np.stack([f.matrix for f in forms])
    keep, rep_of = [], []
    for i in range(stack.shape[0]):
        dup = next(
            (j for j in keep if np.max(np.abs(stack[i] - stack[j])) <= 1e-12), None
        )
        if dup is None:
            keep.append(i)
            rep_of.append(i)
        else:
            rep_of.append(dup)
    return np.ascontiguousarray(stack[keep]), keep, rep_of


def _expand_weights(lam, keep, rep_of, k) -> np.ndarray:
    out = np.zeros(k)
    for pos, orig in enumerate(keep):
        out[orig] = lam[pos]
    return out


def _min_value(stack, x) -> float:
    return float(min(x @ (a @ x) for a in stack))


def _lam_max(stack, lam):
    blend = np.tensordot(lam, stack, axes=(0, 0))
    w, v = np.linalg.eigh(blend)
    return float(w[-1]), v


def _orient(x: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(x)))
    return -x if x[i] < 0 else x


# ---------------------------------------------------------------------------
# dual bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualSolution:
    value: float
    weights: np.ndarray


def _refine_dual(stack, lam):
    k = stack.shape[0]
    best = _lam_max(stack, lam)[0]
    lam = lam.copy()
    for _ in range(60):
        gained = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                lo, hi = -lam[i], lam[j]
                if hi - lo < 1e-14:
                    continue

                def g(s, i=i, j=j):
                    trial = lam.copy()
                    trial[i] += s
                    trial[j] -= s
                    return _lam_max(stack, np.clip(trial, 0.0, None))[0]

                res = optimize.minimize_scalar(
                    g, bounds=(lo, hi), method="bounded",
                    options={"xatol": 1e-13},
                )
                if res.fun < best - 1e-15:
                    gained += best - res.fun
                    best = float(res.fun)
                    lam[i] += res.x
                    lam[j] -= res.x
                    lam = np.clip(lam, 0.0, None)
                    lam /= lam.sum()
        if gained < 1e-13:
            break
    return best, lam


def _dual_smooth_polish(stack, lam0):
    """SLSQP descent of lambda_max over the simplex with the eigenvector
    gradient; exact wherever the top eigenvalue stays simple. Returns an
    improved (value, weights) or the input if no improvement was found."""
    k = stack.shape[0]

    def fun_jac(lam):
        blend = np.tensordot(lam, stack, axes=(0, 0))
        w, v = np.linalg.eigh(blend)
        top = v[:, -1]
        grad = np.array([top @ (a @ top) for a in stack])
        return float(w[-1]), grad

    try:
        res = optimize.minimize(
            fun_jac,
            lam0,
            jac=True,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * k,
            constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1.0,
                          "jac": lambda lam: np.ones(k)}],
            options={"maxiter": 200, "ftol": 1e-16},
        )
    except (ValueError, np.linalg.LinAlgError):
        return None
    lam = np.clip(res.x, 0.0, None)
    total = lam.sum()
    if not np.isfinite(total) or total <= 0:
        return None
    lam = lam / total
    return _lam_max(stack, lam)[0], lam


def maxmin_dual(forms, opts: SolverOptions = SolverOptions()) -> DualSolution:
    """Convex upper bound: min over simplex weights of lambda_max(sum w_i A_i).

    Two receivers reduce to bracketed one-dimensional minimization; more
    receivers use projected subgradient descent with the best iterate kept,
    exact coordinate-pair line searches, and a smooth gradient polish.
    """
    stack, keep, rep_of = _prepare(forms)
    k = len(keep)
    k_orig = len(rep_of)
    if k == 1:
        val = _lam_max(stack, np.ones(1))[0]
        return DualSolution(val, _expand_weights([1.0], keep, rep_of, k_orig))
    if k == 2:
        def g(t):
            return _lam_max(stack, np.array([1.0 - t, t]))[0]

        res = optimize.minimize_scalar(
            g, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-13}
        )
        # The minimizer often sits at a kink; polish by comparing neighbors.
        best_t = float(res.x)
        best = g(best_t)
        for t in (0.0, 1.0):
            if g(t) < best:
                best, best_t = g(t), t
        lam = np.array([1.0 - best_t, best_t])
        polished = _dual_smooth_polish(stack, lam)
        if polished is not None and polished[0] < best:
            best, lam = polished
        return DualSolution(best, _expand_weights(lam, keep, rep_of, k_orig))

    candidates = [np.full(k, 1.0 / k)]
    candidates.extend(np.eye(k))
    sub_val, sub_lam = kernels.dual_subgradient(
        stack, np.full(k, 1.0 / k), 1500, 0.1
    )
    candidates.append(np.asarray(sub_lam))
    best_val, best_lam = np.inf, candidates[0]
    for lam in candidates:
        val = _lam_max(stack, lam)[0]
        if val < best_val:
            best_val, best_lam = val, np.asarray(lam, dtype=float)
    best_val, best_lam = _refine_dual(stack, best_lam)
    polished = _dual_smooth_polish(stack, best_lam)
    if polished is not None and polished[0] < best_val:
        best_val, best_lam = polished
    return DualSolution(best_val, _expand_weights(best_lam, keep, rep_of, k_orig))


# ---------------------------------------------------------------------------
# rank-1 primal
# ---------------------------------------------------------------------------


def _eigenspace(blend_vecs_vals, rel=EIGENSPACE_TOL):
    w, v = blend_vecs_vals
    thr = w[-1] - max(1e-9, rel * abs(w[-1]))
    cols = v[:, w >= thr]
    return cols


def _equalizing_candidates(stack, lam):
    """Directions inside the top eigenspace of the blend that equalize pairs
    of forms; exact for two receivers, useful seeds otherwise."""
    blend = np.tensordot(lam, stack, axes=(0, 0))
    w, v = np.linalg.eigh(blend)
    space = _eigenspace((w, v))
    d = space.shape[1]
    cands = [space[:, j] for j in range(d)]
    if d >= 2:
        k = stack.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                delta = space.T @ (stack[i] - stack[j]) @ space
                delta = 0.5 * (delta + delta.T)
                wd, vd = np.linalg.eigh(delta)
                cands.extend(space @ vd[:, c] for c in (0, wd.size - 1))
                if wd[0] < 0.0 < wd[-1]:
                    c2 = -wd[0] / (wd[-1] - wd[0])
                    hi = np.sqrt(c2) * vd[:, -1]
                    lo = np.sqrt(1.0 - c2) * vd[:, 0]
                    cands.append(space @ (hi + lo))
                    cands.append(space @ (hi - lo))
    return [c / np.linalg.norm(c) for c in cands if np.linalg.norm(c) > 1e-12]


def _polish_1d_angle(stack, theta, halfwidth):
    def neg(t):
        x = np.array([np.cos(t), np.sin(t)])
        return -_min_value(stack, x)

    res = optimize.minimize_scalar(
        neg,
        bounds=(theta - halfwidth, theta + halfwidth),
        method="bounded",
        options={"xatol": 1e-13},
    )
    t = float(res.x)
    return np.array([np.cos(t), np.sin(t)])


def _polish_nlp(stack, x0):
    k, m, _ = stack.shape

    def objective(z):
        return -z[m]

    def objective_jac(z):
        g = np.zeros(m + 1)
        g[m] = -1.0
        return g

    cons = [
        {
            "type": "ineq",
            "fun": (lambda z, a=a: z[:m] @ (a @ z[:m]) - z[m]),
            "jac": (lambda z, a=a: np.concatenate([2.0 * (a @ z[:m]), [-1.0]])),
        }
        for a in stack
    ]
    cons.append(
        {
            "type": "eq",
            "fun": lambda z: z[:m] @ z[:m] - 1.0,
            "jac": lambda z: np.concatenate([2.0 * z[:m], [0.0]]),
        }
    )
    z0 = np.concatenate([x0, [_min_value(stack, x0)]])
    try:
        res = optimize.minimize(
            objective,
            z0,
            jac=objective_jac,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": 200, "ftol": 1e-14},
        )
    except (ValueError, np.linalg.LinAlgError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    x = res.x[:m]
    nrm = np.linalg.norm(x)
    return x / nrm if nrm > 1e-12 else None


def _sphere_grid_3d(n_per_axis=72):
    th = np.pi * (np.arange(n_per_axis) + 0.5) / n_per_axis
    ph = np.pi * (np.arange(2 * n_per_axis) + 0.5) / n_per_axis
    t, p = np.meshgrid(th, ph, indexing="ij")
    return np.column_stack(
        [
            (np.sin(t) * np.cos(p)).ravel(),
            (np.sin(t) * np.sin(p)).ravel(),
            np.cos(t).ravel(),
        ]
    )


def maxmin_rank1(forms, opts: SolverOptions = SolverOptions(),
                 dual: DualSolution | None = None) -> MaxMinSolution:
    """Best single direction: certified lower bound on max_x min_i x'A_i x.

    Deterministic multi-start ascent seeded with the top eigenvector of every
    form, of their average, of the dual-optimal blend, plus seeded random
    starts; dimensions <= 3 also sweep an exhaustive angular grid. The best
    point is polished locally and re-evaluated exactly.
    """
    stack, keep, rep_of = _prepare(forms)
    k, m = stack.shape[0], stack.shape[1]
    if dual is None:
        dual = maxmin_dual(forms, opts)
    lam_dedup = np.array([dual.weights[i] for i in keep])
    if lam_dedup.sum() <= 0:
        lam_dedup = np.full(k, 1.0 / k)
    lam_dedup = lam_dedup / lam_dedup.sum()

    starts = []
    for a in stack:
        _, v = np.linalg.eigh(a)
        starts.append(v[:, -1])
    _, v = np.linalg.eigh(stack.mean(axis=0))
    starts.append(v[:, -1])
    starts.extend(_equalizing_candidates(stack, lam_dedup))
    rng = np.random.default_rng(opts.seed)
    extra = rng.standard_normal((max(opts.starts, 1), m))
    starts.extend(extra / np.linalg.norm(extra, axis=1, keepdims=True))

    best_x = None
    best_val = -np.inf

    def consider(x):
        nonlocal best_x, best_val
        if x is None:
            return
        x = np.asarray(x, dtype=float)
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm < 1e-12:
            return
        x = x / nrm
        val = _min_value(stack, x)
        if val > best_val + 1e-15:
            best_val, best_x = val, x

    if m == 2:
        n_grid = opts.grid or max(
            4096, int(np.ceil(np.pi / np.sqrt(max(opts.tol, 1e-12))))
        )
        n_grid = min(n_grid, 2_000_000)
        _, theta = kernels.minmax_grid_2d(stack, n_grid)
        consider(np.array([np.cos(theta), np.sin(theta)]))
        consider(_polish_1d_angle(stack, theta, 2.0 * np.pi / n_grid))
    elif m == 3:
        grid = _sphere_grid_3d()
        vals = np.einsum("kab,na,nb->kn", stack, grid, grid).min(axis=0)
        order = np.argsort(vals)[::-1][:8]
        starts.extend(grid[i] for i in order)
        consider(grid[order[0]])

    start_mat = np.ascontiguousarray(np.stack(starts))
    _, x_ascent = kernels.minmax_ascent(stack, start_mat, opts.max_iters, 0.25)
    consider(x_ascent)
    for seed_x in (best_x, x_ascent):
        if seed_x is not None:
            consider(_polish_nlp(stack, np.asarray(seed_x)))

    if best_x is None:
        raise NumericalError("no valid direction found")
    value = min(best_val, dual.value)  # guard fp dust above the upper bound
    return MaxMinSolution(
        value=value,
        optimizer=_orient(best_x),
        dual_weights=np.asarray(dual.weights),
        dual_value=dual.value,
    )


# ---------------------------------------------------------------------------
# ensemble (large-cardinality) solutions
# ---------------------------------------------------------------------------


def _ensemble_lp(restricted, atoms):
    """Maximize z over atom weights w: sum_r w_r (a_r' A_i a_r) >= z for all i."""
    k = restricted.shape[0]
    scores = np.array([[a @ (ai @ a) for a in atoms] for ai in restricted])
    n = len(atoms)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-scores, np.ones((k, 1))])
    b_ub = np.zeros(k)
    a_eq = np.zeros((1, n + 1))
    a_eq[0, :n] = 1.0
    bounds = [(0.0, None)] * n + [(None, None)]
    res = optimize.linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds,
        method="highs",
    )
    if not res.success:
        raise FeasibilityFailure(f"ensemble weight program failed: {res.message}")
    duals = np.abs(np.asarray(res.ineqlin.marginals))
    total = duals.sum()
    duals = np.full(k, 1.0 / k) if total <= 0 else duals / total
    return float(res.x[-1]), res.x[:n], duals


def maxmin_ensemble(forms, opts: SolverOptions = SolverOptions(),
                    dual: DualSolution | None = None) -> MaxMinSolution:
    """Trace relaxation: the best finite-cardinality mixture of directions.

    Builds the mixture inside the top eigenspace of the dual-optimal blend and
    equalizes the active channels with a small column-generation program; the
    result is emitted as +/- atom pairs (at most 2m), which satisfy the
    marginal constraint exactly.
    """
    stack, keep, rep_of = _prepare(forms)
    k, m = stack.shape[0], stack.shape[1]
    if dual is None:
        dual = maxmin_dual(forms, opts)
    lam = np.array([dual.weights[i] for i in keep])
    if lam.sum() <= 0:
        lam = np.full(k, 1.0 / k)
    lam = lam / lam.sum()
    blend = np.tensordot(lam, stack, axes=(0, 0))
    w, v = np.linalg.eigh(blend)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    top_width = int(np.sum(w >= w[0] - max(1e-9, EIGENSPACE_TOL * abs(w[0]))))

    value, weights, atoms, space = -np.inf, None, None, None
    for d in range(top_width, m + 1):
        # Grow the candidate subspace until the dual bound is met; the top
        # eigenspace of the blend usually suffices, but an inexact dual
        # weight vector can leave the optimum slightly outside it.
        space = v[:, :d]
        restricted = np.stack([space.T @ a @ space for a in stack])
        restricted = 0.5 * (restricted + np.transpose(restricted, (0, 2, 1)))
        atoms = [np.eye(d)[:, j] for j in range(d)]
        for cand in _equalizing_candidates(stack, lam):
            coords = space.T @ cand
            nrm = np.linalg.norm(coords)
            if nrm > 1e-9:
                atoms.append(coords / nrm)
        value, weights, duals = _ensemble_lp(restricted, atoms)
        for _ in range(60):
            price = np.tensordot(duals, restricted, axes=(0, 0))
            pw, pv = np.linalg.eigh(0.5 * (price + price.T))
            if pw[-1] <= value + 1e-13:
                break
            new_atom = pv[:, -1]
            if any(
                np.linalg.norm(np.abs(new_atom) - np.abs(a)) < 1e-13 for a in atoms
            ):
                break
            atoms.append(new_atom)
            value, weights, duals = _ensemble_lp(restricted, atoms)
        if dual.value - value <= 1e-10:
            break

    # A mixture can never lose to a single direction; fall back to the best
    # equalizing candidate (as a +/- pair) if the program left it behind.
    best_single, best_single_x = -np.inf, None
    for cand in _equalizing_candidates(stack, lam):
        val = _min_value(stack, cand)
        if val > best_single:
            best_single, best_single_x = val, cand
    if best_single_x is not None and best_single > value + 1e-13:
        value = best_single
        space = np.eye(m)
        atoms = [best_single_x]
        weights = np.array([1.0])

    shortfall = dual.value - value
    if shortfall > max(opts.tol, 1e-8):
        per_channel = np.array(
            [sum(wr * (a @ (ai @ a)) for wr, a in zip(weights, atoms))
             for ai in restricted]
        )
        raise FeasibilityFailure(
            f"ensemble value {value:.12g} misses the dual bound "
            f"{dual.value:.12g} by {shortfall:.3g}",
            spread=float(per_channel.max() - per_channel.min()),
        )

    mix = sum(wr * np.outer(a, a) for wr, a in zip(weights, atoms))
    eta, z = np.linalg.eigh(0.5 * (mix + mix.T))
    directions, dir_weights = [], []
    for j in range(d - 1, -1, -1):
        if eta[j] > 1e-12:
            directions.append(_orient(space @ z[:, j]))
            dir_weights.append(float(eta[j]))
    total = sum(dir_weights)
    atom_rows, atom_weights = [], []
    for direction, wgt in zip(directions, dir_weights):
        atom_rows.extend([direction, -direction])
        atom_weights.extend([0.5 * wgt / total, 0.5 * wgt / total])

    first = forms[0]
    ensemble = CouplingEnsemble(
        weights=np.array(atom_weights),
        atoms=np.stack(atom_rows),
        basis=np.asarray(first.basis),
        base=first.source.input_dist if first.source is not None else None,
    )
    mix_full = sum(
        wgt / total * np.outer(dirn, dirn)
        for dirn, wgt in zip(directions, dir_weights)
    )
    value_full = float(min(np.tensordot(a, mix_full, axes=2) for a in stack))
    return MaxMinSolution(
        value=min(value_full, dual.value),
        optimizer=ensemble,
        dual_weights=np.asarray(dual.weights),
        dual_value=dual.value,
    )


# ---------------------------------------------------------------------------
# point-to-point and two-receiver entry points
# ---------------------------------------------------------------------------


def solve_p2p(d: Dtm) -> MaxMinSolution:
    """Single channel: the second singular direction is optimal with value
    sigma^2, realized by a binary uniform +/- ensemble."""
    cap = local_capacity(d)
    form = tangent_form(d)
    coords = form.basis.T @ cap.direction.vec
    nrm = np.linalg.norm(coords)
    if nrm > 0:
        coords = coords / nrm
    coords = _orient(coords)
    ensemble = CouplingEnsemble(
        weights=np.array([0.5, 0.5]),
        atoms=np.stack([coords, -coords]),
        basis=form.basis,
        base=d.input_dist,
    )
    value = cap.efficiency
    return MaxMinSolution(
        value=value,
        optimizer=ensemble,
        dual_weights=np.array([1.0]),
        dual_value=value,
    )


def solve_broadcast2(d1: Dtm, d2: Dtm,
                     opts: SolverOptions = SolverOptions()) -> MaxMinSolution:
    """Two receivers sharing one input distribution: rank-1 and dual must meet.

    A gap above `opts.tol` would contradict the expected two-receiver
    structure, so it is raised as `GapDetected` carrying the full solution for
    logging, never silently swallowed.
    """
    if d1.input_size != d2.input_size:
        raise DimensionMismatch("receivers have different input alphabets")
    if not d1.input_dist.close_to(d2.input_dist):
        raise BasisMismatch("receivers do not share the input distribution")
    forms = [tangent_form(d1), tangent_form(d2)]
    dual = maxmin_dual(forms, opts)
    solution = maxmin_rank1(forms, opts, dual=dual)
    if solution.gap > opts.tol:
        raise GapDetected(
            f"two-receiver gap {solution.gap:.3g} exceeds tol {opts.tol:.3g}",
            solution=solution,
            instance={
                "channel_1": d1.channel.matrix.tolist(),
                "channel_2": d2.channel.matrix.tolist(),
                "input_dist": d1.input_dist.probs.tolist(),
            },
        )
    return solution


# ---------------------------------------------------------------------------
# multi-letter constructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KLetterResult:
    per_channel_values: np.ndarray
    ensemble: CouplingEnsemble

    def __post_init__(self):
        object.__setattr__(
            self, "per_channel_values", _readonly(self.per_channel_values)
        )


def _slot_embedding(forms, base):
    if base is None:
        base = next((f.source for f in forms if f.source is not None), None)
    if base is not None:
        return base.input_dist.sqrt(), np.asarray(forms[0].basis), base.input_dist
    m = forms[0].dim
    lift = np.vstack([np.zeros((1, m)), np.eye(m)])
    top = np.zeros(m + 1)
    top[0] = 1.0
    return top, lift, None


def k_letter_construction(forms, directions, base: Dtm | None = None) -> KLetterResult:
    """Product construction: letter j carries its own direction d_j.

    The n-letter perturbation puts direction d_j in slot j and the top vector
    everywhere else; cross terms vanish, so channel i sees per-letter value
    (1/n) sum_j d_j' A_i d_j. Returned as a binary +/- ensemble over n letters.
    """
    forms = list(forms)
    if not forms:
        raise EmptyInput("need at least one quadratic form")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    n = dirs.shape[0]
    m = forms[0].dim
    if dirs.shape[1] != m:
        raise DimensionMismatch(
            f"directions have dimension {dirs.shape[1]}, forms have {m}"
        )
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise InputError("directions must be unit vectors in the tangent space")

    per_channel = np.array(
        [float(np.mean([d @ (f.matrix @ d) for d in dirs])) for f in forms]
    )

    top, lift, base_dist = _slot_embedding(forms, base)
    slot_dim = top.size
    _check_power(slot_dim, n, 10**6, "multi-letter perturbation")
    total = np.zeros(slot_dim**n)
    for j in range(n):
        slots = [top] * n
        slots[j] = lift @ dirs[j]
        vec = slots[-1]
        for s in reversed(slots[:-1]):  # little-endian: slot 1 varies fastest
            vec = np.kron(vec, s)
        total = total + vec
    total = total / np.linalg.norm(total)

    kron_base = None
    if base_dist is not None:
        kron_base = kron_power_dist(base_dist, n)
        # Cross-check the algebraic values against the lazy tensor action.
        for f, expected in zip(forms, per_channel):
            if f.source is not None:
                img = apply_kron_power(f.source.matrix, n, total)
                assert abs(float(img @ img) - expected) <= 1e-9

    ensemble = CouplingEnsemble(
        weights=np.array([0.5, 0.5]),
        atoms=np.stack([total, -total]),
        basis=None,
        base=kron_base,
        letters=n,
    )
    return KLetterResult(per_channel, ensemble)


def equal_weight_directions(mix: np.ndarray, n: int) -> np.ndarray:
    """Split a trace-1 PSD mixture into n equally weighted unit directions.

    Exact for effective rank <= 2 (the relevant cases); higher-rank mixtures
    are supported when n splits across the eigenvalues in integer counts.
    """
    mix = 0.5 * (np.asarray(mix, dtype=float) + np.asarray(mix, dtype=float).T)
    if n < 1:
        raise InputError("need at least one direction")
    eigs, vecs = np.linalg.eigh(mix)
    order = np.argsort(eigs)[::-1]
    eigs, vecs = eigs[order], vecs[:, order]
    if abs(eigs.sum() - 1.0) > 1e-9 or eigs[-1] < -1e-9:
        raise InputError("mixture must be PSD with trace 1")
    rank = int(np.sum(eigs > 1e-12))
    if rank <= 1:
        return np.tile(vecs[:, 0], (n, 1))
    if rank == 2:
        lam = float(eigs[0])
        if n == 1:
            raise InputError("rank-2 mixture cannot be a single direction")
        angles = []
        if n % 2 == 0:
            beta = 0.5 * np.arccos(np.clip(2.0 * lam - 1.0, -1.0, 1.0))
            angles = [beta, -beta] * (n // 2)
        else:
            target = (n * (2.0 * lam - 1.0) - 1.0) / (n - 1)
            beta = 0.5 * np.arccos(np.clip(target, -1.0, 1.0))
            angles = [0.0] + [beta, -beta] * ((n - 1) // 2)
        plane = vecs[:, :2]
        return np.stack(
            [plane @ np.array([np.cos(b), np.sin(b)]) for b in angles]
        )
    counts = eigs[:rank] * n
    rounded = np.round(counts)
    if np.max(np.abs(counts - rounded)) > 1e-9 or int(rounded.sum()) != n:
        raise InputError(
            "no exact equal-weight split: mixture rank exceeds 2 and "
            "eigenvalues are not multiples of 1/n"
        )
    rows = []
    for j in range(rank):
        rows.extend([vecs[:, j]] * int(rounded[j]))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# efficiency evaluation
# ---------------------------------------------------------------------------


def form_efficiency(e: CouplingEnsemble, forms) -> np.ndarray:
    """Quadratic per-form efficiency of a single-letter tangent ensemble."""
    if e.letters != 1:
        raise DimensionMismatch("form-level efficiency needs single-letter atoms")
    atoms = np.asarray(e.atoms)
    denom = float(e.weights @ np.sum(atoms**2, axis=1))
    if denom <= 0:
        raise ZeroPerturbation("ensemble carries no perturbation energy")
    out = []
    for f in forms:
        num = float(e.weights @ np.einsum("ui,ij,uj->u", atoms, f.matrix, atoms))
        out.append(num / denom)
    return np.array(out)


def efficiency(e: CouplingEnsemble, dtms, exact: bool = False) -> np.ndarray:
    """Per-channel coupling efficiency of an ensemble.

    Quadratic mode reports output over input perturbation energy through each
    whitened matrix. Exact mode builds the true conditionals at the stored
    epsilon, pushes them through the n-letter channels, and reports
    I(U;Y_i)/I(U;X); the two agree to within O(eps) relative error.
    """
    dtms = list(dtms)
    if not dtms:
        raise EmptyInput("need at least one channel")
    vectors = e.scaled_vectors()
    energies = np.sum(vectors**2, axis=1)
    denom = float(e.weights @ energies)
    if denom <= 0:
        raise ZeroPerturbation("ensemble carries no perturbation energy")
    n = e.letters
    for d in dtms:
        if d.input_size**n != vectors.shape[1]:
            raise DimensionMismatch(
                f"ensemble vectors have {vectors.shape[1]} entries, channel "
                f"expects {d.input_size ** n}"
            )

    if not exact:
        out = []
        for d in dtms:
            num = sum(
                wu * float(np.sum(apply_kron_power(d.matrix, n, vec) ** 2))
                for wu, vec in zip(e.weights, vectors)
            )
            out.append(num / denom)
        return np.array(out)

    if e.base is None:
        raise InvalidEpsilon("exact mode needs an ensemble with a base distribution")
    if e.epsilon <= 0:
        raise InvalidEpsilon("exact mode needs a positive epsilon")
    root = e.base.sqrt()
    conds = []
    for vec in vectors:
        pert = Perturbation(e.base, vec * root, e.epsilon)
        conds.append(pert.perturbed())
    input_info = exact_mutual_information(e.weights, conds)
    if input_info <= 0:
        raise ZeroPerturbation("ensemble carries no exact information")
    out = []
    for d in dtms:
        _check_power(d.output_size, n, 10**6, "multi-letter outputs")
        pushed = [
            ProbDist(apply_kron_power(d.channel.matrix, n, c.probs))
            for c in conds
        ]
        out.append(exact_mutual_information(e.weights, pushed) / input_info)
    return np.array(out)
