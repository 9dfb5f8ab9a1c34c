"""Command-line surface: read channel spec files, run analyses, emit reports.

Commands: dtm, p2p, broadcast, verify, windmill. Reports are deterministic:
numbers are rounded to 12 significant digits, keys are sorted, randomized
procedures take an explicit --seed (default 0) which is recorded, and no
timestamps are embedded, so identical inputs and flags produce byte-identical
output. JSON is the primary format; --format csv emits flattened key/value
rows plus plot-ready table sections.

Spec file schema (JSON, UTF-8): one shared input distribution for all
channels (matching the shared-marginal setting); matrix entry [y][x] holds
the probability of output y given input x, so columns sum to 1.

    {"input_dist": [..], "channels": [{"name": str, "matrix": [[..], ..]}]}

Exit codes: 0 success (warnings allowed), 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys

import numpy as np

from . import __version__
from . import windmill as wm
from .coupling_solver import (
    CouplingEnsemble,
    SolverOptions,
    efficiency,
    equal_weight_directions,
    form_efficiency,
    k_letter_construction,
    maxmin_dual,
    maxmin_ensemble,
    maxmin_rank1,
    solve_broadcast2,
    solve_p2p,
    tangent_basis,
    tangent_form,
)
from .errors import (
    GapDetected,
    InputError,
    InvalidEpsilon,
    InvalidK,
    NumericalError,
    ParseError,
    UsageError,
)
from .local_geom import (
    build_dtm,
    local_capacity,
    svd,
    verify_divergence_symmetry,
    verify_quadratic_approx,
)
from .prob_core import Channel, ProbDist, validate_dist
from .tensorize import dense_kron, product_singular_values

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# spec file loading
# ---------------------------------------------------------------------------


def load_channel_spec(path: str):
    """Parse a channel spec file into (input_dist, [(name, Channel), ...])."""
    try:
        with open(path, "rb") as fp:
            raw = fp.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not valid UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at byte {exc.pos} (line {exc.lineno}, "
            f"column {exc.colno}): {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    if "input_dist" not in data:
        raise ParseError(f"{path}: missing field 'input_dist'")
    if "channels" not in data or not isinstance(data["channels"], list):
        raise ParseError(f"{path}: missing or non-list field 'channels'")
    try:
        px = validate_dist(data["input_dist"])
    except InputError as exc:
        raise type(exc)(f"input_dist: {exc}") from exc
    channels = []
    for i, entry in enumerate(data["channels"]):
        where = f"channels[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: must be an object")
        if "input_dist" in entry:
            raise ParseError(
                f"{where}: per-channel input distributions are not supported; "
                "all channels share the top-level input_dist"
            )
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ParseError(f"{where}: missing or empty 'name'")
        matrix = entry.get("matrix")
        if not isinstance(matrix, list) or not matrix:
            raise ParseError(f"{where}.matrix: must be a nonempty list of rows")
        width = len(matrix[0]) if isinstance(matrix[0], list) else -1
        for y, row in enumerate(matrix):
            if not isinstance(row, list) or len(row) != width:
                raise ParseError(f"{where}.matrix[{y}]: ragged or non-list row")
        try:
            ch = Channel(np.array(matrix, dtype=float))
        except InputError as exc:
            raise type(exc)(f"{where}.matrix: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}.matrix: {exc}") from exc
        if ch.input_size != px.alphabet_size:
            raise ParseError(
                f"{where}.matrix: has {ch.input_size} columns but input_dist "
                f"has {px.alphabet_size} symbols"
            )
        channels.append((name, ch))
    if not channels:
        raise ParseError(f"{path}: 'channels' is empty")
    return px, channels


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def _round_floats(obj):
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def digest_bytes(blob: bytes) -> str:
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def digest_file(path: str) -> str:
    with open(path, "rb") as fp:
        return digest_bytes(fp.read())


def build_report(command, inputs_digest, flags, results, warnings=()):
    return _round_floats(
        {
            "command": command,
            "tool_version": __version__,
            "inputs_digest": inputs_digest,
            "flags": flags,
            "warnings": list(warnings),
            "results": results,
        }
    )


def render_json(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _flatten(prefix, obj, scalars, tables):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], scalars, tables)
    elif isinstance(obj, list):
        if obj and all(isinstance(r, dict) for r in obj):
            tables.append((prefix, obj))
        else:
            for i, v in enumerate(obj):
                _flatten(f"{prefix}.{i}", v, scalars, tables)
    else:
        scalars.append((prefix, obj))


def render_csv(report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    scalars, tables = [], []
    _flatten("", report, scalars, tables)
    writer.writerow(["key", "value"])
    for key, value in scalars:
        writer.writerow([key, value])
    for name, rows in tables:
        out.write(f"# table: {name}\n")
        cols = sorted({k for row in rows for k in row})
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row.get(c, "") for c in cols])
    return out.getvalue()


def emit(report, fmt: str, output: str | None):
    text = render_json(report) if fmt == "json" else render_csv(report)
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
    else:
        sys.stdout.write(text)


def _nats(value: float, bits: bool) -> float:
    return value / LN2 if bits else value


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _decay_table_dict(table, bits):
    return {
        "rows": [
            {
                "eps": r.eps,
                "exact": _nats(r.exact, bits),
                "quadratic": _nats(r.quadratic, bits),
                "residual": _nats(r.residual, bits),
            }
            for r in table.rows
        ],
        "halving_ratios": list(table.ratios),
        "passed": table.passed,
    }


def cmd_dtm(args) -> int:
    px, channels = load_channel_spec(args.spec)
    results = {"input_dist": px.probs, "channels": []}
    for name, ch in channels:
        d = build_dtm(ch, px)
        decomp = svd(d)
        results["channels"].append(
            {
                "name": name,
                "matrix": d.matrix,
                "output_dist": d.output_dist.probs,
                "singular_values": decomp.singular_values,
                "right_vectors": decomp.right_vectors.T,
                "left_vectors": decomp.left_vectors.T,
            }
        )
    report = build_report("dtm", digest_file(args.spec), _flag_dict(args), results)
    emit(report, args.format, args.output)
    return 0


def cmd_p2p(args) -> int:
    px, channels = load_channel_spec(args.spec)
    if len(channels) != 1:
        raise UsageError(
            f"p2p expects exactly one channel, spec has {len(channels)} "
            "(use 'broadcast' for several receivers)"
        )
    name, ch = channels[0]
    d = build_dtm(ch, px)
    cap = local_capacity(d)
    solution = solve_p2p(d)
    warnings = []
    if cap.locally_useless:
        warnings.append(
            f"channel '{name}' is locally useless: every perturbation direction "
            "is invisible at the output to second order"
        )
    results = {
        "channel": name,
        "efficiency": solution.value,
        "sigma2": cap.sigma,
        "multiplicity": cap.multiplicity,
        "locally_useless": cap.locally_useless,
        "direction": cap.direction.vec,
        "tangent_direction": solution.optimizer.atoms[0],
    }
    if args.verify_exact:
        ens = solution.optimizer.with_epsilon(args.eps)
        exact = efficiency(ens, [d], exact=True)
        results["exact_check"] = {
            "eps": args.eps,
            "quadratic_efficiency": solution.value,
            "exact_efficiency": float(exact[0]),
            "relative_error": (
                abs(float(exact[0]) - solution.value) / solution.value
                if solution.value > 0
                else 0.0
            ),
        }
    report = build_report(
        "p2p", digest_file(args.spec), _flag_dict(args), results, warnings
    )
    emit(report, args.format, args.output)
    return 0


def cmd_broadcast(args) -> int:
    px, channels = load_channel_spec(args.spec)
    if len(channels) < 2:
        raise UsageError(
            f"broadcast expects at least two channels, spec has {len(channels)} "
            "(use 'p2p' for a single receiver)"
        )
    opts = SolverOptions(seed=args.seed, tol=args.tol, grid=args.grid)
    dtms = [build_dtm(ch, px) for _, ch in channels]
    forms = [tangent_form(d) for d in dtms]
    names = [name for name, _ in channels]
    warnings = []

    dual = maxmin_dual(forms, opts)
    if len(channels) == 2:
        try:
            rank1 = solve_broadcast2(dtms[0], dtms[1], opts)
        except GapDetected as exc:
            rank1 = exc.solution
            warnings.append(
                f"WARNING two-receiver gap {rank1.gap:.6g} exceeds tol "
                f"{args.tol:g}; this instance is a finding worth logging"
            )
    else:
        rank1 = maxmin_rank1(forms, opts, dual=dual)
        if rank1.gap > args.tol:
            warnings.append(
                f"single-direction solutions leave a gap of {rank1.gap:.6g} "
                f"with more than two receivers (informational)"
            )
    ensemble_sol = maxmin_ensemble(forms, opts, dual=dual)
    ens = ensemble_sol.optimizer
    results = {
        "channels": names,
        "rank1": {
            "value": rank1.value,
            "direction": rank1.optimizer
            if isinstance(rank1.optimizer, np.ndarray)
            else rank1.optimizer.atoms[0],
        },
        "dual": {"value": dual.value, "weights": dual.weights},
        "gap": rank1.gap,
        "ensemble": {
            "value": ensemble_sol.value,
            "weights": ens.weights,
            "atoms": ens.atoms,
            "per_channel": form_efficiency(ens, forms),
        },
    }

    mix = sum(
        w * np.outer(a, a) for w, a in zip(ens.weights, ens.atoms)
    )
    if args.cardinality:
        if args.cardinality % 2 != 0:
            raise UsageError("--cardinality must be even (+/- atom pairs)")
        dirs = equal_weight_directions(mix, args.cardinality // 2)
        atoms = np.vstack([np.vstack([d, -d]) for d in dirs])
        weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        custom = CouplingEnsemble(weights=weights, atoms=atoms, basis=ens.basis,
                                  base=ens.base)
        results["cardinality_ensemble"] = {
            "cardinality": args.cardinality,
            "atoms": atoms,
            "weights": weights,
            "per_channel": form_efficiency(custom, forms),
        }
    if args.letters > 1:
        dirs = equal_weight_directions(mix, args.letters)
        construction = k_letter_construction(forms, dirs)
        results["multi_letter"] = {
            "letters": args.letters,
            "directions": dirs,
            "per_channel": construction.per_channel_values,
        }
    report = build_report(
        "broadcast", digest_file(args.spec), _flag_dict(args), results, warnings
    )
    emit(report, args.format, args.output)
    return 0


def _verify_direction(px: ProbDist) -> np.ndarray:
    """Deterministic perturbation direction for the sweep tables: the first
    tangent basis vector mapped back to additive (zero-sum) form."""
    q = tangent_basis(px)[:, 0]
    return q * px.sqrt()


def cmd_verify(args) -> int:
    px, channels = load_channel_spec(args.spec)
    eps_list = args.eps_list
    direction = _verify_direction(px)
    # Scale so the largest sweep value keeps the distribution well inside
    # the simplex.
    head = max(eps_list) if eps_list else 0.0
    if head > 0:
        margin = float(np.min(px.probs)) * 0.5
        worst = float(np.max(np.abs(direction))) * head
        if worst > margin:
            direction = direction * (margin / worst)
    try:
        quad = verify_quadratic_approx(px, direction, eps_list)
        sym = verify_divergence_symmetry(px, direction, eps_list)
    except InvalidEpsilon as exc:
        raise InvalidEpsilon(f"eps sweep: {exc}") from exc
    results = {
        "direction": direction,
        "eps_list": list(eps_list),
        "quadratic_approx": _decay_table_dict(quad, args.bits),
        "divergence_symmetry": _decay_table_dict(sym, args.bits),
        "kronecker_check": [],
    }
    all_passed = quad.passed and sym.passed
    for name, ch in channels:
        d = build_dtm(ch, px)
        decomp = svd(d)
        pairs = product_singular_values(
            decomp, 2, d.input_size * d.input_size
        )
        predicted = np.sort(np.array([v for v, _ in pairs]))[::-1]
        dense = np.linalg.svd(dense_kron(d, 2), compute_uv=False)
        padded = np.zeros(predicted.size)
        padded[: dense.size] = dense
        deviation = float(np.max(np.abs(predicted - padded)))
        passed = deviation <= 1e-9
        all_passed = all_passed and passed
        results["kronecker_check"].append(
            {"name": name, "max_deviation": deviation, "passed": passed}
        )
    results["all_passed"] = all_passed
    warnings = [] if all_passed else ["one or more decay checks failed"]
    report = build_report(
        "verify", digest_file(args.spec), _flag_dict(args), results, warnings
    )
    emit(report, args.format, args.output)
    return 0


def cmd_windmill(args) -> int:
    if args.k < 2:
        raise InvalidK(f"windmill needs k >= 2, got {args.k}")
    instance = wm.make_windmill(args.k)
    warnings = []
    opts = SolverOptions(seed=args.seed, tol=args.tol, grid=args.grid or 100_000)
    single = wm.single_letter_value(instance, opts)
    dual = maxmin_dual(instance.forms, opts)
    results = {
        "k": args.k,
        "angles": instance.angles,
        "single_letter": {
            "value": single.value,
            "direction": single.optimizer,
            "dual_value": single.dual_value,
            "gap": single.gap,
        },
    }
    if instance.degenerate:
        warnings.append(
            "k=2 is degenerate: both projections coincide, a single direction "
            "already achieves the top value"
        )
    else:
        letters = args.letters or args.k
        if letters != args.k:
            raise UsageError(
                f"the rotating schedule uses exactly k={args.k} letters"
            )
        multi = wm.multiletter_value(instance, args.theta)
        card = wm.cardinality_solution(instance, args.theta)
        results["multi_letter"] = {
            "letters": letters,
            "theta": args.theta,
            "per_channel": multi,
        }
        results["cardinality_ensemble"] = {
            "cardinality": 2 * args.k,
            "atoms": card.atoms,
            "weights": card.weights,
            "per_channel": form_efficiency(card, instance.forms),
        }
    sweep_points = args.grid or 360
    sweep_points = min(sweep_points, 100_000)
    thetas = np.pi * np.arange(sweep_points) / sweep_points
    dirs = np.stack([np.cos(thetas), np.sin(thetas)])
    stack = np.stack([f.matrix for f in instance.forms])
    sweep_vals = np.einsum("kab,an,bn->kn", stack, dirs, dirs).min(axis=0)
    results["direction_sweep"] = [
        {"theta": float(t), "min_efficiency": float(v)}
        for t, v in zip(thetas, sweep_vals)
    ]
    flags = _flag_dict(args)
    canonical = json.dumps(flags, sort_keys=True).encode("utf-8")
    report = build_report(
        "windmill", digest_bytes(canonical), flags, results, warnings
    )
    emit(report, args.format, args.output)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _flag_dict(args):
    skip = {"func", "spec", "command"}
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in skip
    }


def _add_common(parser, spec_required=True):
    if spec_required:
        parser.add_argument("spec", help="channel spec file (JSON)")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--output", default=None, help="write the report here")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument(
        "--bits", action="store_true",
        help="display divergences in bits instead of nats",
    )


def _eps_list(text: str):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}: {exc}")
    if not values:
        raise argparse.ArgumentTypeError("eps list is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infocoupling",
        description=(
            "Analyze how efficiently a thin layer of information couples "
            "through discrete memoryless channels."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dtm", help="whitened channel matrices and their SVDs")
    _add_common(p)
    p.set_defaults(func=cmd_dtm)

    p = sub.add_parser("p2p", help="single-channel coupling efficiency")
    _add_common(p)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument(
        "--verify-exact", action="store_true",
        help="also compute exact mutual-information efficiencies at --eps",
    )
    p.set_defaults(func=cmd_p2p)

    p = sub.add_parser("broadcast", help="common-message max-min over receivers")
    _add_common(p)
    p.add_argument("--letters", type=int, default=1)
    p.add_argument("--cardinality", type=int, default=0)
    p.add_argument("--grid", type=int, default=0)
    p.set_defaults(func=cmd_broadcast)

    p = sub.add_parser("verify", help="quadratic-approximation certificates")
    _add_common(p)
    p.add_argument(
        "--eps-list", type=_eps_list, default=[0.1, 0.05, 0.025, 0.0125],
        help="comma-separated halving sweep",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("windmill", help="the k-receiver rotated-projection family")
    _add_common(p, spec_required=False)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--letters", type=int, default=0)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=0)
    p.set_defaults(func=cmd_windmill)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
