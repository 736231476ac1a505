"""Command line interface: ``slimtt {build,validate,simulate,info,export-model}``.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, _kernels, io, models
from .master import StateCapError, dense_generator, elementwise_generator, state_cap, verify_generator
from .reactions import load_model, save_model
from .slim import build_slim_markov, storage_count
from .solvers import (
    AlsConfig,
    AlsError,
    PropagationConfig,
    implicit_euler,
    point_mass,
    write_trajectory_csv,
)
from .tt import TtOperator, tt_op_to_full, tt_to_full

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
VALIDATION_TOL = 1e-12


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# model resolution
# ---------------------------------------------------------------------------

def _overrides(args) -> dict:
    out = {}
    for key in ("d", "n", "m"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def resolve(args):
    """Return ``(label, kind, params_or_None, built_object)``."""
    name = args.model
    overrides = _overrides(args)
    if name not in models.MODELS:
        path = Path(name)
        if not path.is_file():
            raise UsageError(f"unknown model {name!r}; choose from {sorted(models.MODELS)} or give a model file")
        if overrides:
            raise UsageError("parameter overrides do not apply to model files")
        return path.stem, "markov", None, load_model(path)
    entry = models.MODELS[name]
    try:
        params = models.make_params(name, overrides)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return name, entry.kind, params, entry.builder(params)


def _slim_object(kind, obj, compress=True):
    if kind == "markov":
        return build_slim_markov(obj, compress=compress)
    return obj


def _manifest(args, extra) -> dict:
    out = {
        "command": args.command,
        "argv": list(args.argv),
        "model": args.model,
        "overrides": _overrides(args) if hasattr(args, "param") else {},
        "version": __version__,
        "backend": _kernels.backend(),
    }
    out.update(extra)
    return out


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    label, kind, params, obj = resolve(args)
    t0 = time.perf_counter()
    tt = _slim_object(kind, obj, compress=not args.no_compress)
    elapsed = time.perf_counter() - t0
    meta = tt.meta
    lines = [
        f"model: {label}",
        f"kind: {kind}",
        f"modes: {list(tt.modes)}",
        f"cyclic: {tt.cyclic}",
        f"ranks: {list(tt.ranks)}",
        f"max interior rank: {max(tt.ranks[1:-1]) if tt.d > 1 else 1}",
    ]
    if "uncompressed_betas" in meta:
        lines.append(f"couplings per edge (raw): {meta['uncompressed_betas']}")
    if "betas" in meta:
        lines.append(f"couplings per edge: {meta['betas']}")
    if isinstance(tt, TtOperator) and "betas" in meta:
        counts = storage_count(meta["betas"], tt.modes, meta["cyclic"])
        lines.append(f"storage per core: {counts}")
        lines.append(f"storage total: {sum(counts)}")
    lines.append(f"build time: {elapsed:.3f} s")
    report = "\n".join(lines)
    print(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        io.save(out, tt)
        report_path = out.with_suffix(out.suffix + ".report.txt")
        report_path.write_text(report + "\n")
        manifest_path = out.with_suffix(out.suffix + ".manifest.json")
        _write_json(manifest_path, _manifest(args, {
            "params": asdict(params) if params is not None else None,
            "compress": not args.no_compress,
            "outputs": [str(out), str(report_path)],
            "seed": None,
        }))
        print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    label, kind, params, obj = resolve(args)
    tt = _slim_object(kind, obj)
    try:
        size = int(np.prod(tt.modes))
        if size > state_cap():
            raise StateCapError(
                f"{size} grid points exceed the dense cap {state_cap()}; "
                "reduce d or n (or raise SLIMTT_STATE_CAP)"
            )
        if kind == "markov":
            dense = tt_op_to_full(tt).matrix()
            oracle = dense_generator(obj).matrix()
            cross = elementwise_generator(obj).matrix()
            report = verify_generator(dense_generator(obj))
            diff = float(np.max(np.abs(dense - oracle)))
            cross_equal = bool(np.array_equal(oracle, cross))
            print(f"{label}: max |SLIM - oracle| = {diff:.3e}")
            print(f"{label}: tensor-notation oracle == elementwise oracle: {cross_equal}")
            print(f"{label}: {report.summary()}")
            ok = diff <= VALIDATION_TOL and cross_equal
        else:
            if args.model == "ising":
                got, want = tt_to_full(tt).entries, models.ising_dense(params).entries
            else:
                got, want = tt_op_to_full(tt).entries, models.oscillator_dense(params).entries
            diff = float(np.max(np.abs(got - want)))
            print(f"{label}: max |SLIM - direct| = {diff:.3e}")
            ok = diff <= VALIDATION_TOL
    except StateCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_INVALID


def _initial_state(args, modes):
    if args.initial:
        try:
            state = [int(v) for v in args.initial.split(",")]
        except ValueError as exc:
            raise UsageError(f"--initial expects comma-separated integers, got {args.initial!r}") from exc
        if len(state) == 1:
            state = state * len(modes)
        if len(state) != len(modes):
            raise UsageError(f"--initial has {len(state)} entries for {len(modes)} cells")
    else:
        state = [n // 2 + 1 for n in modes]
    return state


def cmd_simulate(args) -> int:
    label, kind, params, obj = resolve(args)
    if kind != "markov":
        raise UsageError(f"model {label!r} is not a master-equation model")
    op = build_slim_markov(obj)
    state = _initial_state(args, op.modes)
    try:
        p0 = point_mass(op.modes, state)
    except IndexError as exc:
        raise UsageError(str(exc)) from exc
    als = AlsConfig(ranks=args.ranks, max_sweeps=args.sweeps, tol=args.tol, seed=args.seed)
    cfg = PropagationConfig(args.tau, args.steps, p0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snapshots = []

    def snapshot(k, current, eps):
        if args.snapshot_every and k % args.snapshot_every == 0:
            path = out / f"state_{k:05d}.tt"
            io.save(path, current)
            snapshots.append(str(path))

    try:
        traj = implicit_euler(op, cfg, als, callback=snapshot)
    except AlsError as exc:
        print(f"error: ALS failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    csv_path = write_trajectory_csv(out / "trajectory.csv", traj)
    max_eps = max(traj.eps)
    _write_json(out / "manifest.json", _manifest(args, {
        "params": asdict(params) if params is not None else None,
        "solver": {"als": asdict(als), "tau": args.tau, "steps": args.steps, "initial_state": state},
        "outputs": [str(csv_path)] + snapshots,
        "seed": args.seed,
        "max_eps": max_eps,
    }))
    print(f"{label}: {args.steps} steps, tau={args.tau}, ranks={args.ranks}")
    print(f"max eps_k = {max_eps:.6e}")
    print(f"wrote {csv_path}")
    if not np.isfinite(max_eps):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_info(args) -> int:
    try:
        header = io.info(args.path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read container {args.path!r}: {exc}") from exc
    print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export_model(args) -> int:
    label, kind, params, obj = resolve(args)
    if kind != "markov":
        raise UsageError(f"model {label!r} is not a reaction system")
    path = save_model(args.out, obj)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _model_args(p):
    p.add_argument("model", help=f"one of {sorted(models.MODELS)} or a model file (.json)")
    p.add_argument("--d", type=int, help="number of cells")
    p.add_argument("--n", type=int, help="states per cell")
    p.add_argument("--m", type=int, help="oscillator grid half-width")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="other parameter overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slimtt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slimtt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a SLIM tensor train and report ranks and storage")
    _model_args(p)
    p.add_argument("--out", help="write the TT container here")
    p.add_argument("--no-compress", action="store_true", help="skip pair compression")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("validate", help="compare the SLIM form with dense oracles")
    _model_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="implicit Euler propagation with ALS")
    _model_args(p)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--ranks", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=AlsConfig.max_sweeps)
    p.add_argument("--tol", type=float, default=AlsConfig.tol)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial", help="1-based initial state, one value for all cells or a comma list")
    p.add_argument("--snapshot-every", type=int, default=0, help="save the TT state every N steps")
    p.add_argument("--out", default="slimtt-run", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("info", help="print the header of a TT container")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("export-model", help="write a model's reaction system as a model file")
    _model_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError, MemoryError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
