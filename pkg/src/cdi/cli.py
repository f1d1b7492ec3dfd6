"""Command line front end: model tables, speed queries, limit-law
verification runs, large-deviation tables and estimates, and reproducible
run manifests.

Exit codes: 0 = the run completed (pass/fail lives in the payload),
2 = usage error, 3 = numeric failure (quadrature, root finding, tail
certification, truncation).

Every command that writes an output file also writes `<out>.manifest.json`
recording the argv, seed, library version, measured wall time, and the
sha256 of each output.  `cdi replay <manifest>` re-runs the recorded argv
into a sibling file and verifies the digests match byte for byte; payload
files therefore never embed wall-clock values (wall_time_ms is null inside
payloads and measured in the manifest).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import large_deviations as ld
from . import limit_laws, simulation
from .rate_models import PRESET_NAMES, RateModel, preset, rate
from .tail_analysis import (MaxIndexExceeded, TailSumError, speed,
                            tail_moments)

_NUMERIC_ERRORS = (
    ld.QuadratureError, ld.RootBracketError, ld.LdDomainError,
    TailSumError, MaxIndexExceeded,
    simulation.TruncationError, simulation.TiltDomainError,
    simulation.DivergentMgfError,
    limit_laws.IllConditionedError,
    FloatingPointError, ZeroDivisionError, OverflowError,
)

_VERIFY_IDS = ("lln", "clt", "thm1-limit", "thm2iii", "corollary")


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def _fmt(v: float) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.17g}"


def _parse_int_list(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        lo_i, hi_i = int(lo), int(hi)
        if hi_i < lo_i:
            raise _UsageError(f"empty range {text!r}")
        return list(range(lo_i, hi_i + 1))
    return [int(p) for p in text.split(",") if p]


def _parse_float_list(text: str) -> list[float]:
    return [float(p) for p in text.strip().split(",") if p]


def _load_preset_file(path: str) -> RateModel:
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            try:
                import tomllib as toml_mod  # py3.11+
            except ModuleNotFoundError:
                import tomli as toml_mod
            doc = toml_mod.load(fh)
        elif path.endswith(".json"):
            doc = json.load(fh)
        else:
            raise _UsageError(f"preset file {path!r} must end in .toml or .json")
    if "kind" not in doc:
        raise _UsageError(f"preset file {path!r} lacks the 'kind' key")
    kind = str(doc["kind"])
    params = {k: float(doc[k]) for k in ("beta", "a", "rho", "c") if k in doc}
    # range_hint is advisory metadata for plotting; not a model parameter
    try:
        return preset(kind, **params)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _build_model(args) -> RateModel:
    name = getattr(args, "preset", None)
    if name:
        if name.endswith((".toml", ".json")) or os.path.sep in name:
            if not os.path.exists(name):
                raise _UsageError(f"preset file not found: {name}")
            return _load_preset_file(name)
        params = {}
        for key in ("a", "rho", "c", "beta"):
            val = getattr(args, key, None)
            if val is not None:
                params[key] = val
        key = name.strip().lower().replace("-", "").replace("_", "")
        wanted = {"logpow": ("a",), "polytail": ("c", "beta"),
                  "stretched": ("rho",)}.get(key, ())
        try:
            return preset(name, **{k: v for k, v in params.items() if k in wanted})
        except ValueError as exc:
            raise _UsageError(str(exc)) from exc
    beta = getattr(args, "beta", None)
    if beta is not None:
        if not beta > 1.0:
            raise _UsageError(f"--beta must be > 1, got {beta}")
        return preset("polytail", c=1.0, beta=beta)
    raise _UsageError("specify a model with --preset NAME|FILE or --beta B")


def _sim_config(args, default_reps: int, default_tol: float) -> simulation.SimConfig:
    return simulation.SimConfig(
        seed=args.seed if args.seed is not None else 0,
        replicates=args.reps if args.reps is not None else default_reps,
        trunc_tol=args.tol if args.tol is not None else default_tol,
    )


def _json_payload(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_payload(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommand handlers (return payload text)


def _cmd_rates(args) -> str:
    model = _build_model(args)
    ns = _parse_int_list(args.n)
    if min(ns) < 2:
        raise _UsageError("rates are defined for n >= 2")
    return _csv_payload(["n", "lambda"], [[n, rate(model, n)] for n in ns])


def _cmd_tails(args) -> str:
    model = _build_model(args)
    ns = _parse_int_list(args.n)
    if min(ns) < 1:
        raise _UsageError("tail sums are defined for n >= 1")
    tol = args.tol if args.tol is not None else 1e-10
    rows = []
    for n in ns:
        st = tail_moments(model, n, tol=tol, power_rel=1e-9)
        rows.append([n, rate(model, max(n, 2)), st.A, st.B, st.C])
    return _csv_payload(["n", "lambda", "A", "B", "C"], rows)


def _cmd_speed(args) -> str:
    model = _build_model(args)
    ts = _parse_float_list(args.t)
    return _csv_payload(["t", "v"], [[t, speed(model, t)] for t in ts])


def _level_time(model: RateModel, args) -> float:
    """Resolve --t or --v (level alias: t = A_v) to a time."""
    if getattr(args, "t", None) is not None:
        return float(args.t)
    v = getattr(args, "v", None)
    if v is None:
        raise _UsageError("need --t TIME or --v LEVEL")
    return tail_moments(model, int(v)).A


def _cmd_verify(args) -> str:
    if args.test_id not in _VERIFY_IDS:
        raise _UsageError(
            f"unknown test id {args.test_id!r}; choose from {_VERIFY_IDS}"
        )
    model = _build_model(args)
    if args.test_id == "clt":
        cfg = _sim_config(args, 10_000, 1e-3)
        n = args.n_int if args.n_int is not None else 500
        report = limit_laws.verify_clt(model, n, cfg)
        payload = report.to_json_dict()
    elif args.test_id == "thm1-limit":
        cfg = _sim_config(args, 10_000, 1e-3)
        n = args.n_int if args.n_int is not None else 30
        report = limit_laws.verify_thm1_limit(model, n, cfg)
        payload = report.to_json_dict()
    elif args.test_id == "thm2iii":
        cfg = _sim_config(args, 10_000, 1e-3)
        n = args.n_int if args.n_int is not None else 30
        report = limit_laws.verify_thm2iii(model, n, cfg)
        payload = report.to_json_dict()
    elif args.test_id == "lln":
        cfg = _sim_config(args, 10_000, 1e-3)
        t = _level_time(model, args)
        report = limit_laws.verify_lln(model, t, cfg)
        payload = report.to_json_dict()
    else:  # corollary
        cfg = _sim_config(args, 10_000, 1e-3)
        t = _level_time(model, args)
        report = limit_laws.verify_corollary(model, t, cfg)
        payload = report.to_json_dict()
    payload["wall_time_ms"] = None
    return _json_payload(payload)


_FIGURE_BETAS = (1.3, 2.0, 3.0)


def _ld_grid(args) -> list[float]:
    if getattr(args, "x", None):
        return _parse_float_list(args.x)
    return list(np.geomspace(0.05, 5.0, 100))


def _cmd_ld(args) -> str:
    if args.beta is not None and not args.beta > 1.0:
        raise _UsageError(f"--beta must exceed 1, got {args.beta}")
    if args.mode == "table":
        if args.beta is None:
            raise _UsageError("ld table needs --beta")
        ctx = ld.LdContext(beta=args.beta)
        rows = []
        for x in _ld_grid(args):
            ev = ld.rate_eval(ctx, x)
            rows.append([x, ev.tau, ev.I, ev.J])
        return _csv_payload(["x", "tau", "I", "J"], rows)
    if args.mode == "figure":
        rows = []
        for beta in _FIGURE_BETAS:
            ctx = ld.LdContext(beta=beta)
            for x in _ld_grid(args):
                ev = ld.rate_eval(ctx, x)
                rows.append([beta, x, ev.tau, ev.I, ev.J])
        return _csv_payload(["beta", "x", "tau", "I", "J"], rows)
    if args.mode == "estimate":
        model = _build_model(args)
        if args.beta is not None:
            beta = args.beta
        elif model.beta is not None:
            beta = model.beta
        else:
            raise _UsageError("ld estimate needs --beta or a preset with a known index")
        ctx = ld.LdContext(beta=beta)
        levels = _parse_int_list(args.n) if args.n else [25, 50, 100]
        x = float(args.x) if args.x else 2.0
        cfg = _sim_config(args, 100_000, 1.0)
        report = ld.verify_thm3(ctx, model, x, levels, cfg, side=args.side)
        payload = report.to_json_dict()
        payload.update({
            "model": model.label,
            "seed": cfg.seed,
            "replicates": cfg.replicates,
            "trunc_tol": cfg.trunc_tol,
            "wall_time_ms": None,
        })
        return _json_payload(payload)
    raise _UsageError(f"unknown ld mode {args.mode!r}")


def _cmd_replay(args) -> str:
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read manifest {args.manifest!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise _UsageError(f"manifest {args.manifest!r} is not valid JSON: {exc}")
    argv = list(manifest.get("argv", []))
    outputs = manifest.get("outputs", [])
    if not argv or not outputs:
        raise _UsageError(f"manifest {args.manifest!r} has no replayable argv/outputs")
    orig_out = outputs[0]["path"]
    replay_out = args.replay_out or (orig_out + ".replay")
    new_argv = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        new_argv.append(tok)
    new_argv += ["--out", replay_out]
    code = main(new_argv)
    if code != 0:
        raise _UsageError(f"replayed command exited with {code}")
    got = _sha256(replay_out)
    want = outputs[0]["sha256"]
    verdict = "identical" if got == want else "MISMATCH"
    lines = [f"{verdict}: {replay_out} sha256={got}"]
    if got != want:
        lines.append(f"expected sha256={want}")
        raise ReplayMismatch("\n".join(lines))
    return "\n".join(lines) + "\n"


class ReplayMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# emission + manifests


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(args, argv: list[str], payload: str, wall_ms: float) -> None:
    out = getattr(args, "out", None)
    if not out:
        sys.stdout.write(payload)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    digest = _sha256(out)
    manifest = {
        "command": args.command,
        "argv": argv,
        "params": {k: v for k, v in sorted(vars(args).items())
                   if k not in ("func", "command") and v is not None},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_ms": wall_ms,
        "outputs": [{"path": out, "sha256": digest}],
    }
    with open(out + ".manifest.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sys.stdout.write(
        f"wrote {out} sha256={digest[:16]} wall_time_ms={wall_ms:.1f}\n"
    )


# ---------------------------------------------------------------------------
# parser


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help=f"model preset name ({', '.join(PRESET_NAMES)}) or a .toml/.json preset file")
    p.add_argument("--beta", type=float, help="regular-variation index (bare value builds a unit polytail model)")
    p.add_argument("--a", type=float, help="logpow exponent")
    p.add_argument("--rho", type=float, help="stretched exponent in (0,1)")
    p.add_argument("--c", type=float, help="polytail scale")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--tol", type=float, help="truncation tolerance")
    p.add_argument("--threads", type=int,
                   help="accepted for interface compatibility; replicate "
                        "blocks are deterministic regardless")
    p.add_argument("--out", help="write payload to this file (+ manifest)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdi",
        description="Pure death processes coming down from infinity: tables, "
                    "simulation-backed verification, large-deviation tools.",
    )
    parser.add_argument("--version", action="version", version=f"cdi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="emit death rates as CSV")
    _add_model_flags(p)
    p.add_argument("--n", required=True, help="level or range lo:hi or comma list")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rates)

    p = sub.add_parser("tails", help="emit tail sums A, B, C as CSV")
    _add_model_flags(p)
    p.add_argument("--n", required=True, help="level or range lo:hi or comma list")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tails)

    p = sub.add_parser("speed", help="evaluate the speed of descent v(t)")
    _add_model_flags(p)
    p.add_argument("--t", required=True, help="time or comma list of times")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_speed)

    p = sub.add_parser("verify", help="run a limit-law verification")
    p.add_argument("test_id", help=f"one of {', '.join(_VERIFY_IDS)}")
    _add_model_flags(p)
    p.add_argument("--n", dest="n_int", type=int, help="hitting-time level")
    p.add_argument("--t", type=float, help="observation time")
    p.add_argument("--v", type=int, help="target speed level (t = A_v)")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("ld", help="large-deviation tables, figure data, estimates")
    p.add_argument("mode", choices=("table", "figure", "estimate"))
    _add_model_flags(p)
    p.add_argument("--x", help="x value or comma list (table/estimate)")
    p.add_argument("--n", help="levels for estimate, e.g. 25,50,100")
    p.add_argument("--side", choices=("hitting", "population"), default="hitting")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_ld)

    p = sub.add_parser("replay", help="re-run a manifest and verify digests")
    p.add_argument("manifest")
    p.add_argument("--out", dest="replay_out",
                   help="path for the replayed output (default <orig>.replay)")
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    t0 = time.perf_counter()
    try:
        payload = args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReplayMismatch as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # argument validation raised below the handlers (bad env override,
        # rejected model parameter); numeric ValueError subclasses exit 3 above
        print(f"error: {exc}", file=sys.stderr)
        return 2
    wall_ms = (time.perf_counter() - t0) * 1000.0
    try:
        _emit(args, list(argv), payload, wall_ms)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
