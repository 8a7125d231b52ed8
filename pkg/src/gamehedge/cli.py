"""Command line front end: one subcommand per computation, JSON in, CSV or JSON out.

Exit status is 0 on success, 2 when the input is malformed or the hedge's
cash-leg condition fails without an override, and 1 on any other error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from typing import Any, Callable

import jsonschema
import numpy as np

from . import lawdensity as ld
from .envelope import ClosedFormEnvelope, default_domain, envelope_for, g_grid
from .hedge import AssumptionFailure, build_hedge
from .models import (
    ExpClipTarget,
    Heston,
    model_from_dict,
    simulate,
    steer_volatility,
    write_pathbatch_binary,
    write_pathbatch_csv,
)
from .payoff import default_probe, pair_from_dict, validate_pair
from .rng import DEFAULT_SEED
from .semistatic import dual_price, feasibility_ball, payoff_from_spec, primal_superhedge, statics_from_dict, tree_from_dict
from .stopvalue import default_lattice, solve_g_lattice
from .verify import counterexample_run, lower_bound_check, mc_superreplication

__all__ = ["main", "SCHEMAS", "InputError"]


class InputError(ValueError):
    """Bad input: exit status 2."""


# --- schemas ----------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}

_PAYOFF = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["call", "put", "power", "tabulated"]},
        "K": _POS,
        "c": _NUM,
        "delta": _NUM,
        "p": _NUM,
        "xs": {"type": "array", "items": _POS, "minItems": 2},
        "ys": {"type": "array", "items": _NUM, "minItems": 2},
    },
}

_PAIR_PROPS = {"f1": _PAYOFF, "f2": _PAYOFF, "L": {"type": "number", "exclusiveMinimum": 1}}

_MODEL = {
    "type": "object",
    "required": ["model"],
    "properties": {
        "model": {"type": "string"},
        "s0": _POS,
        "T": _POS,
        "r": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]},
    },
}

_TREE = {"type": "object", "properties": {"s0": _POS, "price": _POS, "children": {"type": "array"}}}
_PATH_PAYOFF = {"type": "object", "required": ["type"], "properties": {"type": {"enum": ["call", "put", "constant", "max", "vector"]}}}

SCHEMAS: dict[str, dict] = {
    "envelope": {
        "type": "object",
        "required": ["f1", "f2", "s0"],
        "properties": {
            **_PAIR_PROPS,
            "s0": _POS,
            "domain": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
            "n_points": {"type": "integer", "minimum": 16},
            "method": {"enum": ["auto", "closed", "grid", "sweep"]},
        },
    },
    "hedge": {
        "type": "object",
        "required": ["f1", "f2", "s0"],
        "properties": {**_PAIR_PROPS, "s0": _POS, "r": {"type": "number", "minimum": 0}, "allow_override": {"type": "boolean"}},
    },
    "simulate": {
        "type": "object",
        "required": ["model", "n_steps", "n_paths"],
        "properties": {"model": _MODEL, "n_steps": _INT, "n_paths": _INT, "format": {"enum": ["csv", "binary"]}},
    },
    "verify": {
        "type": "object",
        "required": ["model", "payoff"],
        "properties": {
            "model": _MODEL,
            "payoff": {"type": "object", "required": ["f1", "f2"], "properties": _PAIR_PROPS},
            "s0": _POS,
            "n_paths": _INT,
            "n_steps": _INT,
            "allow_override": {"type": "boolean"},
            "per_path_csv": {"type": "string"},
        },
    },
    "counterexample": {
        "type": "object",
        "properties": {"r": {"type": "number", "minimum": 0}, "delta": {"type": "number", "minimum": 0}, "n_paths": _INT, "n_steps": _INT},
    },
    "stopvalue": {
        "type": "object",
        "required": ["f1", "f2", "x0"],
        "properties": {
            **_PAIR_PROPS,
            "x0": _POS,
            "v_lo": {"type": "number", "minimum": 0},
            "v_hi": _POS,
            "u": _POS,
            "n_y": {"type": "integer", "minimum": 8},
            "x_min": _POS,
            "x_max": _POS,
            "v_hi_list": {"type": "array", "items": _POS, "minItems": 1},
        },
    },
    "semistatic": {
        "type": "object",
        "required": ["tree", "payoff"],
        "properties": {
            "tree": _TREE,
            "payoff": _PATH_PAYOFF,
            "statics": {
                "type": "array",
                "items": {"type": "object", "required": ["payoff", "price"], "properties": {"payoff": _PATH_PAYOFF, "price": _NUM}},
            },
            "feasibility_eps": _POS,
        },
    },
    "lawdensity": {
        "type": "object",
        "required": ["law"],
        "properties": {
            "law": {
                "type": "object",
                "required": ["n", "s0", "steps"],
                "properties": {
                    "n": _INT,
                    "s0": _POS,
                    "T": _POS,
                    "C": _POS,
                    "steps": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["conditionals"],
                            "properties": {
                                "conditionals": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["given", "support", "prob"],
                                        "properties": {
                                            "given": {"oneOf": [_POS, {"type": "array", "items": _POS}]},
                                            "support": {"type": "array", "items": _POS, "minItems": 1},
                                            "prob": {"type": "array", "items": _NUM, "minItems": 1},
                                        },
                                    },
                                }
                            },
                        },
                    },
                },
            },
            "n_samples": _INT,
            "fine_per_block": _INT,
            "weak": {
                "type": "object",
                "properties": {
                    "n_list": {"type": "array", "items": _INT, "minItems": 1},
                    "sigma": {"type": "number", "minimum": 0},
                    "n_samples": _INT,
                    "n_fine": _INT,
                },
            },
        },
    },
    "steer": {
        "type": "object",
        "properties": {
            "model": _MODEL,
            "n_blocks": {"oneOf": [_INT, {"type": "array", "items": _INT, "minItems": 1}]},
            "eps": _POS,
            "n_paths": _INT,
            "n_fine": _INT,
            "target": {"type": "object", "properties": {"a": _NUM, "b": _NUM, "c": {"type": "number", "minimum": 0}}},
        },
    },
}

# subcommands that run without an input file
_INPUT_OPTIONAL = {"counterexample", "steer"}


# --- output -----------------------------------------------------------------


def _clean(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj: Any) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header: list[str], cols: list[np.ndarray], fmts: list[str]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    np.savetxt(buf, np.column_stack(cols), delimiter=",", fmt=fmts)
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# --- input ------------------------------------------------------------------


def _load(path: str | None, command: str) -> dict:
    if path is None:
        if command in _INPUT_OPTIONAL:
            return {}
        raise InputError(f"{command}: --in is required")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{path}: field {where}: {exc.message}") from exc
    return cfg


def _build(fn: Callable, *args, **kw):
    """Construct a domain object, turning its validation errors into input errors."""
    try:
        return fn(*args, **kw)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(str(exc)) from exc


def _pair(cfg: dict, s0: float):
    pair = _build(pair_from_dict, cfg)
    report = validate_pair(pair, default_probe(pair, s0))
    if not report.ok:
        raise InputError(f"payoff pair rejected: {report.reason} at x={report.x}")
    return pair


# --- subcommands ------------------------------------------------------------


def cmd_envelope(cfg: dict, args) -> int:
    """Game concave envelope on a grid as CSV."""
    s0 = float(cfg["s0"])
    pair = _pair(cfg, s0)
    method = cfg.get("method", "auto")
    n = int(cfg.get("n_points", 4096))
    lo, hi = cfg.get("domain", default_domain(pair, s0, n))
    if not 0 < lo < hi:
        raise InputError("domain must satisfy 0 < lo < hi")
    if method == "auto":
        env = envelope_for(pair, s0, n)
    elif method == "closed":
        env = _build(ClosedFormEnvelope, pair)
    else:
        env = g_grid(pair, (lo, hi), n, method="active-set" if method == "grid" else "sweep")
    grid = getattr(env, "xs", None)
    xs = grid if grid is not None else np.linspace(lo, hi, n)
    if lo <= s0 <= hi:
        xs = np.union1d(xs, [s0])
    g = np.asarray(env.value(xs), dtype=float)
    dplus = np.array([env.right_derivative(x) for x in xs])
    stop = np.array([env.in_contact(x) for x in xs], dtype=int)
    text = _csv(
        ["x", "g", "dplus", "f1", "f2", "stop_mask"],
        [xs, g, dplus, pair.f1(xs), pair.f2(xs), stop],
        ["%.17g"] * 5 + ["%d"],
    )
    _emit(text, args.out)
    return 0


def cmd_hedge(cfg: dict, args) -> int:
    """Trivial hedge at s0 as JSON."""
    s0 = float(cfg["s0"])
    pair = _pair(cfg, s0)
    env = envelope_for(pair, s0)
    r = float(cfg.get("r", 0.0))
    hedge = build_hedge(env, pair, s0, allow_override=bool(cfg.get("allow_override", False)), rate_is_zero=r == 0)
    _emit(dumps(hedge.to_dict()), args.out)
    return 0


def cmd_simulate(cfg: dict, args) -> int:
    """Simulate model paths to CSV or binary."""
    spec = _build(model_from_dict, cfg["model"])
    batch = simulate(spec, int(cfg["n_steps"]), int(cfg["n_paths"]), args.seed, args.threads)
    if cfg.get("format", "csv") == "binary":
        if args.out is None:
            raise InputError("binary output needs --out")
        with open(args.out, "wb") as fh:
            write_pathbatch_binary(batch, fh)
        return 0
    buf = io.StringIO()
    write_pathbatch_csv(batch, buf)
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_verify(cfg: dict, args) -> int:
    """Audit the trivial hedge on simulated paths."""
    spec = _build(model_from_dict, cfg["model"])
    s0 = float(cfg.get("s0", spec.s0))
    pair = _pair(cfg["payoff"], s0)
    rep = mc_superreplication(
        spec,
        pair,
        s0,
        int(cfg.get("n_paths", 10_000)),
        int(cfg.get("n_steps", 512)),
        args.seed,
        args.threads,
        allow_override=bool(cfg.get("allow_override", False)),
    )
    if "per_path_csv" in cfg:
        ids = np.arange(rep.n_paths)
        text = _csv(
            ["path", "sigma_index", "slack_min"],
            [ids, rep.per_path_sigma_hat, rep.per_path_slack_min],
            ["%d", "%d", "%.17g"],
        )
        with open(cfg["per_path_csv"], "w", encoding="utf-8") as fh:
            fh.write(text)
    _emit(dumps(rep.to_dict()), args.out)
    return 0


def cmd_counterexample(cfg: dict, args) -> int:
    """Positive-rate failure of a hedge with negative cash."""
    rep = counterexample_run(
        args.seed,
        n_paths=int(cfg.get("n_paths", 10_000)),
        n_steps=int(cfg.get("n_steps", 512)),
        r=float(cfg.get("r", 0.05)),
        delta=float(cfg.get("delta", 0.0)),
        threads=args.threads,
    )
    _emit(dumps(rep.to_dict()), args.out)
    return 0


def cmd_stopvalue(cfg: dict, args) -> int:
    """Uncertain-volatility stopping value at x0."""
    x0 = float(cfg["x0"])
    pair = _pair(cfg, x0)
    base = _build(default_lattice, x0, pair.kinks, **({"n_y": int(cfg["n_y"])} if "n_y" in cfg else {}))
    kw = {k: cfg[k] for k in ("x_min", "x_max", "u", "v_lo", "v_hi") if k in cfg}
    spec = _build(base.replace, **kw)
    if not spec.x_min < x0 < spec.x_max:
        raise InputError("x0 must lie inside the lattice")
    surf = solve_g_lattice(pair, spec)
    g0 = float(envelope_for(pair, x0).value(x0))
    out = {"x0": x0, "value": surf.value_at(x0), "g": g0, "gap": surf.value_at(x0) - g0, "v_hi": spec.v_hi, "u": spec.u}
    if "v_hi_list" in cfg:
        out["lower_bound"] = lower_bound_check(pair, x0, cfg["v_hi_list"], grid=spec).to_dict()
    if args.out is not None:
        nt, ny = surf.V.shape
        text = _csv(
            ["t", "x", "V", "feedback_vol"],
            [np.repeat(surf.times, ny), np.tile(surf.xs, nt), surf.V.ravel(), surf.feedback_vol.ravel()],
            ["%.17g"] * 4,
        )
        _emit(text, args.out)
    sys.stdout.write(dumps(out))
    return 0


def cmd_semistatic(cfg: dict, args) -> int:
    """Robust price and hedge on a finite tree."""
    tree = _build(tree_from_dict, cfg["tree"])
    H = _build(payoff_from_spec, cfg["payoff"])
    statics = _build(statics_from_dict, cfg.get("statics", []))
    dual = dual_price(tree, H, statics)
    primal = primal_superhedge(tree, H, statics)
    out = dual.to_dict()
    out["primal_value"] = primal.to_dict()["primal_value"]
    out["primal_status"] = primal.status
    if "feasibility_eps" in cfg:
        out["feasibility_ball"] = feasibility_ball(tree, statics, float(cfg["feasibility_eps"]))
    _emit(dumps(out), args.out)
    return 0


def cmd_lawdensity(cfg: dict, args) -> int:
    """Coupling diagnostics for a discrete martingale law."""
    law = _build(ld.law_from_dict, cfg["law"])
    n_samples = int(cfg.get("n_samples", 100_000))
    batch = ld.quantile_coupling_sample(law, n_samples, args.seed, args.threads)
    match = ld.law_match_test(batch.M, law)

    # interpolation: exactness at block times and monotonicity in the increment
    m = int(cfg.get("fine_per_block", 8))
    small = ld.quantile_coupling_sample(law, min(n_samples, 2000), args.seed, args.threads, fine_per_block=m)
    paths = ld.interpolate_paths(law, small)
    grid_err = float(np.max(np.abs(paths[:, ::m] - small.M)))
    ws = np.linspace(-3.0, 3.0, 121) * math.sqrt(law.block)
    monotone = True
    for i in range(min(len(small), 50)):
        for k in range(law.n):
            c = law.conditional(k, small.M[i, : k + 1])
            vals = ld.psi(c, law.block, ws, 0.5 * law.block)
            monotone &= bool(np.all(np.diff(vals) >= -1e-12 * (1 + np.abs(vals[1:]))))
    lo, hi = float(paths.min()), float(paths.max())
    out = {
        "law_match": match.to_dict(),
        "interpolation": {
            "grid_time_max_error": grid_err,
            "monotone_in_increment": monotone,
            "min": lo,
            "max": hi,
            "within_bounds": bool(1.0 / law.C <= lo and hi <= law.C),
        },
    }
    weak = cfg.get("weak")
    if weak is not None:
        sigma = float(weak.get("sigma", 0.3))
        target = ld.GBMTarget(law.s0, sigma, law.T)
        table = ld.weak_distance_diag(
            lambda n: ld.binomial_gbm_law(n, law.s0, sigma, law.T),
            weak.get("n_list", [4, 8, 16]),
            int(weak.get("n_samples", 20_000)),
            args.seed,
            target,
            n_fine=int(weak.get("n_fine", 64)),
            threads=args.threads,
        )
        out["weak_distance"] = table.to_dict()
    _emit(dumps(out), args.out)
    return 0


def cmd_steer(cfg: dict, args) -> int:
    """Volatility steering exceedance probabilities."""
    spec = _build(model_from_dict, cfg.get("model", {"model": "heston"}))
    if not isinstance(spec, Heston):
        raise InputError("steering is implemented for the Heston model")
    blocks = cfg.get("n_blocks", [8, 16, 32, 64])
    blocks = [blocks] if isinstance(blocks, int) else blocks
    t = cfg.get("target", {})
    target = ExpClipTarget(math.sqrt(spec.v0), float(t.get("a", 0.0)), float(t.get("b", 0.0)), float(t.get("c", 1.0)))
    rows = []
    for n in blocks:
        res = steer_volatility(
            spec,
            target,
            int(n),
            float(cfg.get("eps", 0.05)),
            int(cfg.get("n_paths", 10_000)),
            args.seed,
            n_fine=int(cfg.get("n_fine", 1024)),
            threads=args.threads,
        )
        rows.append(res.to_dict())
    _emit(dumps({"results": rows}), args.out)
    return 0


COMMANDS: dict[str, Callable[[dict, Any], int]] = {
    "envelope": cmd_envelope,
    "hedge": cmd_hedge,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "counterexample": cmd_counterexample,
    "stopvalue": cmd_stopvalue,
    "semistatic": cmd_semistatic,
    "lawdensity": cmd_lawdensity,
    "steer": cmd_steer,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gamehedge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__)
        s.add_argument("--in", dest="inp", metavar="PATH", help="JSON input")
        s.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        s.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED}; FIM_SEED overrides)")
        s.add_argument("--threads", type=int, default=1, help="worker threads; 0 means one per CPU")
        s.add_argument("--schema", action="store_true", help="print the JSON input schema and exit")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.schema:
        sys.stdout.write(json.dumps(SCHEMAS[args.command], indent=2, sort_keys=True) + "\n")
        return 0
    env_seed = os.environ.get("FIM_SEED")
    if env_seed is not None:
        try:
            args.seed = int(env_seed)
        except ValueError:
            sys.stderr.write(f"error: FIM_SEED={env_seed!r} is not an integer\n")
            return 2
    args.threads = None if args.threads <= 0 else args.threads
    try:
        cfg = _load(args.inp, args.command)
        return COMMANDS[args.command](cfg, args)
    except (InputError, AssumptionFailure) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
