"""Command line interface.

Exit codes for solver commands follow the outcome: 0 local minimum,
2 unbounded, 3 non-regular abort, 4 step limit; 1 is reserved for file
and argument errors.  All randomness (network draws, start points,
nudges) flows from --seed through counter-based generators, so repeated
invocations with the same arguments produce identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bounds as bounds_mod
from .network import (
    ReluNetwork,
    activation_pattern,
    critical_indices,
    evaluate,
    load_model,
    oriented_normal,
    save_model,
)
from .primitives import Degenerate, DependentColumn, PseudoInverse
from .problems import (
    LpInstance,
    build_clad,
    build_from_lp,
    build_l1_first_layer,
    build_lasso,
    build_quantile_lasso,
    build_random,
    flatten_first_layer,
    load_csv,
    set_first_layer,
)
from .solver import (
    LOCAL_MINIMUM,
    NON_REGULAR,
    STEP_LIMIT,
    UNBOUNDED,
    SolverOptions,
    axis_derivatives,
    certify_local_min,
    drlsimplex,
    solve_quadratic,
)

EXIT_CODES = {LOCAL_MINIMUM: 0, UNBOUNDED: 2, NON_REGULAR: 3, STEP_LIMIT: 4}


def _parse_floats(text):
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def _parse_ints(text):
    return [int(v) for v in text.split(",")]


class _TraceWriter:
    """Appends one JSON object per record, flushed immediately."""

    def __init__(self, path):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def writer_for(self, start_index=None):
        def write(rec):
            doc = {
                "step": rec.step,
                "phase": rec.phase,
                "x": list(rec.x),
                "f": rec.f,
                "neuron": list(rec.neuron) if rec.neuron else None,
                "t": rec.t,
                "alpha": rec.alpha,
            }
            if start_index is not None:
                doc["start"] = start_index
            with self._lock:
                self._fh.write(json.dumps(doc) + "\n")
                self._fh.flush()
        return write

    def close(self):
        self._fh.close()


def _add_solve_args(p, with_x0=True):
    if with_x0:
        p.add_argument("--x0", default="random",
                       help="start point: 'zero', 'random', or comma separated values")
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--starts", type=int, default=1,
                   help="independent solver runs in parallel; best outcome is reported")
    p.add_argument("--trace", help="write per-step JSONL records to this file")
    p.add_argument("--out", help="also write the outcome JSON to this file")
    p.add_argument("--zero-tol", type=float, default=1e-9)
    p.add_argument("--dep-tol", type=float, default=1e-8)
    p.add_argument("--descent-tol", type=float, default=1e-9)
    p.add_argument("--jitter-on-nonregular", action="store_true",
                   help="retry with 1e-8 bias jitter (up to 3 times) after a NonRegular abort")


def _options_from(args, rng=None, on_record=None):
    return SolverOptions(
        zero_tol=args.zero_tol, dep_tol=args.dep_tol, descent_tol=args.descent_tol,
        max_steps=args.max_steps, rng=rng, on_record=on_record,
    )


def _jittered(net, rng):
    biases = [b + 1e-8 * (1.0 + np.max(np.abs(b))) * rng.standard_normal(b.shape)
              for b in net.biases]
    return ReluNetwork(net.weights, biases)


def _run_starts(args, make_x0, run_one):
    """Run --starts independent instances; pick unbounded first, then best f."""
    seeds = np.random.SeedSequence(args.seed).spawn(max(1, args.starts))
    writer = _TraceWriter(args.trace) if args.trace else None

    def attempt(k):
        rng = np.random.Generator(np.random.Philox(seeds[k]))
        on_record = writer.writer_for(k if args.starts > 1 else None) if writer else None
        x0 = make_x0(rng)
        out = run_one(x0, rng, on_record)
        if out.status == NON_REGULAR and args.jitter_on_nonregular:
            for _ in range(3):
                out = run_one(x0, rng, on_record, jitter_rng=rng)
                if out.status != NON_REGULAR:
                    break
        return out

    try:
        if args.starts <= 1:
            outcomes = [attempt(0)]
        else:
            with ThreadPoolExecutor(max_workers=min(args.starts, 8)) as ex:
                outcomes = list(ex.map(attempt, range(args.starts)))
    finally:
        if writer:
            writer.close()
    unbounded = [o for o in outcomes if o.status == UNBOUNDED]
    if unbounded:
        return unbounded[0]
    minima = [o for o in outcomes if o.status == LOCAL_MINIMUM]
    if minima:
        return min(minima, key=lambda o: o.f)
    limits = [o for o in outcomes if o.status == STEP_LIMIT]
    return limits[0] if limits else outcomes[0]


def _outcome_doc(out, extra=None):
    doc = {
        "status": out.status,
        "x": [float(v) for v in out.x],
        "f": float(out.f),
        "steps": int(out.steps),
        "wall_ms": float(out.wall_ms),
    }
    if out.direction is not None:
        doc["direction"] = [float(v) for v in out.direction]
    if out.neurons:
        doc["neurons"] = [list(c) for c in out.neurons]
    if extra:
        doc.update(extra)
    return doc


def _emit_outcome(args, out, extra=None):
    doc = _outcome_doc(out, extra)
    text = json.dumps(doc)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_CODES[out.status]


def _solve_linear(args, net, pairs, x0_dim, extra_from=None, fixed_x0=None):
    def make_x0(rng):
        if fixed_x0 is not None:
            return np.asarray(fixed_x0, dtype=np.float64)
        if args.x0 == "zero":
            return np.zeros(x0_dim)
        if args.x0 == "random":
            return rng.standard_normal(x0_dim)
        return _parse_floats(args.x0)

    def run_one(x0, rng, on_record, jitter_rng=None):
        the_net = _jittered(net, jitter_rng) if jitter_rng is not None else net
        opts = _options_from(args, rng=rng, on_record=on_record)
        return drlsimplex(the_net, x0, opts, pairs)

    out = _run_starts(args, make_x0, run_one)
    extra = extra_from(out) if extra_from else None
    return _emit_outcome(args, out, extra)


def cmd_random_net(args):
    net = build_random(_parse_ints(args.topology), seed=args.seed, low=args.low, high=args.high)
    save_model(args.out, net)
    print(json.dumps({"path": args.out, "widths": list(net.widths)}))
    return 0


def cmd_solve(args):
    net, pairs = load_model(args.model)
    return _solve_linear(args, net, pairs, net.input_dim)


def cmd_quantile(args):
    data = load_csv(args.data, args.response)
    net, pairs = build_quantile_lasso(data, alpha=args.alpha, lam=args.lam)
    return _solve_linear(args, net, pairs, net.input_dim,
                         extra_from=lambda out: {"theta": [float(v) for v in out.x]})


def cmd_clad(args):
    data = load_csv(args.data, args.response)
    net, pairs = build_clad(data)
    return _solve_linear(args, net, pairs, net.input_dim,
                         extra_from=lambda out: {"theta": [float(v) for v in out.x]})


def cmd_lasso(args):
    data = load_csv(args.data, args.response)
    net, q, pairs = build_lasso(data, lam=args.lam)

    def make_x0(rng):
        if args.x0 == "zero":
            return np.zeros(net.input_dim)
        if args.x0 == "random":
            return rng.standard_normal(net.input_dim)
        return _parse_floats(args.x0)

    def run_one(x0, rng, on_record, jitter_rng=None):
        the_net = _jittered(net, jitter_rng) if jitter_rng is not None else net
        opts = _options_from(args, rng=rng, on_record=on_record)
        return solve_quadratic(the_net, q, x0, opts, pairs)

    out = _run_starts(args, make_x0, run_one)
    return _emit_outcome(args, out, {"theta": [float(v) for v in out.x]})


def cmd_train_l1(args):
    data = load_csv(args.data, args.response)
    if args.base_model:
        base, _ = load_model(args.base_model)
    else:
        base = build_random(_parse_ints(args.base_topology), seed=args.seed)
    net, pairs = build_l1_first_layer(base, data)
    fixed = flatten_first_layer(base) if args.x0 == "warm" else None

    def extra(out):
        doc = {"theta": [float(v) for v in out.x]}
        if args.out_model:
            save_model(args.out_model, set_first_layer(base, out.x))
            doc["model"] = args.out_model
        return doc

    return _solve_linear(args, net, pairs, net.input_dim, extra_from=extra, fixed_x0=fixed)


def cmd_bounds(args):
    topology = _parse_ints(args.topology)
    doc = {
        "montufar": bounds_mod.montufar_bound(topology),
        "improved": bounds_mod.improved_bound(topology),
    }
    print(json.dumps(doc))
    return 0


def cmd_regions(args):
    net, _ = load_model(args.model)
    lo, hi = _parse_floats(args.box)
    n = bounds_mod.count_regions_empirical(net, (lo, hi), samples=args.samples, seed=args.seed)
    print(json.dumps({"empirical": n, "samples": args.samples, "box": [lo, hi]}))
    return 0


def cmd_check(args):
    net, pairs = load_model(args.model)
    x = _parse_floats(args.x)
    if x.shape != (net.input_dim,):
        raise ValueError(f"--x has {len(x)} values, model expects {net.input_dim}")
    s = activation_pattern(net, x)
    if pairs is not None:
        for a, b in pairs.pairs:
            if s.get(a) == s.get(b):
                s.bits[s.flat_index(a)] = 1
                s.bits[s.flat_index(b)] = 0
    secondary = {b for _, b in pairs.pairs} if pairs else set()
    crit = [c for c in critical_indices(net, s, x) if c not in secondary]
    pinv = PseudoInverse.empty(net.input_dim)
    if crit:
        cols = np.stack([oriented_normal(net, s, c) for c in crit], axis=1)
        sv = np.linalg.svd(cols, compute_uv=False)
        if sv[-1] <= 1e-8 * sv[0] or len(crit) > net.input_dim:
            print(json.dumps({"certified": False, "reason": "dependent active walls",
                              "neurons": [list(c) for c in crit]}))
            return 3
        pinv = PseudoInverse(np.linalg.pinv(cols, rcond=1e-13), list(crit))
    try:
        ok = certify_local_min(net, x, s, pinv, pairs=pairs)
        axes = [
            {"neuron": list(c), "bit": int(bit), "derivative": val}
            for c, bit, val, _ in axis_derivatives(net, x, s, pinv, pairs=pairs)
        ]
    except Degenerate:
        print(json.dumps({"certified": False, "reason": "degenerate axis update",
                          "neurons": [list(c) for c in crit]}))
        return 3
    print(json.dumps({"certified": bool(ok), "f": evaluate(net, x), "axes": axes}))
    return 0 if ok else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drlp",
        description="Minimize feed-forward ReLU networks over their input space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("random-net", help="draw a network with uniform weights")
    p.add_argument("--topology", required=True,
                   help="comma separated widths, input first, output width 1 last")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--low", type=float, default=-1.0)
    p.add_argument("--high", type=float, default=1.0)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_random_net)

    p = sub.add_parser("solve", help="minimize a model from a JSON file")
    p.add_argument("--model", required=True)
    _add_solve_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("quantile", help="quantile regression with optional L1 penalty")
    p.add_argument("--data", required=True, help="numeric CSV")
    p.add_argument("--response", help="response column name (default: last column)")
    p.add_argument("--alpha", type=float, default=0.5, help="quantile level in [0, 1]")
    p.add_argument("--lam", type=float, default=0.0, help="L1 penalty weight")
    _add_solve_args(p)
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("clad", help="censored least absolute deviations regression")
    p.add_argument("--data", required=True)
    p.add_argument("--response")
    _add_solve_args(p)
    p.set_defaults(func=cmd_clad)

    p = sub.add_parser("lasso", help="least squares with L1 penalty (quadratic mode)")
    p.add_argument("--data", required=True)
    p.add_argument("--response")
    p.add_argument("--lam", type=float, default=0.0)
    _add_solve_args(p)
    p.set_defaults(func=cmd_lasso)

    p = sub.add_parser("train-l1", help="train a network's first layer under L1 loss")
    p.add_argument("--data", required=True)
    p.add_argument("--response")
    p.add_argument("--base-model", help="model JSON whose deeper layers stay frozen")
    p.add_argument("--base-topology", help="draw the base network instead (uses --seed)")
    p.add_argument("--out-model", help="write the base with the trained first layer here")
    _add_solve_args(p, with_x0=False)
    p.add_argument("--x0", default="warm",
                   help="'warm' (base's current first layer), 'zero', 'random', or values")
    p.set_defaults(func=cmd_train_l1)

    p = sub.add_parser("bounds", help="region-count upper bounds for a topology")
    p.add_argument("--topology", required=True,
                   help="input width then ReLU layer widths (no output layer)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("regions", help="count distinct activation patterns by sampling")
    p.add_argument("--model", required=True)
    p.add_argument("--box", default="-10,10", help="sampling box lo,hi per coordinate")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("check", help="certify whether a point is a local minimum")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True, help="comma separated point")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DependentColumn, Degenerate) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
