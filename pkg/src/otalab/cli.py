"""Command-line entry point: ``otalab {trace,eval,attack,oracle}``.

Exit codes: 0 success, 1 usage or input error, 2 clean attack failure.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .errors import IntegrityError, OtaLabError, UsageError

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _hex_int(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise UsageError(f"not a hex integer: {text!r}") from None


def _hex_tuple(text: str, n: int) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"expected {n} comma-separated hex values, got {text!r}")
    return tuple(_hex_int(p) for p in parts)


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _provenance(cfg) -> dict:
    return {"config_sha256": cfg.digest(), "seed": cfg.seed}


# -- trace ---------------------------------------------------------------------------

def cmd_trace(args) -> int:
    from .attack import capture_target
    from .config import load_config
    from .scalarmul import encode, random_scalar
    from .tracer import dumps_trace

    cfg = load_config(args.config)
    if args.random:
        k = random_scalar(cfg.algo, cfg.curve.n, random.Random(cfg.seed))
    else:
        k = _hex_int(args.scalar)
    encode(k, cfg.algo, cfg.curve.n)
    target, res = capture_target(cfg, k, reveal_final_state=True)
    text = dumps_trace(target.trace, compact=args.compact)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    summary = dict(_provenance(cfg))
    summary.update({
        "public": {"x": hex(res.output.x.value), "y": hex(res.output.y.value)},
        "iterations": cfg.algo.n_iterations,
        "channel": cfg.channel,
        "n_regions": cfg.rmap.n_regions,
        "tracked": sorted(cfg.tracked),
    })
    if args.reveal_final_state:
        X, Y, Z = res.final_state.coords()
        summary["final_state"] = {"X": hex(X), "Y": hex(Y), "Z": hex(Z)}
    if args.summary:
        _emit(summary, args.summary)
    elif args.out:
        _emit(summary, None)
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------

def cmd_eval(args) -> int:
    from .config import load_config
    from .evaluator import (calibrate_tau, check_determinism, classify, enumerate_combinations,
                            estimate_fn_fp, estimate_pmf)

    cfg = load_config(args.config)
    det = check_determinism(cfg, args.det_points, args.trials)
    report = dict(_provenance(cfg))
    report["determinism"] = det.to_json()
    if det.deterministic:
        pmf = estimate_pmf(cfg, n=args.samples)
        report["pmf"] = {"tracked": sorted(cfg.tracked), "channel": cfg.channel,
                         "samples": pmf.n, "cardinality": pmf.cardinality,
                         "max_bias": pmf.max_bias, "class": classify(pmf, cfg.bias_threshold)}
        if args.combinations:
            rep = enumerate_combinations(cfg, args.samples, jobs=args.jobs)
            report["combinations"] = rep.to_json(with_subsets=not args.no_subsets)
    if cfg.noise.drop or cfg.noise.dup or not det.deterministic:
        tau = cfg.matcher.tau if cfg.matcher.kind == "edit" else calibrate_tau(cfg, cfg.noise, args.noise_trials)
        report["fn_fp"] = estimate_fn_fp(cfg, cfg.noise, tau, args.noise_trials).to_json()
    _emit(report, args.out)
    return EXIT_OK


# -- attack --------------------------------------------------------------------------

def cmd_attack(args) -> int:
    from .attack import TargetBundle, run_backward, run_forward
    from .config import Matcher, load_config
    from .curve import JacobianPoint
    from .tracer import loads_trace

    cfg = load_config(args.config)
    if args.direction == "backward" and not (args.final_state or args.summary):
        raise UsageError("backward attack needs --final-state X,Y,Z")
    trace = loads_trace(Path(args.trace).read_text())
    if trace.channel != cfg.channel or trace.n_regions != cfg.rmap.n_regions:
        raise UsageError("trace file channel/region count disagrees with the config")
    summary = json.loads(Path(args.summary).read_text()) if args.summary else {}
    if args.public:
        x, y = _hex_tuple(args.public, 2)
    elif "public" in summary:
        x, y = int(summary["public"]["x"], 16), int(summary["public"]["y"], 16)
    else:
        raise UsageError("need the public output point (--public X,Y or --summary FILE)")
    public = cfg.curve.affine(x, y)
    final = None
    if args.direction == "backward":
        if args.final_state:
            X, Y, Z = _hex_tuple(args.final_state, 3)
        elif "final_state" in summary:
            fs = summary["final_state"]
            X, Y, Z = (int(fs[key], 16) for key in ("X", "Y", "Z"))
        else:
            raise UsageError("backward attack needs --final-state X,Y,Z")
        ctx = cfg.curve.ctx
        final = JacobianPoint(ctx(X), ctx(Y), ctx(Z))
    matcher = Matcher.parse(args.matcher) if args.matcher else cfg.matcher
    target = TargetBundle(cfg, trace, public, final)
    if args.direction == "forward":
        try:
            rep = run_forward(target, args.mode, matcher, strict=False, max_calls=args.max_calls)
        except IntegrityError as exc:
            raise UsageError(str(exc)) from None
    else:
        if args.mode != "state":
            raise UsageError("backward attack runs in state mode only")
        rep = run_backward(target, matcher, max_calls=args.max_calls)
    out = dict(_provenance(cfg))
    out.update(rep.to_json())
    out["matcher"] = str(matcher)
    _emit(out, args.out)
    return EXIT_OK if rep.success else EXIT_FAIL


# -- oracle --------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    from .field import roots_int
    from .oracle import exhaustive_ota, exhaustive_roots, load_toy_curve

    if args.roots:
        p, r, v = args.roots
        brute = sorted(exhaustive_roots(v, r, p))
        fast = roots_int(v, r, p)
        _emit({"p": p, "r": r, "v": v, "roots": brute, "fast_agrees": fast == brute}, args.out)
        return EXIT_OK if fast == brute else EXIT_FAIL
    if args.toy_curve:
        toy = load_toy_curve()
        _emit(dict(toy.to_json(), points=len(toy.points)), args.out)
        return EXIT_OK
    if args.exhaustive_ota:
        res = exhaustive_ota(args.exhaustive_ota, args.algorithm)
        res["failures"] = [list(f) for f in res["failures"]]
        _emit(res, args.out)
        return EXIT_OK if res["ok"] else EXIT_FAIL
    raise UsageError("oracle needs one of --roots, --toy-curve, --exhaustive-ota")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="otalab", description="Online template attack lab.")
    ap.add_argument("--config", help="lab config JSON (default: $OTALAB_CONFIG)")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    t = sub.add_parser("trace", help="run the victim once and write its channel trace")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--scalar", help="secret scalar in hex")
    g.add_argument("--random", action="store_true", help="draw the scalar from the config seed")
    t.add_argument("--out", help="trace file (default stdout)")
    t.add_argument("--summary", help="JSON run summary path")
    t.add_argument("--reveal-final-state", action="store_true",
                   help="include the final projective state in the summary")
    t.add_argument("--compact", action="store_true", help="write the compact one-line rendering")
    t.set_defaults(fn=cmd_trace)

    e = sub.add_parser("eval", help="determinism, pmf and subset classification")
    e.add_argument("--samples", type=int, default=1000)
    e.add_argument("--combinations", action="store_true", help="classify every region subset")
    e.add_argument("--no-subsets", action="store_true", help="omit the per-subset array")
    e.add_argument("--det-points", type=int, default=100)
    e.add_argument("--trials", type=int, default=10)
    e.add_argument("--noise-trials", type=int, default=1000)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("attack", help="recover the scalar from one trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--summary", help="run summary with the public point (and final state)")
    a.add_argument("--public", help="public output point X,Y in hex")
    a.add_argument("--direction", choices=("forward", "backward"), default="forward")
    a.add_argument("--mode", choices=("state", "scalar"), default="state")
    a.add_argument("--final-state", help="final projective state X,Y,Z in hex (backward)")
    a.add_argument("--matcher", help="exact | edit:<tau> (default from config)")
    a.add_argument("--max-calls", type=int)
    a.add_argument("--out")
    a.set_defaults(fn=cmd_attack)

    o = sub.add_parser("oracle", help="brute-force checks")
    o.add_argument("--roots", nargs=3, type=int, metavar=("P", "R", "V"))
    o.add_argument("--toy-curve", action="store_true")
    o.add_argument("--exhaustive-ota", type=int, metavar="BITS")
    o.add_argument("--algorithm", default="dbl_add_always",
                   choices=("dbl_add_always", "comb", "ladder"))
    o.add_argument("--out")
    o.set_defaults(fn=cmd_oracle)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except (UsageError, OtaLabError, OSError, ValueError) as exc:
        print(f"otalab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
