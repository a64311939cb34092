"""Command-line entry point: ``ordinalkit {certify,bench,um-report,ingest,profile}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import harness
from .config import bundled_path, load_config
from .errors import OrdinalError
from .losses import DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LAMBDA, KINDS, LossSpec
from .properties import DEFAULT_EPS, ordinality_profile
from .simplex import LabelSpace


def _float_list(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list:
    return [int(t) for t in text.split(",") if t.strip()]


def _loss_specs(args) -> list | None:
    if not args.loss:
        return None
    return [LossSpec(k, alpha=args.alpha, beta=args.beta, lam=args.lam) for k in args.loss]


def _add_loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", action="append", type=str.upper, choices=KINDS,
                   help="loss kind (repeatable)")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="OLL/MLL distance exponent")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="SOFT label sharpness")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA, help="MLL weight on CE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordinalkit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="verify PSR/UM/CX/Ord for a set of losses")
    _add_loss_flags(p)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--golden", nargs="?", const=True, default=None,
                   help="compare with a golden TSV (bundled one when no path is given)")
    p.add_argument("--strict", action="store_true", help="fail on inconclusive verdicts")
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench", help="run a loss x fraction x seed grid")
    p.add_argument("--config", default=str(bundled_path("bench_synthetic.toml")))
    _add_loss_flags(p)
    p.add_argument("--seeds", type=_int_list, default=None, help="comma-separated seeds")
    p.add_argument("--fractions", type=_float_list, default=None, help="comma-separated fractions")
    p.add_argument("--out", default=None)

    p = sub.add_parser("um-report", help="per-loss unimodality over stored test predictions")
    p.add_argument("run_dir")

    p = sub.add_parser("ingest", help="validate and store a delimited dataset file")
    p.add_argument("path")
    p.add_argument("--labels", default=None, help="comma-separated ordered label names")
    p.add_argument("--text-dim", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs")

    p = sub.add_parser("profile", help="loss along perturbed one-hot vectors")
    _add_loss_flags(p)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--y", type=int, default=1)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    return parser


def _certify(args) -> int:
    outcome = harness.cmd_certify(_loss_specs(args), args.out, args.golden, K=args.K,
                                  trials=args.trials, seed=args.seed, restarts=args.restarts)
    print(outcome.table, end="")
    for rep in outcome.reports:
        if rep.psr_verdict == "inconclusive":
            print(f"# {rep.loss.kind}: PSR inconclusive (Frank-Wolfe gap {rep.psr.fw_gap:.2e})")
        if not rep.convex.holds and rep.convex.witness:
            where = f" (witness in {args.out}/properties_details.jsonl)" if args.out else ""
            print(f"# {rep.loss.kind}: Jensen gap violated by {rep.convex.witness['violation']:.3e}{where}")
    for line in outcome.mismatches:
        print(f"MISMATCH {line}", file=sys.stderr)
    return outcome.exit_code(args.strict)


def _bench(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    specs = _loss_specs(args)
    if specs:
        changes["losses"] = tuple(specs)
    if args.seeds:
        changes["seeds"] = tuple(args.seeds)
    if args.fractions:
        changes["fractions"] = tuple(args.fractions)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    out, records = harness.cmd_bench(cfg, args.out)
    print((out / "results.tsv").read_text() if "tsv" in cfg.formats else "", end="")
    failed = sum(r.status != "ok" for r in records)
    print(f"# {len(records)} runs, {failed} failed, outputs in {out}")
    return 0


def _um_report(args) -> int:
    print(harness.render_um_report(harness.cmd_um_report(args.run_dir)), end="")
    return 0


def _ingest(args) -> int:
    space = LabelSpace(tuple(s.strip() for s in args.labels.split(","))) if args.labels else None
    dataset_id, target, summary = harness.cmd_ingest(args.path, args.out, space, args.text_dim, args.seed)
    print(f"dataset {dataset_id} stored in {target}")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _profile(args) -> int:
    specs = _loss_specs(args) or [LossSpec(k) for k in harness.CERTIFY_LOSSES]
    print("loss\td\tvalue\tshape")
    for spec in specs:
        prof = ordinality_profile(spec, args.y, args.K, args.eps)
        for d, value in prof.points:
            print(f"{spec.label}\t{d}\t{value:.9g}\t{prof.shape}")
    return 0


COMMANDS = {"certify": _certify, "bench": _bench, "um-report": _um_report,
            "ingest": _ingest, "profile": _profile}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except OrdinalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
