"""Command-line entry point: ``mixfilter <command> --config FILE [options]``.

Commands
--------
simulate     write the simulated observations (and labels)
run          run the configured methods; write the trace and a JSON summary
oracle       exact / quadrature posterior summaries and information integrals
check-lemma  sweep the PE/ML information identity over weights and pairs
ep-fit       expectation propagation over the simulated data

On failure the exit status is nonzero and a JSON error record is written
to stderr.
"""

import argparse
import csv
import json
import os
import sys

from . import harness, weight
from .errors import MixFilterError


def _parser():
    parser = argparse.ArgumentParser(prog="mixfilter", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (("simulate", True), ("run", True), ("oracle", True),
                               ("check-lemma", False), ("ep-fit", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="experiment JSON document")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _simulate(args):
    config = harness.load_config(args.config, args.seed)
    x, z = harness.simulate(config)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"data.{args.format}")
    if args.format == "json":
        harness.write_json({"seed": config.seed, "x": x.tolist(), "z": z.tolist()}, path)
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "x", "z"])
            for i, (xi, zi) in enumerate(zip(x, z), start=1):
                writer.writerow([i, repr(float(xi)), int(zi)])
    return {"data": path, "n": int(x.size)}


def _run(args):
    config = harness.load_config(args.config, args.seed)
    harness.run(config, args.out, args.format)
    return {
        "trace": os.path.join(args.out, f"{config.trace_name}.{args.format}"),
        "summary": os.path.join(args.out, config.summary_name),
    }


def _oracle(args):
    config = harness.load_config(args.config, args.seed)
    report = harness.oracle_report(config)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "oracle.json")
    harness.write_json(report, path)
    return {"oracle": path}


def _check_lemma(args):
    pairs, betas = None, None
    if args.config:
        with open(args.config) as fh:
            pairs, betas = harness.lemma_pairs_from_config(json.load(fh))
    report = harness.check_lemma(pairs, betas)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"lemma.{args.format}")
    if args.format == "json":
        harness.write_json(report, path)
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pair", "beta", "pe_side", "ml_side", "relative_violation", "exact_zero"])
            for c in report["cases"]:
                writer.writerow([c["pair"], c["beta"], repr(c["pe_side"]), repr(c["ml_side"]),
                                 repr(c["relative_violation"]), int(c["exact_zero"])])
    return {"lemma": path, "max_relative_violation": report["max_relative_violation"]}


def _ep_fit(args):
    config = harness.load_config(args.config, args.seed)
    if config.kind != "known-pair":
        raise MixFilterError("ep-fit needs a known-pair model")
    x, _ = harness.simulate(config)
    opts = config.ep
    result = weight.ep_fit(
        config.model, config.prior, x,
        update_rule=opts.get("rule", "moment-match"),
        max_sweeps=int(opts.get("max_sweeps", 50)),
        tolerance=float(opts.get("tolerance", 1e-10)),
        settings=config.solver,
    )
    os.makedirs(args.out, exist_ok=True)
    report = {
        "a": result.state.a, "b": result.state.b, "E": result.state.mean,
        "V": result.state.variance, "sweeps_used": result.sweeps_used,
        "converged": result.converged, "skipped": [list(s) for s in result.skipped],
    }
    if args.format == "json":
        report["sites"] = [[s.da, s.db] for s in result.sites]
        path = os.path.join(args.out, "ep.json")
        harness.write_json(report, path)
    else:
        path = os.path.join(args.out, "ep_sites.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "x", "da", "db"])
            for i, (xi, s) in enumerate(zip(x, result.sites), start=1):
                writer.writerow([i, repr(float(xi)), repr(s.da), repr(s.db)])
        harness.write_json(report, os.path.join(args.out, "ep.json"))
    return {"ep": path, "converged": result.converged, "sweeps_used": result.sweeps_used}


COMMANDS = {
    "simulate": _simulate,
    "run": _run,
    "oracle": _oracle,
    "check-lemma": _check_lemma,
    "ep-fit": _ep_fit,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (MixFilterError, OSError, KeyError, ValueError, TypeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        for attr in ("method", "step"):
            if hasattr(exc, attr):
                record[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        return 1
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
