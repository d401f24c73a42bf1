"""Command-line front end: ``qcsim run | acceptance | validate-scenario``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import acceptance, harness
from .errors import QcsimError, ScenarioError
from .scenarios import load_scenario


def _add_run_flags(p):
    p.add_argument("experiment", nargs="?", choices=sorted(harness.EXPERIMENTS),
                   help="experiment name (may come from --config instead)")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--scenario", help="scenario JSON file (overrides the config's scenario)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-traj", type=int, dest="n_traj")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float, dest="t_final")
    p.add_argument("--out", dest="output_dir", help="output directory for CSV and JSON files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one named experiment")
    _add_run_flags(run_p)

    acc = sub.add_parser("acceptance", help="run the acceptance suite")
    acc.add_argument("criteria", nargs="*", default=["all"],
                     help="'all' or criterion ids/names (AC1 ... AC11)")
    acc.add_argument("--out", dest="output_dir", help="directory for criterion outputs and the report")
    acc.add_argument("--tolerance", action="append", default=[], metavar="ACn.name=value",
                     help="override a pinned tolerance (repeatable)")
    acc.add_argument("--list", action="store_true", help="list criteria and tolerances, then exit")

    val = sub.add_parser("validate-scenario", help="check a scenario JSON file")
    val.add_argument("path")
    return parser


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in ("seed", "n_traj", "dt", "t_final", "output_dir", "experiment")}
    if args.config:
        cfg = harness.ExperimentConfig.from_file(args.config, **overrides)
    else:
        if not args.experiment:
            raise ValueError("an experiment name or --config is required")
        cfg = harness.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.scenario:
        cfg.scenario = load_scenario(args.scenario).to_dict()
    summary = harness.run(cfg)
    print(json.dumps(harness._jsonable(summary.to_dict()), sort_keys=True, indent=2))
    return 0 if summary.passed else 1


def _cmd_acceptance(args) -> int:
    if args.list:
        for c in acceptance.CRITERIA:
            print(f"{c.cid:5s} {c.name:30s} {json.dumps(acceptance.TOLERANCES[c.cid], sort_keys=True)}")
        return 0
    overrides = acceptance.parse_overrides(args.tolerance)
    ok, results = acceptance.run_acceptance(args.criteria, args.output_dir, overrides)
    n_pass = sum(r.ok for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return 0 if ok else 1


def _cmd_validate(args) -> int:
    s = load_scenario(args.path)
    print(f"valid {s.kind} scenario")
    print(s.to_json())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "acceptance": _cmd_acceptance, "validate-scenario": _cmd_validate}
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        print(f"qcsim: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, QcsimError) as exc:
        print(f"qcsim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
