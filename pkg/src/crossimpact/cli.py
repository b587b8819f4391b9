"""Command line interface.

Exit codes: 0 success, 1 audit failed, 2 configuration error, 3 inadmissible
kernel, 4 input/output failure, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._exceptions import ConfigParse, CrossImpactError, InadmissibleKernel
from .config import (canonical_json, default_out_dir, load_config, load_preset,
                     preset_names, run_audit, run_scenario, run_sweep)

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_INADMISSIBLE, EXIT_IO, EXIT_NUMERIC = range(6)

log = logging.getLogger("crossimpact")


def _override(config, args):
    changes = {}
    if getattr(args, "n", None) is not None:
        changes["grid.n"] = args.n
    if getattr(args, "seed", None):
        changes["run.seeds"] = args.seed
    if getattr(args, "force_inadmissible", False):
        changes["run.force_inadmissible"] = True
    if getattr(args, "method", None):
        changes["run.method"] = args.method
    return config.replace(**changes) if changes else config


def _out_dir(args, config=None):
    if args.out_dir:
        return Path(args.out_dir)
    if config is not None and config.run.out_dir:
        return Path(config.run.out_dir)
    return Path(default_out_dir())


def cmd_solve(args):
    config = _override(load_config(args.config), args)
    out = _out_dir(args, config)
    summary = run_scenario(config, out, dump_matrices=args.dump_matrices)
    print(json.dumps({"out_dir": str(out), **summary}, sort_keys=True))
    return EXIT_OK


def cmd_audit(args):
    config = _override(load_config(args.config), args)
    report = run_audit(config).to_dict()
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_AUDIT


def cmd_preset(args):
    if args.list or args.name is None:
        for name in preset_names():
            print(f"{name}: {load_preset(name)[0]}")
        return EXIT_OK
    description, scenarios = load_preset(args.name)
    if args.scenario:
        if args.scenario not in scenarios:
            raise ConfigParse(f"preset {args.name!r} has no scenario {args.scenario!r}; "
                              f"available: {', '.join(scenarios)}")
        scenarios = {args.scenario: scenarios[args.scenario]}
    if args.show:
        for name, cfg in scenarios.items():
            sys.stdout.write(canonical_json(_override(cfg, args)))
        return EXIT_OK
    out = _out_dir(args) / args.name
    results = {}
    for name, cfg in scenarios.items():
        results[name] = run_scenario(_override(cfg, args), out / name,
                                     dump_matrices=args.dump_matrices)
    print(json.dumps({"out_dir": str(out), "scenarios": results}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args):
    config = _override(load_config(args.config), args)
    values = []
    for v in args.values:
        try:
            values.append(json.loads(v))
        except json.JSONDecodeError:
            raise ConfigParse(f"sweep value {v!r} is not valid JSON") from None
    rows = run_sweep(config, args.param, values, _out_dir(args, config))
    print(json.dumps(rows, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crossimpact",
        description="Optimal trading under transient cross-impact.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="number of grid cells")
    common.add_argument("--out-dir", help="output directory "
                        "(default: $CROSSIMPACT_OUT_DIR or ./crossimpact_out)")

    solving = argparse.ArgumentParser(add_help=False)
    solving.add_argument("--seed", type=int, action="append",
                         help="simulate an OU signal path with this seed (repeatable)")
    solving.add_argument("--method", choices=["deterministic", "trailing", "resolvent"])
    solving.add_argument("--force-inadmissible", action="store_true",
                         help="solve even if the kernel fails the audit")
    solving.add_argument("--dump-matrices", action="store_true",
                         help="save the assembled operator and kernel blocks as .npy")

    p = sub.add_parser("solve", parents=[common, solving], help="solve a scenario")
    p.add_argument("config")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("audit", parents=[common], help="audit the kernel of a scenario")
    p.add_argument("config")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("preset", parents=[common, solving], help="run a bundled scenario")
    p.add_argument("name", nargs="?")
    p.add_argument("--scenario", help="run only this scenario of the preset")
    p.add_argument("--list", action="store_true", help="list presets")
    p.add_argument("--show", action="store_true", help="print the configuration and exit")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("sweep", parents=[common], help="vary one configuration value")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted path, e.g. market.gamma")
    p.add_argument("--values", nargs="+", required=True, help="JSON values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigParse as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InadmissibleKernel as exc:
        log.error("%s (use --force-inadmissible to override)", exc)
        return EXIT_INADMISSIBLE
    except OSError as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_IO
    except CrossImpactError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
