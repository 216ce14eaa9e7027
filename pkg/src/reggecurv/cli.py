"""Command line entry point: ``regge-curv verify`` and ``regge-curv converge``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .driver import ConfigError, load_config, run_convergence, run_verify


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regge-curv", description="Curvature of Regge metrics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run the verification checks")
    v.add_argument("--config", required=True)
    v.add_argument("--report", help="write the JSON report here")
    c = sub.add_parser("converge", help="run a convergence study")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="CSV output path (overrides the config)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "verify":
        doc = run_verify(cfg)
        text = json.dumps(doc, indent=1)
        if args.report:
            with open(args.report, "w") as fh:
                fh.write(text)
        for chk in doc["checks"]:
            print(f"{'PASS' if chk['passed'] else 'FAIL'}  {chk['name']}")
        return 0 if doc["passed"] else 1
    try:
        results = run_convergence(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print("r   n     h          E_kappa_dual  rate   E_conn_dual   rate")
    for x in results:
        print(f"{x.r:<3d} {x.n:<5d} {x.h:<10.4g} {x.E_kappa_dual:<13.4e} {x.rate_kappa:<6.3f} "
              f"{x.E_conn_dual:<13.4e} {x.rate_conn:<6.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
