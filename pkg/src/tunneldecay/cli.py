"""Command-line entry point.

    tunneldecay run --config table1_row1 --out results/
    tunneldecay sweep --config sweep_bgrad.json --out sweep/
    tunneldecay poles --config table2_row1 --seed-grid 60,30
    tunneldecay compare-oracle --config table1_row5 --out oracle/
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import bundled_config, bundled_names, load_config
from .errors import ConfigError, DecayError
from .runner import poles_csv, poles_only, run_sweep, run_to_dir

log = logging.getLogger("tunneldecay")


def _seed_grid(text):
    try:
        nx, ny = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected NX,NY") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("seed grid entries must be positive")
    return nx, ny


def _resolve(ref: str):
    if Path(ref).is_file():
        return load_config(ref)
    if ref in bundled_names():
        return bundled_config(ref)
    raise ConfigError(f"{ref!r} is neither a file nor a bundled scenario ({', '.join(bundled_names())})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tunneldecay",
                                 description="Resonant-state tunneling decay calculator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True,
                       help="scenario JSON file or bundled scenario name")
        p.add_argument("--out", required=out_required, type=Path, help="output directory")
        p.add_argument("--seed-grid", type=_seed_grid, default=None, metavar="NX,NY")

    p = sub.add_parser("run", help="poles, coefficients and P(t) for one scenario")
    common(p)
    p.add_argument("--poles", type=int, default=None, metavar="N", help="poles used in P(t)")
    p.add_argument("--oracle", action="store_true", help="also run the TDSE comparison")

    p = sub.add_parser("sweep", help="run a parameter sweep and track pole 1")
    common(p)
    p.add_argument("--poles", type=int, default=None, metavar="N")

    p = sub.add_parser("poles", help="list the poles in the search window")
    common(p, out_required=False)

    p = sub.add_parser("compare-oracle", help="resonant expansion against the TDSE oracle")
    common(p)
    p.add_argument("--poles", type=int, default=None, metavar="N")

    sub.add_parser("list", help="list bundled scenarios")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "list":
            print("\n".join(bundled_names()))
            return 0
        cfg = _resolve(args.config)
        if args.command == "poles":
            ps = poles_only(cfg, args.out, seed_grid=args.seed_grid)
            if args.out is None:
                sys.stdout.write(poles_csv(ps))
            return 0
        if getattr(args, "poles", None) is not None and args.poles < 1:
            raise ConfigError("--poles must be >= 1")
        if args.command == "sweep":
            reports, _ = run_sweep(cfg, args.out, n_poles=args.poles, seed_grid=args.seed_grid)
            for r in reports:
                print(f"{r.name}: R={r.R:.4f} tau={r.tau_ms:.4f} ms ReC1^2={r.ReC1sq:.4f}")
            return 0
        oracle = args.command == "compare-oracle" or args.oracle
        res = run_to_dir(cfg, args.out, n_poles=args.poles, oracle=oracle,
                         seed_grid=args.seed_grid)
        r = res.report
        print(f"{r.name}: E1={r.E1_kHz:.5f} kHz Gamma1={r.Gamma1_kHz:.5f} kHz R={r.R:.4f} "
              f"tau={r.tau_ms:.4f} ms ReC1^2={r.ReC1sq:.4f} sum-rule deficit="
              f"{r.sum_rule_deficit:.2e} t0={r.t0_lifetimes:.2f} tau ({r.wall_time_s:.1f} s)")
        if r.oracle:
            print(f"oracle: max rel dev {r.oracle['max_rel']:.3e} over "
                  f"{r.oracle['window'][0]}-{r.oracle['window'][1]} tau")
        return 0
    except DecayError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
