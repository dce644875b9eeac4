"""Command-line entry point: ``open-moyal run <config>`` and ``open-moyal selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile

from .config import ConfigError, RunConfig, parse_config
from .experiments import k_action_errors, run_scenario, write_outputs
from .reservoir import RecurrenceGuardError
from .rng import stream

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3


def _run(cfg: RunConfig, out_dir: str, workers: int = 1) -> int:
    c = cfg.resolved()
    guard = cfg.recurrence_guard()
    if c.scenario != "star_algebra" and c.t_max >= guard:
        print(
            f"error: t_max = {c.t_max:g} violates the recurrence guard "
            f"t < 0.5 * 2 pi / d_omega = {guard:.6g}",
            file=sys.stderr,
        )
        return EXIT_GUARD
    res = run_scenario(cfg, workers=workers)
    for path in write_outputs(res, out_dir):
        print(f"wrote {path}")
    for chk in res.checks:
        print(chk.line())
    print(f"{res.scenario}: {'PASS' if res.passed else 'FAIL'} ({res.runtime:.1f} s)")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "out_dir": args.out}
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _run(cfg, cfg.out_dir, args.workers)
    except RecurrenceGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


def cmd_selftest(args) -> int:
    """Exact identities only: star algebra and the K-action on the default bath."""
    with tempfile.TemporaryDirectory() as tmp:
        status = _run(RunConfig("star_algebra"), tmp)
    cfg = RunConfig("correlation").resolved()
    rng = stream(cfg.seed, 1)
    pairs = rng.uniform(-cfg.t_max, cfg.t_max, size=(100, 2))
    err = float(k_action_errors(cfg.bath(horizon=cfg.t_max), pairs).max())
    ok = err <= 1e-12
    print(f"[{'PASS' if ok else 'FAIL'}] k_action: max relative deviation {err:.3e} (tolerance 1.000e-12)")
    return status if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="open-moyal", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario from a key = value config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory (overrides out_dir)")
    run.add_argument("--workers", type=int, default=1, help="Monte Carlo threads; results do not depend on it")
    run.set_defaults(func=cmd_run)
    st = sub.add_parser("selftest", help="check the exact star-algebra and K-action identities")
    st.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
