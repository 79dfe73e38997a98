"""Command-line front end for the experiment harness.

Exit codes: 0 on success, 2 when a separation audit reaches a FAIL
verdict, 1 on any error.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .harness import (ExperimentConfig, ExperimentReport, emit_plot,
                      identity_suite, run_consistency, run_separation_audit,
                      run_single_fit)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_AUDIT_FAIL = 2


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ValueError("this subcommand needs --config")
    config = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    return config


def _cmd_identities(args) -> int:
    results = identity_suite()
    ok = True
    for name, passed, worst in results:
        ok = ok and passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name} (worst {worst:.3e})")
    return EXIT_OK if ok else EXIT_ERROR


def _cmd_fit(args) -> int:
    config = _load_config(args)
    n = args.n if args.n is not None else config.n_schedule[-1]
    record = run_single_fit(config, n, 0)
    if record.failed:
        print(f"fit failed: {record.error}", file=sys.stderr)
        return EXIT_ERROR
    print(f"n          : {record.n}")
    print(f"theta_hat  : {record.theta_hat}")
    print(f"m_n        : {record.m_n!r}")
    print(f"gap bound  : {record.certified_gap!r}")
    print(f"distance   : {record.distance!r}")
    print(f"mass def.  : {record.mass_deficit!r}")
    print(f"iterations : {record.iterations} ({record.stop_reason})")
    print(f"wall       : {record.wall_ms:.1f} ms")
    return EXIT_OK


def _cmd_check_a2(args) -> int:
    config = _load_config(args)
    report = run_separation_audit(config, out_dir=args.out_dir)
    for audit in report.audits:
        flag = "PASS" if audit.passed else "FAIL"
        print(f"[{flag}] theta {audit.theta_repr}: "
              f"gap ci {audit.gap.ci_upper_99:.4g}, "
              f"tail ratio {audit.tail_ratio:.1f}")
    verdict = "PASS" if report.verdict else "FAIL"
    print(f"verdict: {verdict}")
    return EXIT_OK if report.verdict else EXIT_AUDIT_FAIL


def _cmd_consistency(args) -> int:
    config = _load_config(args)
    out_dir = args.out_dir
    report = run_consistency(config, out_dir=out_dir, threads=args.threads)
    for agg in report.aggregates:
        median = agg.get("median_distance")
        shown = "n/a" if median is None else f"{median:.4g}"
        print(f"n={agg['n']}: median distance {shown} "
              f"({agg['fitted']} fitted, {agg['failed']} failed)")
    if out_dir is not None and len(set(config.n_schedule)) >= 2:
        emit_plot(report, Path(out_dir) / "convergence.svg")
    return EXIT_OK


def _cmd_plot(args) -> int:
    report = ExperimentReport.from_json_file(args.report)
    out_dir = Path(args.out_dir) if args.out_dir is not None else Path(".")
    path = emit_plot(report, out_dir / "convergence.svg")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcontrast",
        description="contrast estimation experiments and separation audits")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=False):
        p.add_argument("--config", help="config file (dotted keys or JSON)")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.master_seed")
        p.add_argument("--out-dir", default=None, help="artifact directory")
        if threads:
            p.add_argument("--threads", type=int, default=1,
                           help="worker processes")

    p = sub.add_parser("identities", help="closed-form generator identities")
    p.set_defaults(func=_cmd_identities)

    p = sub.add_parser("fit", help="one fit at a single sample size")
    common(p)
    p.add_argument("--n", type=int, default=None,
                   help="sample size (default: last of the schedule)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("check-a2", help="separation audit over a theta grid")
    common(p)
    p.set_defaults(func=_cmd_check_a2)

    p = sub.add_parser("consistency", help="replicated consistency experiment")
    common(p, threads=True)
    p.set_defaults(func=_cmd_consistency)

    p = sub.add_parser("plot", help="render convergence.svg from report.json")
    p.add_argument("report", help="path to report.json")
    p.add_argument("--out-dir", default=None, help="artifact directory")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
