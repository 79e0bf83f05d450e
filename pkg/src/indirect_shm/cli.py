"""Command-line entry point: ``indirect-shm <verb> [--config PATH] [--out DIR] [--seed N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig
from .errors import ConfigError
from .pipeline import run_pipeline

VERBS = ("simulate", "features", "nlpca", "sweep", "report", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="indirect-shm",
                                description="Bridge damage quantification from vehicle accelerometer runs")
    p.add_argument("verb", choices=VERBS, help="pipeline stage to run (earlier stages run as needed)")
    p.add_argument("--config", help="YAML pipeline config (defaults apply when omitted)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides seed)")
    p.add_argument("--strict-cv", action="store_true", help="refit NLPCA inside every CV fold")
    p.add_argument("--jobs", type=int, help="parallel model fits in the sweep")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not write the stage cache")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        cfg = cfg.override(seed=args.seed, output_dir=args.out, strict_cv=args.strict_cv, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    result = run_pipeline(cfg, until=args.verb, use_cache=not args.no_cache)
    if not result.ok:
        print(f"stage {result.failed_stage} failed: {result.error}", file=sys.stderr)
        return 1
    if result.report is not None:
        rep = result.report
        print(f"{'method':6} {'kernel':24} {'dataset':12} {'rmse (g)':>9}  goal<={rep.goal_threshold_g:.1f} g")
        for r in rep.rows:
            status = "FAILED " + r.error if r.failed else ("yes" if r.meets(rep.goal_threshold_g) else "no")
            rmse = "" if r.failed else f"{r.rmse:9.3f}"
            print(f"{r.spec.method:6} {r.spec.kernel.family:24} {r.spec.dataset:12} {rmse:>9}  {status}")
    print(f"artifacts written to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
