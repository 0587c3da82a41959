#!/usr/bin/env python3
"""
mmv-anomaly manager

Command-line entry point: generate seeded problems, run detectors, sweep
phase grids and evaluate the closed-form oracles.
"""

import sys
from pathlib import Path
from typing import List, Optional

# Make the src and scripts packages importable when run from a checkout
sys.path.insert(0, str(Path(__file__).parent))

try:
    from scripts import (
        action_detect,
        action_generate,
        action_phase,
        action_theory,
        build_detector,
        create_parser,
        handle_error,
        parse_and_setup_args,
        validate_args,
    )
except ImportError as e:
    print(f"❌ Error importing mmv-anomaly modules: {e}", file=sys.stderr)
    print("🔧 Please install the package with its dependencies", file=sys.stderr)
    sys.exit(1)


class Manager:
    """Dispatches parsed arguments to the action handlers"""

    def __init__(self, args):
        self.args = args

    def generate(self) -> None:
        action_generate(self.args.config, self.args.output_dir, self.args.seed, self.args.preset)

    def detect(self) -> None:
        args = self.args
        detector = build_detector(
            args.algorithm or "osga",
            inner=args.inner,
            iters=args.iters,
            lam=args.lam,
            tol=args.tol,
            max_iters=args.max_iters,
            acceleration=not args.no_acceleration,
            reestimate=args.reestimate,
        )
        action_detect(
            detector,
            data_dir=args.data_dir,
            config_path=args.config,
            k=args.k,
            seed=args.seed,
            preset=args.preset,
            gap_plot=args.gap_plot,
        )

    def phase(self) -> None:
        args = self.args
        action_phase(
            args.config,
            args.output_dir,
            threads=args.threads,
            seed=args.seed if args.seed_given else None,
            preset=args.preset,
            algorithm=args.algorithm,
            resume=args.resume,
            plots=not args.no_plots,
        )

    def theory(self) -> None:
        args = self.args
        action_theory(
            n_vars=args.n,
            n_anomalies=args.k if args.k is not None else 5,
            m_per_step=args.m,
            mu2=args.mu2,
            sigma2_sq=args.sigma2_sq,
            sigma1_sq=args.sigma1_sq,
            model=args.model,
        )


def main(argv: Optional[List[str]] = None):
    """Main CLI interface"""
    parser = create_parser()

    try:
        args = parse_and_setup_args(parser, argv)
        validate_args(args)
        manager = Manager(args)
        getattr(manager, args.action)()
    except (Exception, KeyboardInterrupt) as e:
        handle_error(e)

    sys.exit(0)


if __name__ == "__main__":
    main()
