"""Command-line entry points: generate, train, verify, report."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efgen",
        description=(
            "Exponential-family generative models: synthetic data generation, "
            "training to stationary points, and entropy-sum verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--quiet", action="store_true", help="suppress stdout chatter")

    p_gen = sub.add_parser("generate", help="sample a synthetic dataset + manifest")
    add_common(p_gen)
    p_gen.add_argument("--seed", type=int, default=None, help="override config seeds")

    p_train = sub.add_parser("train", help="train to convergence or iteration cap")
    add_common(p_train)
    p_train.add_argument("--seed", type=int, default=None, help="override config seeds")

    p_verify = sub.add_parser("verify", help="criterion + entropy-sum gap verdicts")
    add_common(p_verify)
    p_verify.add_argument("--model", required=True, help="trained model JSON")

    p_report = sub.add_parser("report", help="aggregate run summaries into CSV")
    p_report.add_argument("summaries", nargs="+", help="summary.json files")
    add_common(p_report, needs_config=False)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    from . import harness

    try:
        if args.command == "generate":
            config = harness.load_config(args.config, seed_override=args.seed)
            paths = harness.cmd_generate(config, out_dir=args.out)
            if not args.quiet:
                print(f"wrote {paths['dataset']} and {paths['manifest']}")
        elif args.command == "train":
            config = harness.load_config(args.config, seed_override=args.seed)
            paths = harness.cmd_train(config, out_dir=args.out)
            if not args.quiet:
                print(f"wrote {paths['report']}")
        elif args.command == "verify":
            config = harness.load_config(args.config)
            result = harness.cmd_verify(config, args.model, out_dir=args.out)
            if not args.quiet:
                for name, verdict in result["verdicts"].items():
                    print(f"{name}: {verdict['status']}")
        elif args.command == "report":
            out_path = None
            if args.out:
                import os

                os.makedirs(args.out, exist_ok=True)
                out_path = os.path.join(args.out, "aggregate.csv")
            table = harness.cmd_report(args.summaries, out_path=out_path)
            if not args.quiet:
                print(table if out_path is None else f"wrote {table}")
        else:  # pragma: no cover - argparse guards this
            return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
