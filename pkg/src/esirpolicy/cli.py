"""Command-line entry point.

    esirpolicy validate       --config run.json
    esirpolicy policy-effect  --config run.json [--kind mask --kind vaccine]
    esirpolicy regress        --config run.json [--effects effect_rates.csv]
    esirpolicy pipeline       --config run.json

Exit codes: 0 success, 1 config/IO error, 2 data-integrity error,
3 partial success (some regions excluded).
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, pipeline
from .config import load_config
from .errors import ConfigError, DataIntegrityError, EsirPolicyError

log = logging.getLogger("esirpolicy")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--covid", help="cumulative counts CSV")
    parser.add_argument("--population", help="region,population CSV")
    parser.add_argument("--policies", help="region,kind,issue_date[,validation_anchor] CSV")
    parser.add_argument("--factors", help="region,<factor>... CSV")
    parser.add_argument("--out-dir", help="output directory (env ESIRPOLICY_OUT_DIR)")
    parser.add_argument("--seed", type=int, help="MCMC seed (env ESIRPOLICY_SEED)")
    parser.add_argument("--credible-level", type=float, help="predictive band level, default 0.95")
    parser.add_argument("--alpha", type=float, help="significance level, default 0.1")
    parser.add_argument("--span", help="LOESS span: 'auto' or a value in (0, 1]")
    parser.add_argument("--loess-degree", type=int, choices=(1, 2))
    parser.add_argument("--workers", type=int, help="processes for per-region work")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esirpolicy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "predict policy-free windows and report band coverage"),
                        ("policy-effect", "score counterfactual gaps after policies"),
                        ("regress", "regress transformed effect rates on factors"),
                        ("pipeline", "validate, policy-effect and regress")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "policy-effect":
            p.add_argument("--kind", action="append", choices=("mask", "vaccine"),
                           help="policy kind (repeatable; default: config kinds)")
        if name == "regress":
            p.add_argument("--effects", help="effect-rate CSV (default: <out-dir>/effect_rates.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {
            "covid": args.covid, "population": args.population, "policies": args.policies,
            "factors": args.factors, "out_dir": args.out_dir, "seed": args.seed,
            "credible_level": args.credible_level, "alpha": args.alpha,
            "loess_degree": args.loess_degree, "workers": args.workers,
            "kinds": getattr(args, "kind", None), "span": args.span,
        }
        config = load_config(args.config, overrides)
        if args.command == "validate":
            code = pipeline.cmd_validate(config)
        elif args.command == "policy-effect":
            code = pipeline.cmd_policy_effect(config, args.kind)
        elif args.command == "regress":
            code = pipeline.cmd_regress(config, effects_csv=args.effects)
        else:
            code = pipeline.cmd_pipeline(config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    except (DataIntegrityError, EsirPolicyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return pipeline.EXIT_DATA
    if code == pipeline.EXIT_PARTIAL:
        print("warning: some regions were excluded; see manifest.json", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
