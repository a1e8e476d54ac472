"""Command line entry point.

Exit status: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import synth as synth_mod
from .errors import ConfigError, EduOutcomesError
from .pipeline import PipelineConfig, run_pipeline, sa_input_schema

SUBCOMMAND_STAGES = {
    "ingest": ("ingest",),
    "train": ("ingest", "train"),
    "evaluate": ("ingest", "evaluate"),
    "explain": ("ingest", "train", "explain"),
    "assoc": ("ingest", "assoc"),
    "report": ("ingest", "report"),
    "run": None,
}


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edu-outcomes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "read, merge and label the inputs; write dataset.csv",
        "train": "refit every configured model on the full dataset",
        "evaluate": "repeated stratified cross-validation (and grid search)",
        "explain": "refit, then SHAP, odds ratios, linear importance and tree export",
        "assoc": "gamma / Kruskal-Wallis / ANOVA screen against the outcome",
        "report": "frequency tables, group summaries, quantile bins, histograms",
        "run": "every stage",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--threshold", type=float, help="P(fail) decision threshold")
    p = sub.add_parser("synth", help="write synthetic SA- or SL-style input CSVs")
    p.add_argument("--kind", choices=("sa", "sl"), default="sa")
    p.add_argument("--n", type=int, default=5000, help="number of schools")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True, help="directory for the CSVs and schema.yaml")
    return parser


def _synth(args) -> int:
    if args.n < 0:
        raise ConfigError("--n must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "sa":
        bundle = synth_mod.synth_sa_bundle(args.n, seed=args.seed)
        tables = {k: bundle[k] for k in ("performance", "masterlist", "households")}
        schema = sa_input_schema()
    else:
        tables = synth_mod.synth_sl_bundle(args.n, seed=args.seed)
        schema = synth_mod.sl_schema()
    for name, t in tables.items():
        t.to_csv(out / f"{name}.csv")
    with open(out / "schema.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema.to_dict(), fh, sort_keys=False)
    print(f"wrote {', '.join(sorted(tables))} to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = PipelineConfig.load(args.config).with_overrides(args.seed, args.threshold, args.out)
        result = run_pipeline(cfg, SUBCOMMAND_STAGES[args.command])
    except EduOutcomesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    m = result.manifest
    print(f"{args.command}: {len(m.files) + 1} files in {result.out_dir} (config {m.config_hash[:12]})")
    for family, rep in result.reports.items():
        s = rep.summary()
        print(f"  {family:8s} acc={s['accuracy']:.3f} sens={s['sensitivity']:.3f} "
              f"spec={s['specificity']:.3f} auc={s['auc']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
