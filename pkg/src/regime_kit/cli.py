"""Command-line entry point: ``regime-kit {fit,simulate,summarize}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import runner
from .baselines import BlipRule
from .config import ConfigError, ExperimentConfig, load_config
from .data import DataError
from .rules import DecisionRule

log = logging.getLogger("regime_kit")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def rule_to_dict(rule) -> dict:
    if isinstance(rule, DecisionRule):
        return {"kind": "linear-score", "features": rule.features, "center": rule.center, "scale": rule.scale,
                "intercept": rule.intercept, "coef": rule.coef, "lambda": rule.lam, "notes": rule.notes}
    if isinstance(rule, BlipRule):
        return {"kind": "blip", "formula": rule.blip.text, "psi": rule.psi}
    raise TypeError(f"cannot serialize {type(rule).__name__}")


def _with_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=Path(args.out))
    return cfg


def cmd_simulate(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    if cfg.scenario == "FILE":
        raise ConfigError("[scenario] name: simulate needs SIM1, SIM2 or SIM3; use `fit` for a data file")
    jobs = args.jobs or runner.default_jobs()

    def progress(rep):
        log.info("replication %d/%d done", rep + 1, cfg.replications)

    rows, out = runner.run_experiment(cfg, jobs=jobs, progress=progress)
    failed = [r for r in rows if r["error"]]
    summary = runner.summarize_rows(rows)
    (out / "summary.csv").write_text(runner.summary_csv(summary))
    print(runner.summary_table(summary), end="")
    print(f"results: {out / 'results.csv'}")
    if failed:
        for r in failed[:10]:
            print(f"replication {r['replication']} {r['method']}: {r['error']}", file=sys.stderr)
        return 2
    return 0


def cmd_fit(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    if cfg.scenario == "FILE":
        cohort = runner.load_cohort(cfg)
        full = None
    else:
        from .simgen import ScenarioSpec, generate_scenario

        cohort, truth = generate_scenario(ScenarioSpec(cfg.scenario, cfg.n, cfg.seed, cfg.alpha_ax))
        full = cohort.without_missingness(truth.X_full)
    out = {"n": cohort.n, "stages": cohort.T, "methods": {}}
    status = 0
    for m in cfg.methods:
        try:
            reg = runner.fit_method(m, cohort, cfg, full)
        except (DataError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
            out["methods"][m] = {"error": f"{type(exc).__name__}: {exc}"}
            print(f"{m}: {exc}", file=sys.stderr)
            status = 2
            continue
        out["methods"][m] = {
            "rules": {t: rule_to_dict(r) for t, r in reg.rules.items()},
            "diagnostics": reg.diagnostics,
        }
        print(f"{m}: fitted {reg.T} stage rule(s)" + (" (flagged)" if reg.flagged else ""))
    dest = Path(cfg.out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    path = dest / "rules.json"
    path.write_text(json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n")
    print(f"rules: {path}")
    return status


def cmd_summarize(args) -> int:
    rows = runner.read_results(args.results)
    if not rows:
        log.warning("results file has no data rows; summary is empty")
    summary = runner.summarize_rows(rows)
    text = runner.summary_csv(summary)
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "summary.csv").write_text(text)
    if args.csv:
        print(text, end="")
    else:
        print(runner.summary_table(summary), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regime-kit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="INI experiment file")
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--out", default=None, help="override the output directory")

    sp = sub.add_parser("simulate", help="run a scenario experiment")
    common(sp)
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default $REGIME_KIT_JOBS or 1)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit every configured method on one dataset")
    common(sp)
    sp.add_argument("--jobs", type=int, default=None, help="accepted for symmetry; fitting is serial")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("summarize", help="per-method mean and SE of a results file")
    sp.add_argument("results", type=Path)
    sp.add_argument("--out", default=None, help="also write summary.csv here")
    sp.add_argument("--csv", action="store_true", help="print the delimited table instead")
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
