"""Replication harness: generate or load data, fit methods, evaluate, persist."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import QSpec, builtin_q_specs, fit_owl_ipw, fit_parametric_q_learning
from .config import ExperimentConfig
from .data import CohortDataset, read_cohort_csv
from .dtr import FitConfig, FittedRegime, fit_multistage, fit_single_stage

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "scenario", "method", "n", "replication", "seed", "value", "value_train", "opt_pct",
    "opt_pct_stage1", "opt_pct_stage2", "pseudo_mse", "wall_time", "error",
)
SUMMARY_METRICS = ("value", "value_train", "opt_pct", "opt_pct_stage1", "opt_pct_stage2", "pseudo_mse")


def _q_specs(cfg: ExperimentConfig, which: str, T: int) -> dict[int, QSpec]:
    if cfg.q_formulas:
        specs = {t: QSpec.parse(*f) for t, f in cfg.q_formulas.items()}
        if set(specs) != set(range(1, T + 1)):
            raise ValueError("configured Q-model formulas must cover every stage")
        return specs
    return builtin_q_specs(cfg.scenario, which)


def fit_method(method: str, cohort: CohortDataset, cfg: ExperimentConfig, full: CohortDataset | None = None) -> FittedRegime:
    """Dispatch one named method on one cohort."""
    prefix, _, rest = method.partition("-")
    data = cohort
    if prefix == "All":
        if full is None:
            raise ValueError(f"{method} needs the complete data")
        data = full
    fc: FitConfig = cfg.fit
    if rest in ("CFBL", "ACFBL"):
        if data.T == 1:
            return fit_single_stage(data, rest, fc)
        if prefix == "EE":
            return fit_multistage(data, fc, rest)
        from dataclasses import replace

        return fit_multistage(data, replace(fc, missing_weighting="NONE"), rest)
    if rest.startswith("QL("):
        which = {"QL(I)": "INCORRECT", "QL(C)": "CORRECT"}[rest]
        mode = "EE" if prefix == "EE" else "NONE"
        return fit_parametric_q_learning(data, _q_specs(cfg, which, data.T), mode, fc)
    if rest == "OWL(L)":
        return fit_owl_ipw(data, fc.features(1), cfg.owl_propensity, rule_lam=fc.rule_lam, cv_seed=fc.cv_seed)
    raise ValueError(f"unknown method {method!r}")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def run_replication(cfg: ExperimentConfig, rep: int) -> list[dict]:
    """All methods on one simulated replication; failures are recorded per row."""
    from .simgen import ScenarioSpec, evaluate_regime, generate_scenario

    seed = cfg.seed_schedule()[rep]
    spec = ScenarioSpec(cfg.scenario, cfg.n, seed, cfg.alpha_ax)
    rows = []
    try:
        cohort, truth = generate_scenario(spec)
        full = cohort.without_missingness(truth.X_full)
    except Exception as exc:  # noqa: BLE001
        return [_failed(cfg, m, rep, seed, exc, 0.0) for m in cfg.methods]
    for m in cfg.methods:
        t0 = time.perf_counter()
        try:
            reg = fit_method(m, cohort, cfg, full)
            train = (full if m.startswith("All-") else cohort, truth, reg)
            ev = evaluate_regime(reg, spec, cfg.eval_n, cfg.eval_seed, train=train)
            rows.append({
                "scenario": cfg.scenario, "method": m, "n": cfg.n, "replication": rep, "seed": seed,
                "value": ev["value"], "value_train": ev["value_train"], "opt_pct": ev["opt_pct"],
                "opt_pct_stage1": ev.get("opt_pct_stage1"), "opt_pct_stage2": ev.get("opt_pct_stage2"),
                "pseudo_mse": ev.get("pseudo_mse"), "wall_time": time.perf_counter() - t0, "error": "",
            })
        except Exception as exc:  # noqa: BLE001
            log.debug("replication %d method %s failed:\n%s", rep, m, traceback.format_exc())
            rows.append(_failed(cfg, m, rep, seed, exc, time.perf_counter() - t0))
    return rows


def _failed(cfg, m, rep, seed, exc, wall):
    msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return {"scenario": cfg.scenario, "method": m, "n": cfg.n, "replication": rep, "seed": seed,
            "value": None, "value_train": None, "opt_pct": None, "opt_pct_stage1": None, "opt_pct_stage2": None,
            "pseudo_mse": None, "wall_time": wall, "error": msg}


def _rep_worker(args):
    cfg, rep = args
    return rep, run_replication(cfg, rep)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, out_dir: Path | None = None, progress=None) -> tuple[list[dict], Path]:
    """Run every (replication, method); rows come back in replication order."""
    out_dir = Path(out_dir or cfg.out_dir)
    reps = list(range(cfg.replications))
    results: dict[int, list[dict]] = {}
    if jobs > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for rep, rows in ex.map(_rep_worker, [(cfg, r) for r in reps]):
                results[rep] = rows
                if progress:
                    progress(rep)
    else:
        for r in reps:
            results[r] = run_replication(cfg, r)
            if progress:
                progress(r)
    rows = [row for r in reps for row in results[r]]
    write_results(rows, out_dir, cfg)
    return rows, out_dir


def results_csv(rows: list[dict], record_wall_time: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        vals = []
        for c in RESULT_COLUMNS:
            v = row.get(c)
            if c == "wall_time" and not record_wall_time:
                v = None
            vals.append(_fmt(v))
        w.writerow(vals)
    return buf.getvalue()


def _versions() -> dict:
    import scipy

    from . import __version__, _backend

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "regime_kit": __version__, "backend": _backend.BACKEND}


def write_results(rows: list[dict], out_dir: Path, cfg: ExperimentConfig) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "results.csv"
    path.write_text(results_csv(rows, cfg.record_wall_time))
    with open(out_dir / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "method", "wall_time"])
        for row in rows:
            w.writerow([row["replication"], row["method"], f"{row['wall_time']:.4f}"])
    manifest = {
        "config_sha256": cfg.source_hash,
        "config_path": str(cfg.source_path) if cfg.source_path else None,
        "scenario": cfg.scenario,
        "methods": cfg.methods,
        "n": cfg.n,
        "replications": cfg.replications,
        "seed_schedule": cfg.seed_schedule(),
        "eval_n": cfg.eval_n,
        "eval_seed": cfg.eval_seed,
        "alpha_ax": cfg.alpha_ax,
        "versions": _versions(),
        "failed_rows": sum(1 for r in rows if r["error"]),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- summaries -----------------------------------------------------------------


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"results file lacks columns: {', '.join(sorted(missing))}")
        return list(reader)


def summarize_rows(rows: list[dict]) -> list[dict]:
    """Per (scenario, method, n): mean and empirical SD of each metric over successful rows."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["method"], str(r["n"])), []).append(r)
    out = []
    for (sc, m, n), rs in groups.items():
        ok = [r for r in rs if not r.get("error")]
        rec = {"scenario": sc, "method": m, "n": n, "n_reps": len(ok), "n_failed": len(rs) - len(ok),
               "single_rep": len(ok) == 1}
        for k in SUMMARY_METRICS:
            vals = np.array([float(r[k]) for r in ok if r.get(k) not in (None, "")], float)
            if len(vals) == 0:
                rec[f"{k}_mean"], rec[f"{k}_se"] = None, None
            else:
                rec[f"{k}_mean"] = float(vals.mean())
                rec[f"{k}_se"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(rec)
    return out


def summary_csv(summary: list[dict]) -> str:
    cols = ["scenario", "method", "n", "n_reps", "n_failed", "single_rep"]
    for k in SUMMARY_METRICS:
        cols += [f"{k}_mean", f"{k}_se"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in summary:
        w.writerow([_fmt(rec[c]) if not isinstance(rec[c], bool) else str(rec[c]).lower() for c in cols])
    return buf.getvalue()


def summary_table(summary: list[dict]) -> str:
    """Fixed-width table: mean (SE) per metric."""

    def cell(rec, k):
        m, s = rec[f"{k}_mean"], rec[f"{k}_se"]
        return "-" if m is None else f"{m:.3f} ({s:.3f})"

    head = ["method", "n", "reps", "failed", "Value", "Value tr", "Opt%", "Opt% s1", "Opt% s2", "MSE pse"]
    lines = []
    for rec in summary:
        lines.append([rec["method"], str(rec["n"]), str(rec["n_reps"]) + ("*" if rec["single_rep"] else ""),
                      str(rec["n_failed"])] + [cell(rec, k) for k in SUMMARY_METRICS])
    widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(head)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    text = [fmt.format(*head), fmt.format(*("-" * w for w in widths))] + [fmt.format(*l) for l in lines]
    if any(rec["single_rep"] for rec in summary):
        text.append("* single replication: SE reported as 0")
    return "\n".join(text) + "\n"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("REGIME_KIT_JOBS", "1")))
    except ValueError:
        return 1


def load_cohort(cfg: ExperimentConfig) -> CohortDataset:
    return read_cohort_csv(cfg.data_path, combiner=cfg.combiner, id_column=cfg.id_column)
