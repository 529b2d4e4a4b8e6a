"""Report bundle: tidy CSV tables plus a Markdown summary.

Every file is a deterministic function of the predictions and the cohort;
floats are written in shortest round-trip form so nothing depends on
locale or timing.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..brainage import correct_brainage_cv, read_predictions_csv, write_predictions_csv
from ..cohort import column
from ..errors import DegenerateTableError
from ..stats import chi2_contingency, kruskal_wallis
from .analysis import absolute_errors, compare_errors, outcome_analysis, phenotype_analysis
from .experiment import CONFIGURATIONS, ExperimentConfig

PRED_NAME = re.compile(r"^(?P<family>[a-z_]+)__(?P<configuration>[a-z_]+)__seed(?P<seed>\d+)\.csv$")


def prediction_path(out_dir, family, configuration, seed) -> Path:
    return Path(out_dir) / "predictions" / f"{family}__{configuration}__seed{seed}.csv"


def _cell(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_table(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def read_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def discover_predictions(out_dir) -> dict[tuple[str, str, int], Path]:
    found = {}
    pred_dir = Path(out_dir) / "predictions"
    if not pred_dir.is_dir():
        return found
    for path in sorted(pred_dir.iterdir()):
        m = PRED_NAME.match(path.name)
        if m:
            found[(m["family"], m["configuration"], int(m["seed"]))] = path
    return found


def write_round_history(path, histories: dict) -> Path:
    rows = []
    for (family, seed, fold), history in sorted(histories.items()):
        for rec in history:
            for cid, loss in sorted(rec.client_losses.items()):
                rows.append(
                    {"family": family, "seed": seed, "fold": fold, "round": rec.round_index,
                     "client_id": cid, "train_mae": loss, "checksum": rec.checksum}
                )
    return write_table(path, rows, ["family", "seed", "fold", "round", "client_id", "train_mae", "checksum"])


# -- cohort summaries -------------------------------------------------------

def center_summary(cohort) -> list[dict]:
    """Participants and age (mean, sd) per center plus a total row."""
    centers = column(cohort, "center_id")
    ages = column(cohort, "age").astype(float)
    rows = []
    for c in np.unique(centers):
        a = ages[centers == c]
        rows.append({"center": int(c), "n": int(a.size), "age_mean": float(a.mean()),
                     "age_sd": float(a.std(ddof=1)) if a.size > 1 else math.nan})
    rows.append({"center": "total", "n": int(ages.size), "age_mean": float(ages.mean()),
                 "age_sd": float(ages.std(ddof=1)) if ages.size > 1 else math.nan})
    return rows


BINARY_CLINICAL = ("sex", "htn", "dm", "af", "smk", "hcl", "ivt", "reca")
CONTINUOUS_CLINICAL = ("age", "nihss", "p2p", "mrs_3m")


def clinical_by_center(cohort) -> list[dict]:
    centers = column(cohort, "center_id")
    rows = []
    for c in np.unique(centers):
        mask = centers == c
        row = {"center": int(c)}
        for name in BINARY_CLINICAL:
            row[f"{name}_pct"] = float(100.0 * column(cohort, name)[mask].mean())
        for name in ("nihss", "p2p", "mrs_3m"):
            row[f"{name}_median"] = float(np.median(column(cohort, name)[mask]))
        rows.append(row)
    return rows


def center_association_tests(cohort) -> list[dict]:
    """Kruskal-Wallis for continuous variables, chi-squared for binary ones, across centers."""
    centers = column(cohort, "center_id")
    ids = np.unique(centers)
    rows = []
    for name in CONTINUOUS_CLINICAL:
        values = column(cohort, name).astype(float)
        res = kruskal_wallis([values[centers == c] for c in ids])
        rows.append({"variable": name, "test": res.method, "statistic": res.statistic, "df": res.extra["df"], "p_value": res.p_value})
    for name in BINARY_CLINICAL:
        values = column(cohort, name)
        table = np.array([[np.sum((centers == c) & (values == v)) for c in ids] for v in (1, 0)])
        try:
            res = chi2_contingency(table)
        except DegenerateTableError:
            rows.append({"variable": name, "test": "chi2", "statistic": math.nan, "df": "", "p_value": math.nan})
            continue
        rows.append({"variable": name, "test": res.method, "statistic": res.statistic, "df": res.extra["df"], "p_value": res.p_value})
    return rows


# -- bundle -----------------------------------------------------------------

@dataclass
class ReportBundle:
    out_dir: Path
    files: list[Path] = field(default_factory=list)


def ensure_brainage(cfg: ExperimentConfig, out_dir) -> dict:
    """Fill BrainAGE in every prediction CSV lacking it; returns loaded records by key."""
    loaded = {}
    for key, path in discover_predictions(out_dir).items():
        records = read_predictions_csv(path)
        if any(math.isnan(r.brainage) for r in records):
            records = correct_brainage_cv(records, cfg.cv_folds_correction, key[2])
            write_predictions_csv(records, path)
        loaded[key] = records
    return loaded


def run_statistics(cfg: ExperimentConfig, out_dir, cohort, loaded=None) -> list[Path]:
    out_dir = Path(out_dir)
    tables = out_dir / "tables"
    if loaded is None:
        loaded = ensure_brainage(cfg, out_dir)
    files = []
    families = sorted({k[0] for k in loaded})
    seeds = sorted({k[2] for k in loaded})

    summary_rows, test_rows, tidy_rows = [], [], []
    for fam in families:
        for seed in seeds:
            by_conf = {c: loaded[(fam, c, seed)] for c in CONFIGURATIONS if (fam, c, seed) in loaded}
            if not by_conf:
                continue
            tests, summary = compare_errors(by_conf)
            row = {"family": fam, "seed": seed}
            for c in CONFIGURATIONS:
                mean, sd = summary.get(c, (math.nan, math.nan))
                row[f"{c}_mean"] = mean
                row[f"{c}_sd"] = sd
            summary_rows.append(row)
            for (a, b), res in tests.items():
                test_rows.append({"family": fam, "seed": seed, "config_a": a, "config_b": b, "n": res.n[0],
                                  "statistic": res.statistic, "p_value": res.p_value, "effect": res.effect})
            for c, recs in by_conf.items():
                for sid, err in sorted(absolute_errors(recs).items()):
                    tidy_rows.append({"family": fam, "configuration": c, "seed": seed, "subject_id": sid, "abs_error": err})
    err_cols = ["family", "seed"] + [f"{c}_{s}" for c in CONFIGURATIONS for s in ("mean", "sd")]
    files.append(write_table(tables / "errors_by_configuration.csv", summary_rows, err_cols))
    files.append(write_table(tables / "error_tests.csv", test_rows,
                             ["family", "seed", "config_a", "config_b", "n", "statistic", "p_value", "effect"]))
    files.append(write_table(tables / "abs_errors_tidy.csv", tidy_rows,
                             ["family", "configuration", "seed", "subject_id", "abs_error"]))

    pheno_rows, outcome_rows, or_rows = [], [], []
    for (fam, conf, seed), recs in sorted(loaded.items()):
        tag = {"family": fam, "configuration": conf, "seed": seed}
        for row in phenotype_analysis(recs, cohort):
            pheno_rows.append({**tag, **row})
        oa = outcome_analysis(recs, cohort)
        outcome_rows.append({**tag, "n_good": oa.mann_whitney.n[0], "n_poor": oa.mann_whitney.n[1],
                             "brainage_good": oa.mean_brainage_good, "brainage_poor": oa.mean_brainage_poor,
                             "statistic": oa.mann_whitney.statistic, "p_value": oa.mann_whitney.p_value,
                             "converged": int(oa.fit.converged), "separation": int(oa.fit.separation)})
        for row in oa.odds_ratios + oa.standardized_odds_ratios:
            or_rows.append({**tag, **row})
    pheno_cols = ["family", "configuration", "seed", "phenotype", "variable", "n_yes", "n_no",
                  "mean_yes", "mean_no", "statistic", "p_value", "effect", "status"]
    files.append(write_table(tables / "phenotype_comparisons.csv", pheno_rows, pheno_cols))
    files.append(write_table(tables / "outcome_tests.csv", outcome_rows,
                             ["family", "configuration", "seed", "n_good", "n_poor", "brainage_good",
                              "brainage_poor", "statistic", "p_value", "converged", "separation"]))
    files.append(write_table(tables / "odds_ratios.csv", or_rows,
                             ["family", "configuration", "seed", "standardized", "predictor", "coef", "se",
                              "odds_ratio", "ci_lower", "ci_upper", "p_value", "stars"]))

    files.append(write_table(tables / "cohort_centers.csv", center_summary(cohort)))
    files.append(write_table(tables / "cohort_clinical_by_center.csv", clinical_by_center(cohort)))
    files.append(write_table(tables / "center_association_tests.csv", center_association_tests(cohort)))
    return files


def _fmt(x, digits=2):
    try:
        x = float(x)
    except (TypeError, ValueError):
        return str(x)
    if math.isnan(x):
        return "–"
    return f"{x:.{digits}f}"


def _fmt_p(p):
    p = float(p)
    if math.isnan(p):
        return "–"
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def write_markdown(out_dir, cfg: ExperimentConfig) -> Path:
    out_dir = Path(out_dir)
    tables = out_dir / "tables"
    lines = ["# BrainAGE experiment report", ""]
    centers = read_table(tables / "cohort_centers.csv")
    total = centers[-1]
    lines += [
        "## Cohort", "",
        f"{total['n']} subjects in {len(centers) - 1} centers; age {_fmt(total['age_mean'])} ± {_fmt(total['age_sd'])} years.",
        "",
        "| center | n | age, years |", "|---|---|---|",
    ]
    lines += [f"| {r['center']} | {r['n']} | {_fmt(r['age_mean'])} ± {_fmt(r['age_sd'])} |" for r in centers]
    assoc = read_table(tables / "center_association_tests.csv")
    lines += ["", "| variable | test | p (center association) |", "|---|---|---|"]
    lines += [f"| {r['variable']} | {r['test']} | {_fmt_p(r['p_value'] or 'nan')} |" for r in assoc]

    lines += ["", "## Absolute age prediction errors in the test set", "",
              "| family | seed | " + " | ".join(CONFIGURATIONS) + " |", "|---|---|" + "---|" * len(CONFIGURATIONS)]
    for r in read_table(tables / "errors_by_configuration.csv"):
        cells = [f"{_fmt(r[c + '_mean'] or 'nan')} ± {_fmt(r[c + '_sd'] or 'nan')}" for c in CONFIGURATIONS]
        lines.append(f"| {r['family']} | {r['seed']} | " + " | ".join(cells) + " |")
    tests = read_table(tables / "error_tests.csv")
    if tests:
        lines += ["", "| family | seed | comparison | Wilcoxon p |", "|---|---|---|---|"]
        lines += [f"| {r['family']} | {r['seed']} | {r['config_a']} vs {r['config_b']} | {_fmt_p(r['p_value'])} |" for r in tests]

    lines += ["", "## BrainAGE by phenotype (Mann-Whitney U)", "",
              "| family | configuration | seed | phenotype | BrainAGE yes | BrainAGE no | p |", "|---|---|---|---|---|---|---|"]
    for r in read_table(tables / "phenotype_comparisons.csv"):
        if r["variable"] != "brainage":
            continue
        lines.append(f"| {r['family']} | {r['configuration']} | {r['seed']} | {r['phenotype']} | "
                     f"{_fmt(r['mean_yes'] or 'nan')} | {_fmt(r['mean_no'] or 'nan')} | {_fmt_p(r['p_value'] or 'nan')} |")

    lines += ["", "## BrainAGE and functional outcome", "",
              "| family | configuration | seed | BrainAGE good | BrainAGE poor | p | OR (95% CI) |", "|---|---|---|---|---|---|---|"]
    ors = {(r["family"], r["configuration"], r["seed"]): r for r in read_table(tables / "odds_ratios.csv")
           if r["predictor"] == "brainage" and r["standardized"] == "0"}
    for r in read_table(tables / "outcome_tests.csv"):
        o = ors.get((r["family"], r["configuration"], r["seed"]))
        or_txt = f"{_fmt(o['odds_ratio'], 3)} ({_fmt(o['ci_lower'], 3)}–{_fmt(o['ci_upper'], 3)}){o['stars']}" if o else "–"
        lines.append(f"| {r['family']} | {r['configuration']} | {r['seed']} | {_fmt(r['brainage_good'])} | "
                     f"{_fmt(r['brainage_poor'])} | {_fmt_p(r['p_value'])} | {or_txt} |")
    lines += ["", "Significance: * p<0.05, ** p<0.01, *** p<0.001.", ""]
    path = out_dir / "report.md"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def build_report(cfg: ExperimentConfig, out_dir, cohort) -> ReportBundle:
    loaded = ensure_brainage(cfg, out_dir)
    if not loaded:
        raise FileNotFoundError(f"no prediction CSVs under {Path(out_dir) / 'predictions'}")
    files = run_statistics(cfg, out_dir, cohort, loaded)
    files.append(write_markdown(out_dir, cfg))
    files += sorted(discover_predictions(out_dir).values())
    return ReportBundle(Path(out_dir), files)
