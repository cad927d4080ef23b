"""Evaluation report container and its JSON/CSV serialization.

Floats are written with repr(), i.e. shortest round-trip decimals, so the
CSV tables and JSON documents parse back to bit-identical values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

TABLE1_COLUMNS = ("method", "accuracy", "auc_corr", "aupr_error", "aupr_success", "ece")
TABLE2_COLUMNS = ("method", "auc_ood", "aupr_ood", "fpr95")
SCALAR_FIELDS = (
    "accuracy", "ece", "auc_corr", "aupr_error", "aupr_success",
    "auc_ood", "aupr_ood", "fpr95",
)


@dataclass
class EvalReport:
    """All scalar metrics plus curve series for one method on one experiment."""

    method: str
    accuracy: float
    ece: float
    auc_corr: float
    aupr_error: float
    aupr_success: float
    auc_ood: float
    aupr_ood: float
    fpr95: float
    reliability: list = field(default_factory=list)       # (mean_conf, accuracy, count)
    acc_conf_curve: list = field(default_factory=list)    # (threshold, accuracy, count)
    id_histogram: list = field(default_factory=list)
    ood_histogram: list = field(default_factory=list)
    # overlap of the normalized ID/OOD confidence histograms (1 = identical)
    hist_overlap: float = 0.0

    def scalars(self) -> dict:
        return {name: getattr(self, name) for name in SCALAR_FIELDS}


def report_to_dict(report: EvalReport) -> dict:
    rel = list(zip(*report.reliability)) or [[], [], []]
    curve = list(zip(*report.acc_conf_curve)) or [[], [], []]
    return {
        "method": report.method,
        **report.scalars(),
        "reliability": {
            "mean_conf": list(rel[0]), "accuracy": list(rel[1]), "count": list(rel[2]),
        },
        "acc_conf_curve": {
            "threshold": list(curve[0]), "accuracy": list(curve[1]), "count": list(curve[2]),
        },
        "id_histogram": list(report.id_histogram),
        "ood_histogram": list(report.ood_histogram),
        "hist_overlap": report.hist_overlap,
    }


def report_from_dict(doc: dict) -> EvalReport:
    rel = doc["reliability"]
    curve = doc["acc_conf_curve"]
    return EvalReport(
        method=doc["method"],
        **{name: float(doc[name]) for name in SCALAR_FIELDS},
        reliability=list(zip(rel["mean_conf"], rel["accuracy"], rel["count"])),
        acc_conf_curve=list(zip(curve["threshold"], curve["accuracy"], curve["count"])),
        id_histogram=[int(c) for c in doc["id_histogram"]],
        ood_histogram=[int(c) for c in doc["ood_histogram"]],
        hist_overlap=float(doc.get("hist_overlap", 0.0)),
    )


def save_report(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)


def load_report(path) -> EvalReport:
    with open(path) as fh:
        return report_from_dict(json.load(fh))


def _write_table(reports, path, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in reports:
            writer.writerow([r.method] + [repr(getattr(r, c)) for c in columns[1:]])


def write_table1(reports, path) -> None:
    """Calibration-task table: accuracy, both protocol AUC/AUPR columns, ECE."""
    _write_table(reports, path, TABLE1_COLUMNS)


def write_table2(reports, path) -> None:
    """OOD-task table: AUC, AUPR and FPR at 95% TPR on the detection split."""
    _write_table(reports, path, TABLE2_COLUMNS)


def _read_table(path, columns) -> dict:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != columns:
            raise ValueError(f"unexpected columns in {path}: {header}")
        for row in reader:
            out[row[0]] = {c: float(v) for c, v in zip(columns[1:], row[1:])}
    return out


def read_table1(path) -> dict:
    return _read_table(path, TABLE1_COLUMNS)


def read_table2(path) -> dict:
    return _read_table(path, TABLE2_COLUMNS)


def write_curve_csv(rows, path, columns) -> None:
    """Generic curve series writer: one row per point."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
