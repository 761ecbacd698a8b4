"""Regression metrics, binned MAE, and CSV report files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, UndefinedCorrelationError

UNDEFINED = "undefined"


def _pair(preds, labels, min_len=1):
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ContractError(f"length mismatch: {p.size} predictions, {y.size} labels")
    if p.size < min_len:
        raise ContractError(f"need at least {min_len} samples, got {p.size}")
    return p, y


def rmse(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.sqrt(np.mean((p - y) ** 2)))


def mae(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean(np.abs(p - y)))


def pearson(preds, labels) -> float:
    p, y = _pair(preds, labels, min_len=2)
    dp, dy = p - p.mean(), y - y.mean()
    sp, sy = np.sqrt((dp * dp).sum()), np.sqrt((dy * dy).sum())
    if sp == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation undefined: a vector has zero variance")
    return float(np.clip((dp * dy).sum() / (sp * sy), -1.0, 1.0))


def spearman(preds, labels) -> float:
    """Pearson correlation of average ranks."""
    p, y = _pair(preds, labels, min_len=2)
    return pearson(rankdata(p, method="average"), rankdata(y, method="average"))


@dataclass
class BinRow:
    bin_low: float
    bin_high: float
    mae: float | None
    n_test: int
    n_train_in_bin: int


def binned_mae(preds, labels, train_labels, bin_edges: Sequence[float]) -> list[BinRow]:
    """MAE per label bin ``[e_k, e_{k+1})`` plus training-label counts.

    The final bin also includes its upper edge so the maximum label is
    never dropped. Bins without test samples report ``mae=None``.
    """
    p, y = _pair(preds, labels)
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ContractError("bin_edges must be strictly increasing with at least 2 entries")
    tr = np.asarray(train_labels, dtype=np.float64).ravel()
    rows = []
    last = len(edges) - 2
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        upper = (lambda v: v <= hi) if k == last else (lambda v: v < hi)
        sel = (y >= lo) & upper(y)
        n_tr = int(((tr >= lo) & upper(tr)).sum())
        err = float(np.mean(np.abs(p[sel] - y[sel]))) if sel.any() else None
        rows.append(BinRow(float(lo), float(hi), err, int(sel.sum()), n_tr))
    return rows


def default_bin_edges(*label_sets) -> list[float]:
    """Unit-wide bins over integer pK values spanning all labels."""
    vals = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in label_sets if len(v)])
    lo, hi = math.floor(vals.min()), math.floor(vals.max()) + 1
    return [float(e) for e in range(lo, hi + 1)]


@dataclass
class MetricsReport:
    rmse: float
    pearson: float | None
    spearman: float | None
    n: int
    binned: list[BinRow] = field(default_factory=list)
    residuals: list[tuple[str, float, float]] = field(default_factory=list)

    def summary_line(self) -> str:
        return (f"rmse={_fmt(self.rmse)} pearson={_fmt(self.pearson)} "
                f"spearman={_fmt(self.spearman)} n={self.n}")


def _fmt(v) -> str:
    return UNDEFINED if v is None else f"{v:.6f}"


def evaluate(target_ids: Sequence[str], preds, labels, train_labels=(), bin_edges=None) -> MetricsReport:
    p, y = _pair(preds, labels)
    corr = {}
    for name, fn in (("pearson", pearson), ("spearman", spearman)):
        try:
            corr[name] = fn(p, y)
        except (UndefinedCorrelationError, ContractError):
            corr[name] = None
    edges = bin_edges if bin_edges is not None else default_bin_edges(y, train_labels)
    return MetricsReport(
        rmse=rmse(p, y),
        pearson=corr["pearson"],
        spearman=corr["spearman"],
        n=int(p.size),
        binned=binned_mae(p, y, train_labels, edges),
        residuals=[(t, float(a), float(b)) for t, a, b in zip(target_ids, y, p)],
    )


def write_reports(report: MetricsReport, out_dir) -> dict[str, Path]:
    """Write metrics.csv, binned_mae.csv and residuals.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {n: out / f"{n}.csv" for n in ("metrics", "binned_mae", "residuals")}

    def writer(path):
        fh = open(path, "w", encoding="utf-8", newline="")
        return fh, csv.writer(fh, lineterminator="\n")

    fh, w = writer(paths["metrics"])
    with fh:
        w.writerow(["rmse", "pearson", "spearman", "n"])
        w.writerow([_fmt(report.rmse), _fmt(report.pearson), _fmt(report.spearman), report.n])
    fh, w = writer(paths["binned_mae"])
    with fh:
        w.writerow(["bin_low", "bin_high", "mae", "n_test", "n_train"])
        for r in report.binned:
            w.writerow([_fmt(r.bin_low), _fmt(r.bin_high), "" if r.mae is None else _fmt(r.mae),
                        r.n_test, r.n_train_in_bin])
    fh, w = writer(paths["residuals"])
    with fh:
        w.writerow(["target_id", "label", "prediction", "residual"])
        for tid, label, pred in report.residuals:
            w.writerow([tid, _fmt(label), _fmt(pred), _fmt(pred - label)])
    return paths
