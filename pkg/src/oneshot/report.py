"""Result records and the aggregate views built from them.

Every view is a pure function of the record list; row order never matters.
Missing values are ``nan`` in memory and ``NA`` in CSV / ``null`` in JSON.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

METRICS = ("regret", "regret_hat", "improved", "mse")
TASK_METRICS = {
    "opt": ("regret",),
    "surrogate": ("regret", "regret_hat", "improved"),
    "regression": ("mse",),
}
DEFAULT_METRIC = {"opt": "regret", "surrogate": "regret_hat", "regression": "mse"}
MISSING = "NA"
EPS = np.finfo(float).eps


class MixedProvenanceError(ValueError):
    pass


@dataclass
class ResultRecord:
    task: str
    design: str
    fid: str
    n: int
    d: int
    kind: str
    rep: int
    metric: str
    value: float
    design_seed: int = 0
    model_seed: int = 0
    test_seed: int = 0
    toolkit_version: str = ""
    config_digest: str = ""
    status: str = "ok"

    def key(self) -> tuple:
        return (self.task, self.design, self.fid, self.n, self.kind, self.rep, self.metric)

    @property
    def missing(self) -> bool:
        return not math.isfinite(self.value)


COLUMNS = [f.name for f in fields(ResultRecord)]
_INT_COLUMNS = {"n", "d", "rep", "design_seed", "model_seed", "test_seed"}


def format_value(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else MISSING


def record_to_row(r: ResultRecord) -> List[str]:
    row = []
    for name in COLUMNS:
        v = getattr(r, name)
        row.append(format_value(v) if name == "value" else str(v))
    return row


def row_to_record(row: Mapping[str, str]) -> ResultRecord:
    kw = {}
    for name in COLUMNS:
        text = row[name]
        if name == "value":
            kw[name] = math.nan if text in (MISSING, "", "nan") else float(text)
        elif name in _INT_COLUMNS:
            kw[name] = int(text)
        else:
            kw[name] = text
    return ResultRecord(**kw)


def read_records(path, allow_mixed: bool = False) -> List[ResultRecord]:
    with open(path, newline="") as fh:
        records = [row_to_record(row) for row in csv.DictReader(fh)]
    if not allow_mixed:
        provenance = {(r.toolkit_version, r.config_digest) for r in records}
        if len(provenance) > 1:
            raise MixedProvenanceError(f"records come from several runs: {sorted(provenance)}")
    return records


def write_records(records: Iterable[ResultRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow(record_to_row(r))


# --- helpers ---------------------------------------------------------------


def _select(records, task=None, n=None, metric=None, kind=None) -> List[ResultRecord]:
    out = []
    for r in records:
        if task is not None and r.task != task:
            continue
        if n is not None and r.n != n:
            continue
        if metric is not None and r.metric != metric:
            continue
        if kind is not None and r.kind != kind:
            continue
        out.append(r)
    return out


def cell_means(records, by=("design", "fid")) -> Dict[tuple, float]:
    """Mean value per group, ignoring missing entries; all-missing groups map to nan."""
    groups = defaultdict(list)
    for r in records:
        groups[tuple(getattr(r, k) for k in by)].append(r.value)
    out = {}
    for k, vals in groups.items():
        finite = [v for v in vals if math.isfinite(v)]
        out[k] = math.fsum(sorted(finite)) / len(finite) if finite else math.nan
    return out


def _ordered(values) -> list:
    return sorted(set(values), key=lambda v: (str(type(v)), v))


# --- views -----------------------------------------------------------------


@dataclass
class WorseFactors:
    factors: Dict[tuple, float]  # (design, fid) -> factor >= 1
    best_counts: Dict[str, int]
    flagged: List[str]  # functions whose best mean was zero

    def by_design(self) -> Dict[str, List[float]]:
        out = defaultdict(list)
        for (design, fid), v in sorted(self.factors.items()):
            out[design].append(v)
        return dict(out)


def worse_factors(records, task: str = "opt", n: Optional[int] = None,
                  metric: Optional[str] = None, kind: Optional[str] = None) -> WorseFactors:
    """Per function, each design's mean metric divided by the best design's mean."""
    metric = metric or DEFAULT_METRIC[task]
    means = cell_means(_select(records, task, n, metric, kind))
    per_fid = defaultdict(dict)
    factors, flagged = {}, []
    for (design, fid), m in means.items():
        if math.isfinite(m):
            per_fid[fid][design] = m
        else:
            factors[(design, fid)] = math.nan  # stays visible as a missing cell
    counts = {design: 0 for design, _ in means}
    for fid in _ordered(per_fid):
        row = per_fid[fid]
        best = min(row.values())
        if best == 0.0:
            flagged.append(fid)
            for design, m in row.items():
                factors[(design, fid)] = (m + EPS) / (best + EPS)
        else:
            for design, m in row.items():
                factors[(design, fid)] = m / best
        for design, m in row.items():
            if m == best:
                counts[design] += 1
    return WorseFactors(factors, counts, flagged)


def improvement_fraction(records, design: Optional[str] = None,
                         kind: Optional[str] = None) -> Dict[tuple, tuple]:
    """``(fid, n) -> (fraction, denominator)``; ties count as improvements upstream."""
    sel = _select(records, "surrogate", metric="improved", kind=kind)
    if design is not None:
        sel = [r for r in sel if r.design == design]
    counts = defaultdict(lambda: [0, 0])
    for r in sel:
        c = counts[(r.fid, r.n)]
        if math.isfinite(r.value):
            c[0] += int(r.value > 0)
            c[1] += 1
    out = {}
    for key in _ordered(counts):
        hits, total = counts[key]
        out[key] = (hits / total if total else math.nan, total)
    return out


def scaling_curve(records, task: str = "opt", metric: Optional[str] = None,
                  baseline_n: int = 125, kind: Optional[str] = None) -> Dict[str, Dict[int, float]]:
    """Per design, mean over functions of regrets normalized by the worst baseline-n regret."""
    metric = metric or DEFAULT_METRIC[task]
    sel = _select(records, task, metric=metric, kind=kind)
    worst = defaultdict(lambda: -math.inf)
    for r in sel:
        if r.n == baseline_n and math.isfinite(r.value):
            worst[(r.fid, r.design)] = max(worst[(r.fid, r.design)], r.value)
    means = cell_means(sel, by=("fid", "design", "n"))
    acc = defaultdict(lambda: defaultdict(list))
    excluded = set()
    for (fid, design, n), m in means.items():
        w = worst.get((fid, design))
        if w is None or not w > 0.0:
            excluded.add((fid, design))
            continue
        if math.isfinite(m):
            acc[design][n].append(m / w)
    for fid, design in sorted(excluded):
        warnings.warn(f"no usable n={baseline_n} baseline for {fid}/{design}; excluded")
    return {
        design: {n: float(np.mean(v)) for n, v in sorted(acc[design].items())}
        for design in _ordered(acc)
    }


def evolved_target(design: str) -> Optional[str]:
    """``evolved-<fid>`` designs were evolved for ``<fid>``."""
    prefix = "evolved-"
    return design[len(prefix):] if design.startswith(prefix) else None


def mse_ratio_matrix(records, n: Optional[int] = None, kind: Optional[str] = None,
                     evolved: Optional[Mapping[str, str]] = None) -> Dict[str, Dict[str, float]]:
    """Rows: functions; columns: designs; cells: MSE over the tailored design's MSE."""
    sel = _select(records, "regression", n, "mse", kind)
    means = cell_means(sel)
    designs = _ordered(d for d, _ in means)
    fids = _ordered(f for _, f in means)
    if evolved is None:
        evolved = {d: evolved_target(d) for d in designs if evolved_target(d)}
    baseline_for = {fid: design for design, fid in evolved.items()}
    out = {}
    for fid in fids:
        base_design = baseline_for.get(fid)
        base = means.get((base_design, fid), math.nan) if base_design else math.nan
        if not math.isfinite(base):
            continue
        row = {}
        for design in designs:
            m = means.get((design, fid), math.nan)
            if design == base_design:
                row[design] = 1.0
            elif base > 0.0:
                row[design] = m / base
            else:
                row[design] = 1.0 if m == 0.0 else math.inf
        out[fid] = row
    return out


def average_ranks(records, n: Optional[int] = None, kind: Optional[str] = None,
                  metric: str = "mse", task: str = "regression") -> Dict[str, float]:
    """Mean over functions of each design's rank by mean metric (ties share mid-ranks)."""
    means = cell_means(_select(records, task, n, metric, kind))
    designs = _ordered(d for d, _ in means)
    fids = _ordered(f for _, f in means)
    for fid in fids:
        for design in designs:
            if not math.isfinite(means.get((design, fid), math.nan)):
                raise ValueError(f"design {design!r} has no {metric} on {fid!r}; ranks undefined")
    totals = defaultdict(float)
    for fid in fids:
        ranks = rankdata([means[(d, fid)] for d in designs], method="average")
        for design, rank in zip(designs, ranks):
            totals[design] += float(rank)
    return {design: totals[design] / len(fids) for design in designs}


def near_best_counts(records, margin: float = 0.05, kind: Optional[str] = None,
                     metric: str = "mse", task: str = "regression") -> Dict[int, Dict[str, int]]:
    """Per n, on how many functions each design is within ``margin`` of the best mean."""
    sel = _select(records, task, metric=metric, kind=kind)
    out = {}
    for n in _ordered(r.n for r in sel):
        means = cell_means([r for r in sel if r.n == n])
        designs = _ordered(d for d, _ in means)
        counts = {d: 0 for d in designs}
        per_fid = defaultdict(dict)
        for (design, fid), m in means.items():
            if math.isfinite(m):
                per_fid[fid][design] = m
        for fid, row in per_fid.items():
            best = min(row.values())
            for design, m in row.items():
                if m <= (1.0 + margin) * best:
                    counts[design] += 1
        counts["total"] = sum(counts.values())
        out[n] = counts
    return out


# --- export ----------------------------------------------------------------

VIEWS = ("factors", "fractions", "scaling", "ratio-matrix", "ranks", "near-best")


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def view_rows(view: str, records, **kw) -> tuple:
    """Compute ``view`` and flatten it into ``(header, rows)``."""
    if view == "factors":
        wf = worse_factors(records, **kw)
        rows = [[d, f, v, wf.best_counts.get(d, 0)] for (d, f), v in sorted(wf.factors.items())]
        return ["design", "fid", "factor", "best_count"], rows
    if view == "fractions":
        res = improvement_fraction(records, **kw)
        return ["fid", "n", "fraction", "runs"], [[f, n, v, c] for (f, n), (v, c) in res.items()]
    if view == "scaling":
        res = scaling_curve(records, **kw)
        return ["design", "n", "normalized"], [[d, n, v] for d, c in res.items() for n, v in c.items()]
    if view == "ratio-matrix":
        res = mse_ratio_matrix(records, **kw)
        return ["fid", "design", "ratio"], [[f, d, v] for f, row in res.items() for d, v in row.items()]
    if view == "ranks":
        res = average_ranks(records, **kw)
        return ["design", "average_rank"], [[d, v] for d, v in res.items()]
    if view == "near-best":
        res = near_best_counts(records, **kw)
        return ["n", "design", "count"], [[n, d, c] for n, row in res.items() for d, c in row.items()]
    raise ValueError(f"unknown view {view!r}; expected one of {VIEWS}")


def export_view(view: str, records, out_path, provenance: Optional[dict] = None, **kw) -> tuple:
    """Write ``<stem>.csv`` and ``<stem>.json`` for one view; returns both paths."""
    header, rows = view_rows(view, records, **kw)
    out = Path(out_path)
    csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) if isinstance(v, float) else v for v in row])
    if provenance is None:
        versions = sorted({(r.toolkit_version, r.config_digest) for r in records})
        provenance = {"sources": [{"version": v, "config_digest": c} for v, c in versions]}
    bundle = {
        "view": view,
        "provenance": provenance,
        "columns": header,
        "rows": [[_json_safe(v) for v in row] for row in rows],
    }
    json_path.write_text(json.dumps(bundle, indent=1) + "\n")
    return csv_path, json_path
