"""Metric reports: per-slice storage, median [iqr] tables, significance.

Image metrics are keyed per 2D diffusion-weighted image, map metrics per
anatomical slice. Tables follow the convention `median [iqr]` per cell with
the best value per metric in bold and the second best underlined; MD errors
are scaled by 1e5, FA errors by 1e2 and image MAE by 1e3 for readability.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricError, aggregate, wilcoxon_signed_rank

IMAGE_METRICS = ("mae", "psnr", "ssim")
MAP_METRICS = ("ha_maae", "e2a_maae", "md_mae", "fa_mae")
ALL_METRICS = IMAGE_METRICS + MAP_METRICS

# direction: True when lower is better
LOWER_IS_BETTER = {
    "mae": True,
    "psnr": False,
    "ssim": False,
    "ha_maae": True,
    "e2a_maae": True,
    "md_mae": True,
    "fa_mae": True,
}

REPORT_SCALE = {
    "mae": 1e3,
    "psnr": 1.0,
    "ssim": 1.0,
    "ha_maae": 1.0,
    "e2a_maae": 1.0,
    "md_mae": 1e5,
    "fa_mae": 1e2,
}

HEADER_LABEL = {
    "mae": "MAE (x1e3)",
    "psnr": "PSNR",
    "ssim": "SSIM",
    "ha_maae": "HA MAAE",
    "e2a_maae": "E2A MAAE",
    "md_mae": "MD MAE (x1e5)",
    "fa_mae": "FA MAE (x1e2)",
}


@dataclass
class MetricReport:
    """Per-slice metric values for one run, with reproducible aggregates."""

    run: str
    values: dict = field(default_factory=dict)  # metric -> {slice_id: value}
    meta: dict = field(default_factory=dict)

    def add(self, metric, slice_id, value):
        self.values.setdefault(metric, {})[slice_id] = float(value)

    def series(self, metric):
        """(sorted slice ids, values) for one metric."""
        entries = self.values.get(metric, {})
        ids = sorted(entries)
        return ids, np.array([entries[i] for i in ids])

    def aggregates(self):
        out = {}
        for metric in self.values:
            _, vals = self.series(metric)
            finite = vals[np.isfinite(vals)]
            if finite.size == 0:
                continue
            out[metric] = aggregate(finite)
        return out


def paired_values(report_a, report_b, metric):
    """Values for the slice ids present in both reports, aligned."""
    ids_a, _ = report_a.series(metric)
    ids_b, _ = report_b.series(metric)
    shared = sorted(set(ids_a) & set(ids_b))
    a = np.array([report_a.values[metric][i] for i in shared])
    b = np.array([report_b.values[metric][i] for i in shared])
    return a, b


def pairwise_wilcoxon(reports, metric):
    """Signed-rank p-value for every run pair on one metric."""
    out = {}
    for i, ra in enumerate(reports):
        for rb in reports[i + 1 :]:
            a, b = paired_values(ra, rb, metric)
            try:
                p = wilcoxon_signed_rank(a, b)
            except MetricError:
                p = float("nan")
            out[(ra.run, rb.run)] = p
    return out


def _format_cell(metric, med, iqr):
    scale = REPORT_SCALE[metric]
    digits = 3 if metric in ("ssim",) else 2
    return f"{med * scale:.{digits}f} [{iqr * scale:.{digits}f}]"


def markdown_table(reports, metrics=ALL_METRICS, mark_best=True):
    """`median [iqr]` table, best in bold, second best underlined."""
    aggs = {r.run: r.aggregates() for r in reports}
    best, second = {}, {}
    if mark_best:
        for metric in metrics:
            medians = [
                (aggs[r.run][metric][0], r.run)
                for r in reports
                if metric in aggs[r.run] and not r.meta.get("exclude_from_ranking")
            ]
            if len(medians) >= 2:
                medians.sort(reverse=not LOWER_IS_BETTER[metric])
                best[metric] = medians[0][1]
                second[metric] = medians[1][1]
    lines = [
        "| Run | " + " | ".join(HEADER_LABEL[m] for m in metrics) + " |",
        "|" + "---|" * (len(metrics) + 1),
    ]
    for r in reports:
        cells = []
        for metric in metrics:
            if metric not in aggs[r.run]:
                cells.append("-")
                continue
            cell = _format_cell(metric, *aggs[r.run][metric])
            if best.get(metric) == r.run:
                cell = f"**{cell}**"
            elif second.get(metric) == r.run:
                cell = f"_{cell}_"
            cells.append(cell)
        lines.append("| " + " | ".join([r.run] + cells) + " |")
    return "\n".join(lines) + "\n"


def per_slice_csv(reports):
    """One row per (run, metric, slice): raw unscaled values."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["run", "metric", "slice_id", "value"])
    for report in reports:
        for metric in sorted(report.values):
            ids, vals = report.series(metric)
            for sid, val in zip(ids, vals):
                writer.writerow([report.run, metric, sid, repr(float(val))])
    return buf.getvalue()


def pairwise_csv(reports, metrics=ALL_METRICS):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "run_a", "run_b", "p_value"])
    for metric in metrics:
        for (run_a, run_b), p in sorted(pairwise_wilcoxon(reports, metric).items()):
            writer.writerow([metric, run_a, run_b, repr(float(p))])
    return buf.getvalue()
