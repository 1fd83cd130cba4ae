"""AUC matrices, denial-rate tables, and disposition panels.

All rates carry their denominator in the report metadata; a cell whose
population is empty is flagged with ``n = 0`` rather than silently reported
as zero. The positive class for AUC is the denial event, so scores passed to
:func:`auc` must be denial scores (higher = more likely denied).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import OneClassOnly
from .tabular import DISPOSITION_NAMES, Disposition, LabelSet

POPULATIONS = ("group", "non_group", "all")
LABEL_SOURCES = ("biased", "actual")


def auc(scores: np.ndarray, positive_labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum (Mann-Whitney) statistic.

    Equals the fraction of (positive, negative) pairs where the positive row
    scores strictly higher, counting ties as one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positive_labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = s.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUC needs at least one positive and one negative row")

    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(s.shape[0], dtype=np.float64)
    # average ranks within tie groups (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [s.shape[0]]))
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    rank_sum = float(ranks[pos].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _population_masks(group_flags: np.ndarray) -> dict[str, np.ndarray]:
    g = np.asarray(group_flags, dtype=bool)
    return {"group": g, "non_group": ~g, "all": np.ones(g.shape[0], dtype=bool)}


@dataclass
class EvalReport:
    """Nested-map container mirroring the emitted report.json."""

    auc: dict = field(default_factory=dict)
    denial_rates: dict = field(default_factory=dict)
    disposition_panels: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "denial_rates": self.denial_rates,
            "disposition_panels": self.disposition_panels,
            "metadata": self.metadata,
        }


def auc_matrix(
    denial_scores_by_method: Mapping[str, np.ndarray],
    test_labels: LabelSet,
    test_group: np.ndarray,
) -> dict:
    """AUC per (method, population, label source) on the held-out test rows.

    Undefined cells (one label class in the population) are recorded as None.
    """
    masks = _population_masks(test_group)
    denial = {
        "biased": 1 - test_labels.biased,
        "actual": 1 - test_labels.actual,
    }
    out: dict = {}
    for method, scores in denial_scores_by_method.items():
        out[method] = {}
        for pop, mask in masks.items():
            out[method][pop] = {}
            for source in LABEL_SOURCES:
                try:
                    val = auc(scores[mask], denial[source][mask])
                except OneClassOnly:
                    val = None
                out[method][pop][source] = val
    return out


def denial_rate_table(
    decisions_by_method: Mapping[str, np.ndarray],
    test_group: np.ndarray,
    full_labels: LabelSet,
    full_group: np.ndarray,
    test_ids: np.ndarray,
) -> tuple[dict, dict]:
    """Denial rates per method (test split) plus the biased/actual data rows.

    Data rows are reported on the full sample; the test-split variants are
    returned in the metadata dict alongside every cell's denominator.
    """
    masks = _population_masks(test_group)
    table: dict = {}
    meta: dict = {"cell_n": {}, "data_rows_scope": "full_sample", "data_rows_test_split": {}}
    for method, denied in decisions_by_method.items():
        denied = np.asarray(denied, dtype=bool)
        table[method] = {}
        meta["cell_n"][method] = {}
        for pop, mask in masks.items():
            n = int(mask.sum())
            meta["cell_n"][method][pop] = n
            table[method][pop] = float(denied[mask].mean()) if n else None

    full_masks = _population_masks(full_group)
    test_masks = _population_masks(full_group[test_ids])
    for row_name, labels in (
        ("biased_training_data", full_labels.biased),
        ("actual_data", full_labels.actual),
    ):
        table[row_name] = {}
        meta["cell_n"][row_name] = {}
        meta["data_rows_test_split"][row_name] = {}
        for pop in POPULATIONS:
            mask = full_masks[pop]
            n = int(mask.sum())
            meta["cell_n"][row_name][pop] = n
            table[row_name][pop] = float((labels[mask] == 0).mean()) if n else None
            tmask = test_masks[pop]
            tvals = labels[test_ids][tmask]
            meta["data_rows_test_split"][row_name][pop] = (
                float((tvals == 0).mean()) if tvals.size else None
            )
    return table, meta


def disposition_panel(
    decisions_by_method: Mapping[str, np.ndarray],
    test_labels: LabelSet,
    test_group: np.ndarray,
) -> tuple[dict, dict]:
    """Denial fraction per (method, disposition, population) on test rows.

    Include the actual-data benchmark in ``decisions_by_method`` to get the
    reference bars. Empty cells carry ``rate = None`` and ``n = 0``.
    """
    masks = _population_masks(test_group)
    panels: dict = {}
    meta: dict = {"cell_n": {}}
    for method, denied in decisions_by_method.items():
        denied = np.asarray(denied, dtype=bool)
        panels[method] = {}
        meta["cell_n"][method] = {}
        for disp, disp_name in DISPOSITION_NAMES.items():
            panels[method][disp_name] = {}
            meta["cell_n"][method][disp_name] = {}
            in_disp = test_labels.disposition == int(disp)
            for pop, mask in masks.items():
                cell = in_disp & mask
                n = int(cell.sum())
                meta["cell_n"][method][disp_name][pop] = n
                panels[method][disp_name][pop] = (
                    float(denied[cell].mean()) if n else None
                )
    return panels, meta


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def write_report_json(report: EvalReport, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v) -> str:
    if v is None:
        return "NA"
    return repr(float(v))


def write_auc_csv(auc_map: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "population", "label_source", "auc"])
        for method in sorted(auc_map):
            for pop in POPULATIONS:
                for source in LABEL_SOURCES:
                    w.writerow([method, pop, source, _fmt(auc_map[method][pop][source])])


def write_denial_rates_csv(table: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "population", "denial_rate"])
        for row_name in sorted(table):
            for pop in POPULATIONS:
                w.writerow([row_name, pop, _fmt(table[row_name][pop])])


def write_disposition_csv(panels: dict, cell_n: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "disposition", "population", "denial_rate", "n"])
        for method in sorted(panels):
            for disp_name in DISPOSITION_NAMES.values():
                for pop in POPULATIONS:
                    w.writerow(
                        [
                            method,
                            disp_name,
                            pop,
                            _fmt(panels[method][disp_name][pop]),
                            cell_n[method][disp_name][pop],
                        ]
                    )


PANEL_TITLES = {
    "approved_both": "Approved in both",
    "counterfactual_denial": "Counterfactual denials",
    "actual_denial": "Actual denials",
}
_GROUP_COLORS = {"group": "#d95f02", "non_group": "#1f77b4"}


def write_disposition_svg(
    panels: dict,
    path,
    benchmark: str = "benchmark",
    method_order: Optional[list[str]] = None,
):
    """Three-panel grouped-bar chart: one panel per disposition, bars grouped
    by method and colored by group; benchmark bars faded with dashed borders.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "fairlend"
    if method_order is None:
        method_order = sorted(panels)
    methods = [m for m in method_order if m in panels]
    if benchmark in methods:
        methods.remove(benchmark)
        methods.insert(0, benchmark)

    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2), sharey=True)
    width = 0.38
    x = np.arange(len(methods))
    for ax, (disp_name, title) in zip(axes, PANEL_TITLES.items()):
        for j, pop in enumerate(("group", "non_group")):
            heights = [
                panels[m][disp_name][pop] if panels[m][disp_name][pop] is not None else 0.0
                for m in methods
            ]
            offs = x + (j - 0.5) * width
            for i, m in enumerate(methods):
                faded = m == benchmark
                ax.bar(
                    offs[i],
                    heights[i],
                    width=width,
                    color=_GROUP_COLORS[pop],
                    alpha=0.35 if faded else 0.9,
                    edgecolor="black",
                    linestyle="--" if faded else "-",
                    linewidth=0.8,
                    label=pop if i == (1 if benchmark in methods else 0) else None,
                )
        ax.set_title(title)
        ax.set_xticks(x)
        ax.set_xticklabels(methods, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("predicted denial rate")
    handles, labels = axes[0].get_legend_handles_labels()
    if handles:
        axes[-1].legend(handles, labels, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
