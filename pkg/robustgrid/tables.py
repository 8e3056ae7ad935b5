from __future__ import annotations

import logging
from typing import Hashable, List, Optional, Sequence

from beautifultable import ALIGN_CENTER, BeautifulTable

from .constants import REFERENCE_CONTRAST_DEDUCED, REFERENCE_GRID_DEDUCED
from .converters import format_cell, format_decimal
from .report import GRID_CORNER, SweepSummary
from .scheduler import SweepStats, VerdictGrid
from .summary import ParameterCounts, SweepTally

log = logging.getLogger("robustgrid")

ROW_LABELS = (
    "SAT Overall",
    "SAT deduced",
    "SAT verified",
    "UNSAT Overall",
    "UNSAT deduced",
    "UNSAT verified",
    "UNKNOWN",
)


def new_table(header: Sequence[str], maxwidth: int = 500) -> BeautifulTable:
    table = BeautifulTable(default_alignment=ALIGN_CENTER, maxwidth=maxwidth)
    table.set_style(BeautifulTable.STYLE_RST)
    table.columns.header = list(header)
    table.columns.alignment[header[0]] = BeautifulTable.ALIGN_LEFT
    return table


def _count_rows(counts: Sequence[ParameterCounts]) -> List[List]:
    return [
        [ROW_LABELS[0], *(c.sat.overall for c in counts)],
        [ROW_LABELS[1], *(c.sat.deduced for c in counts)],
        [ROW_LABELS[2], *(c.sat.verified for c in counts)],
        [ROW_LABELS[3], *(c.unsat.overall for c in counts)],
        [ROW_LABELS[4], *(c.unsat.deduced for c in counts)],
        [ROW_LABELS[5], *(c.unsat.verified for c in counts)],
        [ROW_LABELS[6], *(c.unknown for c in counts)],
    ]


def _time_row(tally: SweepTally, keys: Sequence[Hashable]) -> List:
    def fmt(value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.3f}s"

    return ["Mean verifier time", *(fmt(tally.mean_time(k)) for k in keys)]


def grid_tables(summary: SweepSummary) -> List[str]:
    """One table per epsilon with the betas as columns."""
    ret = []
    for epsilon in summary.epsilons:
        table = new_table([f"epsilon={format_decimal(epsilon)}", *(f"beta={format_decimal(b)}" for b in summary.betas)])
        keys = [(epsilon, beta) for beta in summary.betas]
        for row in _count_rows([summary.grid_tally.get_counts(k) for k in keys]):
            table.rows.append(row)
        table.rows.append(_time_row(summary.grid_tally, keys))
        ret.append(str(table))
    return ret


def contrast_table(summary: SweepSummary) -> str:
    table = new_table(["gamma", *(format_decimal(g) for g in summary.gammas)])
    for row in _count_rows([summary.contrast_tally.get_counts(g) for g in summary.gammas]):
        table.rows.append(row)
    table.rows.append(["% UNSAT", *("-" if p is None else f"{p:.2f}" for p in summary.contrast_percent)])
    table.rows.append(_time_row(summary.contrast_tally, summary.gammas))
    return str(table)


def heatmap_table(summary: SweepSummary) -> str:
    """% UNSAT by epsilon (rows, decreasing) and beta (columns)."""
    table = new_table(["epsilon\\beta", *(format_decimal(b) for b in summary.betas)])
    for e in reversed(range(len(summary.epsilons))):
        table.rows.append(
            [
                format_decimal(summary.epsilons[e]),
                *("-" if column[e] is None else f"{column[e]:.2f}" for column in summary.heatmap),
            ]
        )
    return str(table)


def _stats_row(name: str, value: SweepStats, reference: float) -> List:
    return [
        name,
        value.total,
        value.verified,
        value.falsified,
        value.deduced,
        value.unknown,
        value.verifier_calls,
        f"{value.deduced_fraction:.0%}",
        f"{reference:.0%}",
    ]


def overview_table(summary: SweepSummary) -> str:
    header = ["Sweep", "Cells", "Verified", "Falsified", "Deduced", "Unknown"]
    table = new_table([*header, "Verifier\ncalls", "Deduced\n%", "Reference\n%"])
    table.rows.append(_stats_row("Grid", summary.grid_stats, REFERENCE_GRID_DEDUCED))
    if summary.gammas:
        table.rows.append(_stats_row("Contrast", summary.contrast_stats, REFERENCE_CONTRAST_DEDUCED))
    return str(table)


def anchor_table(grid: VerdictGrid) -> str:
    """Cells of one anchor, laid out like the grid CSV."""
    table = new_table([GRID_CORNER, *(format_decimal(b) for b in grid.betas)])
    for e in reversed(range(len(grid.epsilons))):
        table.rows.append(
            [
                format_decimal(grid.epsilons[e]),
                *(format_cell(grid.cell(b, e).status, grid.cell(b, e).provenance) for b in range(len(grid.betas))),
            ]
        )
    return str(table)


def render_summary(summary: SweepSummary) -> str:
    parts = [
        f"Anchors: {summary.anchors} ({summary.analysed} analysed, {len(summary.skipped)} skipped as misclassified)",
        overview_table(summary),
        "% UNSAT by epsilon and beta",
        heatmap_table(summary),
    ]
    if summary.exhausted_grid:
        parts.append(f"Grid budget ran out for anchors: {', '.join(map(str, summary.exhausted_grid))}")
    drops = []
    if summary.epsilon_drop is not None:
        drops.append(f"{summary.epsilon_drop:.2f} points per epsilon step")
    if summary.beta_drop is not None:
        drops.append(f"{summary.beta_drop:.2f} points per beta step")
    if drops:
        parts.append("Mean % UNSAT drop: " + ", ".join(drops))
    parts.extend(grid_tables(summary))
    if summary.gammas:
        parts.append("Contrast: % UNSAT and cell counts by gamma")
        parts.append(contrast_table(summary))
        if summary.exhausted_contrast:
            parts.append(f"Contrast budget ran out for anchors: {', '.join(map(str, summary.exhausted_contrast))}")
    return "\n\n".join(parts)
