"""Report rendering: delimited output plus figures for scenario runs and costs.

The scenario report is written as a CSV access matrix (one row per reader,
message, slice) next to two rendered figures: a heatmap of the observed
decisions with mismatches highlighted, and a per-operation gas/cost chart
derived from the registry receipts.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.colors import ListedColormap
from matplotlib.patches import Patch

from .actors import ScenarioReport
from .ledger import DEFAULT_ETH_EUR_RATE, cost_eur

CSV_COLUMNS = ["reader", "message", "slice", "expected", "observed", "integrity", "match", "note"]


def write_report_csv(report: ScenarioReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.reader,
                    row.message,
                    row.slice_index,
                    "allow" if row.expected else "deny",
                    "allow" if row.observed else "deny",
                    "" if row.integrity is None else ("pass" if row.integrity else "fail"),
                    "yes" if row.match else "NO",
                    row.note,
                ]
            )
    return path


def render_access_matrix(report: ScenarioReport, path) -> Path:
    """Heatmap of observed decisions; any cell disagreeing with the
    recomputed expectation is flagged in red."""
    path = Path(path)
    readers = sorted({row.reader for row in report.rows})
    columns = []
    for row in report.rows:
        label = f"{row.message}[{row.slice_index}]"
        if label not in columns:
            columns.append(label)
    if not readers or not columns:
        fig, ax = plt.subplots(figsize=(4, 2))
        ax.text(0.5, 0.5, "empty scenario", ha="center", va="center")
        ax.set_axis_off()
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        return path

    # 0 deny, 1 allow, 2 mismatch
    grid = [[0] * len(columns) for _ in readers]
    for row in report.rows:
        i = readers.index(row.reader)
        j = columns.index(f"{row.message}[{row.slice_index}]")
        grid[i][j] = 2 if not row.match else (1 if row.observed else 0)

    fig, ax = plt.subplots(figsize=(max(6, 0.55 * len(columns) + 3), 0.45 * len(readers) + 2))
    cmap = ListedColormap(["#f0f0f0", "#2f9e44", "#e03131"])
    ax.imshow(grid, cmap=cmap, vmin=0, vmax=2, aspect="auto")
    ax.set_xticks(range(len(columns)), columns, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(readers)), readers, fontsize=8)
    ax.set_title(f"Access matrix: {report.scenario}")
    ax.legend(
        handles=[
            Patch(color="#f0f0f0", label="denied"),
            Patch(color="#2f9e44", label="allowed"),
            Patch(color="#e03131", label="mismatch"),
        ],
        loc="upper left",
        bbox_to_anchor=(1.01, 1.0),
        fontsize=8,
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_gas_costs(receipts, path, eth_eur_rate: float = DEFAULT_ETH_EUR_RATE) -> Path:
    """Per-operation totals: gas used and the modelled EUR cost."""
    path = Path(path)
    totals: dict[str, dict] = {}
    for receipt in receipts:
        bucket = totals.setdefault(receipt.op, {"count": 0, "gas": 0, "eur": 0.0})
        bucket["count"] += 1
        bucket["gas"] += receipt.gas_used
        bucket["eur"] += cost_eur(receipt.gas_used, receipt.gas_price, eth_eur_rate)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ops = sorted(totals)
    if ops:
        gas = [totals[op]["gas"] for op in ops]
        eur = [totals[op]["eur"] for op in ops]
        counts = [totals[op]["count"] for op in ops]
        ax1.bar(ops, gas, color="#4263eb")
        ax1.set_ylabel("total gas used")
        for x, (g, n) in enumerate(zip(gas, counts)):
            ax1.annotate(f"{n} calls", (x, g), ha="center", va="bottom", fontsize=8)
        ax2.bar(ops, eur, color="#f08c00")
        ax2.set_ylabel(f"total cost [EUR] @ {eth_eur_rate} EUR/ETH")
    else:
        for ax in (ax1, ax2):
            ax.text(0.5, 0.5, "no receipts", ha="center", va="center")
            ax.set_axis_off()
    fig.suptitle("Registry transaction costs")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_scenario_outputs(report: ScenarioReport, out_dir) -> dict[str, Path]:
    """CSV plus both figures under one directory; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {
        "csv": write_report_csv(report, out_dir / "report.csv"),
        "access_matrix": render_access_matrix(report, out_dir / "access_matrix.png"),
        "gas_costs": render_gas_costs(report.receipts, out_dir / "gas_costs.png"),
    }
