"""Combined run report: audit indicators (part I) and mitigation gaps
(part II) as Markdown and CSV twins."""

from __future__ import annotations

import csv
import os

__all__ = ["render_report", "write_report"]


def _fmt(x, digits=3):
    if x is None:
        return "--"
    return f"{x:.{digits}g}"


def _pct(x):
    return "--" if x is None else f"{100.0 * x:.3g}"


def audit_row(label, audit_dict, clean_group):
    scopes = audit_dict["scopes"]
    ind = audit_dict.get("bias_indicators", {})
    gc = scopes[str(clean_group)]
    gb = scopes[str(1 - clean_group)]
    total = scopes["global"]
    return {
        "condition": label,
        "err_total_pct": _pct(total["error_rate"]),
        "err_gc_pct": _pct(gc["error_rate"]),
        "err_gb_pct": _pct(gb["error_rate"]),
        "om_gc_pct": _pct(gc["omission_rate"]),
        "om_gb_pct": _pct(gb["omission_rate"]),
        "co_gc_pct": _pct(gc["commission_rate"]),
        "co_gb_pct": _pct(gb["commission_rate"]),
        "s": _fmt(ind.get("s")),
        "rr_om": _fmt(ind.get("rr_omission")),
        "rr_co": _fmt(ind.get("rr_commission")),
        "significant": str(ind.get("significant_at_0.05", "--")),
    }


def mode_row(label, clean_eval, observed_eval):
    row = {"mode": label}
    for prefix, rep in (("true", clean_eval), ("obs", observed_eval)):
        if rep is None:
            row[f"{prefix}_dice_gap"] = "--"
            row[f"{prefix}_iou_gap"] = "--"
        else:
            row[f"{prefix}_dice_gap"] = _fmt(rep["dice_gap"])
            row[f"{prefix}_iou_gap"] = _fmt(rep["iou_gap"])
    return row


_PART1_COLS = [
    "condition",
    "err_total_pct",
    "err_gc_pct",
    "err_gb_pct",
    "om_gc_pct",
    "om_gb_pct",
    "co_gc_pct",
    "co_gb_pct",
    "s",
    "rr_om",
    "rr_co",
    "significant",
]
_PART2_COLS = ["mode", "true_dice_gap", "true_iou_gap", "obs_dice_gap", "obs_iou_gap"]


def render_report(audit_rows, mode_rows) -> str:
    lines = ["# Label-bias run report", ""]
    lines.append("## Part I: audit")
    lines.append("")
    lines.append("| " + " | ".join(_PART1_COLS) + " |")
    lines.append("|" + "---|" * len(_PART1_COLS))
    for row in audit_rows:
        lines.append("| " + " | ".join(str(row[c]) for c in _PART1_COLS) + " |")
    lines.append("")
    lines.append("## Part II: mitigation (gaps = clean group minus biased group, percent)")
    lines.append("")
    lines.append("| " + " | ".join(_PART2_COLS) + " |")
    lines.append("|" + "---|" * len(_PART2_COLS))
    for row in mode_rows:
        lines.append("| " + " | ".join(str(row[c]) for c in _PART2_COLS) + " |")
    lines.append("")
    return "\n".join(lines)


def write_report(out_dir, audit_rows, mode_rows):
    os.makedirs(out_dir, exist_ok=True)
    md_path = os.path.join(out_dir, "report.md")
    with open(md_path, "w", encoding="ascii") as f:
        f.write(render_report(audit_rows, mode_rows))
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", newline="", encoding="ascii") as f:
        writer = csv.writer(f)
        writer.writerow(["part"] + _PART1_COLS)
        for row in audit_rows:
            writer.writerow(["audit"] + [row[c] for c in _PART1_COLS])
        writer.writerow([])
        writer.writerow(["part"] + _PART2_COLS)
        for row in mode_rows:
            writer.writerow(["mitigation"] + [row[c] for c in _PART2_COLS])
    return md_path
