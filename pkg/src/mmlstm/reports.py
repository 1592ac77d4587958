"""Deterministic text/CSV report emission for the perplexity grid and the
similarity grid.  No timestamps or machine-dependent fields ever appear in a
report, so identical runs produce byte-identical files."""

from __future__ import annotations

import csv
import io

from .simeval import AggregateRow
from .trainer import TrialReport


def stars(p: float | None) -> str:
    if p is None:
        return ""
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _fmt(x: float | None, digits: int = 4) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def perplexity_table(
    reports: dict[int, TrialReport], ablations: list[str], seeds: list[int]
) -> str:
    """Ablation-by-hidden-size grid of mean +/- SE test perplexity with
    direction arrows against the UM baseline."""
    hiddens = sorted(reports)
    out = io.StringIO()
    out.write(
        f"Test perplexity (subword targets; mean +/- SE over seeds {','.join(map(str, seeds))};"
        " arrows mark direction vs UM)\n"
    )
    header = ["Model"] + [f"n={h}" for h in hiddens]
    rows = []
    for ab in ablations:
        row = [ab]
        for h in hiddens:
            cell = reports[h].cells[ab]
            base = reports[h].cells.get("UM")
            arrow = ""
            if ab != "UM" and base is not None:
                arrow = " ↓" if cell.mean < base.mean else " ↑"
            row.append(f"{cell.mean:.4f} +/- {cell.se:.4f}{arrow}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    for r in [header] + rows:
        out.write("  ".join(r[i].ljust(widths[i]) for i in range(len(r))).rstrip() + "\n")
    if any(reports[h].cells[ab].single_seed for h in hiddens for ab in ablations):
        out.write("note: single seed, SE degenerate (reported as 0)\n")
    return out.getvalue()


def perplexity_csv(reports: dict[int, TrialReport], ablations: list[str], seeds: list[int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ablation", "hidden", "mean_ppl", "se", "n_seeds"] + [f"seed_{s}" for s in seeds])
    for ab in ablations:
        for h in sorted(reports):
            cell = reports[h].cells[ab]
            w.writerow(
                [ab, h, f"{cell.mean:.6f}", f"{cell.se:.6f}", len(cell.values)]
                + [f"{v:.6f}" for v in cell.values]
            )
    return buf.getvalue()


def similarity_table(
    rows: list[AggregateRow],
    model_labels: list[str],
    seeds: list[int],
    side: str,
    mode: str,
) -> str:
    out = io.StringIO()
    out.write(
        "Similarity-judgement report"
        f" (vectors: {side} side, {mode} lookup; r averaged per-seed over seeds"
        f" {','.join(map(str, seeds))} +/- SE;\n"
        " p from mean partial-r; BH family = the datasets of this invocation;"
        " *: p<.05, **: p<.01 on adjusted p)\n"
    )
    header = ["dataset", "n_used", "dropped"] + [f"r_{m}" for m in model_labels] + [
        "partial_r", "p_adj", "sig",
    ]
    table = []
    for r in rows:
        if r.skipped:
            table.append([r.name, str(r.n_used), str(r.dropped), "skipped: " + r.note])
            continue
        cells = [r.name, str(r.n_used), str(r.dropped)]
        cells += [f"{m:.4f} +/- {s:.4f}" for m, s in zip(r.r_mean, r.r_se)]
        cells += [
            f"{r.partial_mean:.4f} +/- {r.partial_se:.4f}",
            _fmt(r.p_adjusted, 5),
            stars(r.p_adjusted),
        ]
        table.append(cells)
    widths = [
        max(len(row[i]) for row in [header] + table if i < len(row))
        for i in range(len(header))
    ]
    for row in [header] + table:
        out.write(
            "  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip() + "\n"
        )
    return out.getvalue()


def similarity_csv(rows: list[AggregateRow], model_labels: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["dataset", "n_used", "dropped"]
    for m in model_labels:
        header += [f"r_{m}_mean", f"r_{m}_se"]
    header += ["partial_r_mean", "partial_r_se", "p_raw", "p_adjusted", "significance", "skipped"]
    w.writerow(header)
    for r in rows:
        row = [r.name, r.n_used, r.dropped]
        if r.skipped:
            row += [""] * (2 * len(model_labels) + 4) + ["yes"]
        else:
            for m, s in zip(r.r_mean, r.r_se):
                row += [f"{m:.6f}", f"{s:.6f}"]
            row += [
                f"{r.partial_mean:.6f}", f"{r.partial_se:.6f}",
                _fmt(r.p_raw, 6), _fmt(r.p_adjusted, 6), stars(r.p_adjusted), "no",
            ]
        w.writerow(row)
    return buf.getvalue()


def trainlog_jsonl(log) -> str:
    """Line-delimited epoch records.  Wall time is deliberately omitted so
    reruns are byte-identical; it is printed to the console instead."""
    import json

    lines = []
    for e in log.epochs:
        lines.append(
            json.dumps(
                {
                    "epoch": e.epoch,
                    "train_loss": round(e.train_loss, 10),
                    "val_loss": round(e.val_loss, 10),
                    "lr": e.lr,
                },
                sort_keys=True,
            )
        )
    if log.final_test_ppl is not None:
        lines.append(json.dumps({"final_test_ppl": round(log.final_test_ppl, 10)}))
    return "\n".join(lines) + "\n"
