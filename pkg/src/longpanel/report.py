"""Plot-ready tables rendered from a persisted run directory.

Each table mirrors one result layout: the regime-by-model baseline
comparison (``table2.csv``), the scope-by-regime metric grid
(``fig2b.csv``), the representation-size sweep (``fig3.csv``), the
history sweep (``fig4.csv``), the cross-model history sweep at a single
representation size (``fig5.csv``), and a markdown summary carrying the
same numbers.  Emission reads only the persisted CSVs, so a run can be
re-rendered at any time without re-fitting anything.
"""

import csv
import os

from .errors import ParameterError

_SWEEP_MODELS = ("ar", "boe", "transformer")


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _hidden_sort_key(label):
    return (label == "none", int(label) if label != "none" else 0)


def emit_report(out_dir, fmt="both"):
    """Write figure tables (csv, markdown, or both) next to the results."""
    if fmt not in ("csv", "markdown", "both"):
        raise ParameterError(f"unknown report format {fmt!r}")
    results_path = os.path.join(out_dir, "results.csv")
    cells_path = os.path.join(out_dir, "cells.csv")
    if not os.path.exists(results_path) or not os.path.exists(cells_path):
        raise ParameterError(f"no persisted run found in {out_dir}")
    results = _read_csv(results_path)
    cells = _read_csv(cells_path)
    written = []

    if fmt in ("csv", "both"):
        written += _emit_csv_tables(out_dir, results, cells)
    if fmt in ("markdown", "both"):
        written.append(_emit_markdown(out_dir, cells))
    return written


def _emit_csv_tables(out_dir, results, cells):
    ok_cells = [c for c in cells if c["status"] == "ok"]

    # regime x model against the train-mean baseline
    table2_rows = [
        [c["regime"], c["model"], c["hidden"], c["history"],
         c["model_mae"], c["baseline_mae"], c["t_stat"], c["p_value"]]
        for c in ok_cells
    ]
    table2 = os.path.join(out_dir, "table2.csv")
    _write_csv(
        table2,
        ["regime", "model", "hidden", "history", "model_mae",
         "baseline_mae", "t_stat", "p_value"],
        table2_rows,
    )

    # full scope x regime x metric grid
    fig2b = os.path.join(out_dir, "fig2b.csv")
    _write_csv(
        fig2b,
        ["regime", "model", "hidden", "history", "scope", "metric",
         "value", "se", "n_units", "excluded"],
        [
            [r["regime"], r["model"], r["hidden"], r["history"], r["scope"],
             r["metric"], r["value"], r["se"], r["n_units"], r["excluded"]]
            for r in results
        ],
    )

    mae_rows = [r for r in results if r["metric"] == "mae"]

    # representation-size sweep: sort by hidden within (regime, model, h, scope)
    fig3_rows = sorted(
        mae_rows,
        key=lambda r: (r["regime"], r["model"], int(r["history"]), r["scope"],
                       _hidden_sort_key(r["hidden"])),
    )
    fig3 = os.path.join(out_dir, "fig3.csv")
    _write_csv(
        fig3,
        ["regime", "model", "history", "hidden", "scope", "mae", "se"],
        [
            [r["regime"], r["model"], r["history"], r["hidden"], r["scope"],
             r["value"], r["se"]]
            for r in fig3_rows
        ],
    )

    # history sweep: sort by h within (regime, model, hidden, scope)
    fig4_rows = sorted(
        mae_rows,
        key=lambda r: (r["regime"], r["model"], _hidden_sort_key(r["hidden"]),
                       r["scope"], int(r["history"])),
    )
    fig4 = os.path.join(out_dir, "fig4.csv")
    _write_csv(
        fig4,
        ["regime", "model", "hidden", "history", "scope", "mae", "se"],
        [
            [r["regime"], r["model"], r["hidden"], r["history"], r["scope"],
             r["value"], r["se"]]
            for r in fig4_rows
        ],
    )

    # cross-model history sweep at the first configured representation size
    hidden_labels = []
    for r in mae_rows:
        if r["hidden"] not in hidden_labels:
            hidden_labels.append(r["hidden"])
    fig5_rows = []
    if hidden_labels:
        pick = hidden_labels[0]
        fig5_rows = [
            [r["regime"], r["model"], r["history"], r["scope"],
             r["value"], r["se"]]
            for r in fig4_rows
            if r["hidden"] == pick and r["model"] in _SWEEP_MODELS
        ]
    fig5 = os.path.join(out_dir, "fig5.csv")
    _write_csv(
        fig5,
        ["regime", "model", "history", "scope", "mae", "se"],
        fig5_rows,
    )
    return [table2, fig2b, fig3, fig4, fig5]


def _emit_markdown(out_dir, cells):
    """Markdown rendering of the baseline-comparison table, numbers
    identical to table2.csv (same repr-formatted strings)."""
    lines = [
        "# Run summary",
        "",
        "Model vs. train-mean baseline, flattened test MAE "
        "(one-sided paired t-test, alternative: model error < baseline error).",
        "",
        "| regime | model | hidden | h | model MAE | baseline MAE | t | p |",
        "| --- | --- | --- | --- | --- | --- | --- | --- |",
    ]
    for c in cells:
        if c["status"] != "ok":
            continue
        lines.append(
            "| {regime} | {model} | {hidden} | {history} | {model_mae} "
            "| {baseline_mae} | {t_stat} | {p_value} |".format(**c)
        )
    failed = [c for c in cells if c["status"] != "ok"]
    if failed:
        lines += ["", "## Failed cells", ""]
        for c in failed:
            lines.append(
                f"- {c['regime']}/{c['model']}/hidden={c['hidden']}/"
                f"h={c['history']}: {c['error']}"
            )
    path = os.path.join(out_dir, "summary.md")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
