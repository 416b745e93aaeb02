"""Comparison report: one results table plus figures.

Renders the per-ranker metrics as a TSV table (scores scaled to 0..100 the
way IR results tables are usually printed), a JSON copy for machines, a bar
chart, and the training curve when a log exists.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .artifacts import atomic_write_text, write_json
from .evaluation import EvalReport

REPORT_FORMAT = "hybrid-rank/report"
FORMAT_VERSION = 1

# row labels as printed; the fused run reads as its recipe
DISPLAY = {"fused": "tfidf+boe"}

_METRICS = ("mrr", "p_at_1", "p_at_3", "p_at_10")
_COLUMNS = ("MRR", "P@1", "P@3", "P@10")


def _cells(rep: EvalReport) -> list[float]:
    return [rep.mrr, rep.p_at.get(1, 0.0), rep.p_at.get(3, 0.0), rep.p_at.get(10, 0.0)]


def comparison_table(reports: dict[str, EvalReport]) -> str:
    lines = ["#ranker\t" + "\t".join(_COLUMNS)]
    for name, rep in reports.items():
        row = "\t".join(f"{100.0 * v:.2f}" for v in _cells(rep))
        lines.append(f"{DISPLAY.get(name, name)}\t{row}")
    return "\n".join(lines) + "\n"


def _comparison_figure(path: Path, reports: dict[str, EvalReport]) -> None:
    names = [DISPLAY.get(n, n) for n in reports]
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    width = 0.8 / len(_COLUMNS)
    for ci, column in enumerate(_COLUMNS):
        xs = [i + ci * width for i in range(len(names))]
        ys = [100.0 * _cells(rep)[ci] for rep in reports.values()]
        ax.bar(xs, ys, width=width, label=column)
    ax.set_xticks([i + 1.5 * width for i in range(len(names))])
    ax.set_xticklabels(names)
    ax.set_ylabel("score x 100")
    ax.set_ylim(0, 100)
    ax.legend(ncol=len(_COLUMNS), fontsize="small")
    ax.set_title("ranking quality by method")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _training_figure(path: Path, log: list[dict]) -> None:
    epochs = [e["epoch"] for e in log]
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    ax.plot(epochs, [e["mean_loss"] for e in log], color="tab:red", label="mean loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean hinge loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [e["dev_mrr"] for e in log], color="tab:blue", label="dev MRR")
    ax2.set_ylabel("dev MRR")
    ax2.set_ylim(0, 1)
    lines = list(ax.get_lines()) + list(ax2.get_lines())
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right", fontsize="small")
    ax.set_title("training curve")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render(report_dir, reports: dict[str, EvalReport], train_log: list[dict]) -> list[Path]:
    """Write table, JSON, and figures; returns the paths written."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []

    table = report_dir / "comparison.tsv"
    atomic_write_text(table, comparison_table(reports))
    written.append(table)

    anyrep = next(iter(reports.values()))
    payload = {
        "rankers": {
            DISPLAY.get(name, name): dict(zip(_METRICS, _cells(rep)))
            for name, rep in reports.items()
        },
        "n_queries": anyrep.n_queries,
        "pool_size": anyrep.pool_size,
    }
    json_path = report_dir / "report.json"
    write_json(json_path, payload, REPORT_FORMAT, FORMAT_VERSION)
    written.append(json_path)

    fig_path = report_dir / "comparison.png"
    _comparison_figure(fig_path, reports)
    written.append(fig_path)

    if train_log:
        curve = report_dir / "training_curve.png"
        _training_figure(curve, train_log)
        written.append(curve)
    return written
