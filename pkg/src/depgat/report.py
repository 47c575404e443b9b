"""Graph exports and training reports: exact CSV, SVG heatmaps, matplotlib figures.

The CSV side of an export carries exact values (shortest round-trip float
representation); the SVG heatmap clamps to [0, 1] and colors cells on a fixed
blue -> yellow -> red scale. Training figures (loss components, validation
curve, edge-probability convergence) are rendered with matplotlib next to the
delimited history files.
"""

from __future__ import annotations

import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricError

CELL = 32          # heatmap cell size in px
LABEL_PAD = 110    # room for axis labels


def heat_color(value: float) -> str:
    """Fixed blue -> yellow -> red scale over [0, 1], clamped outside."""
    v = min(max(float(value), 0.0), 1.0)
    if v <= 0.5:
        t = v / 0.5
        r, g, b = int(round(255 * t)), int(round(255 * t)), int(round(255 * (1 - t)))
    else:
        t = (v - 0.5) / 0.5
        r, g, b = 255, int(round(255 * (1 - t))), 0
    return f"#{r:02x}{g:02x}{b:02x}"


def write_matrix_csv(matrix: np.ndarray, names: list[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["name"] + list(names))
        for name, row in zip(names, matrix):
            writer.writerow([name] + [repr(float(v)) for v in row])


def read_matrix_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return matrix, names


def write_heatmap_svg(matrix: np.ndarray, names: list[str], path) -> None:
    k = matrix.shape[0]
    size = LABEL_PAD + k * CELL
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'font-family="sans-serif" font-size="11">']
    for j, name in enumerate(names):
        x = LABEL_PAD + j * CELL + CELL // 2
        parts.append(f'<text x="{x}" y="{LABEL_PAD - 8}" text-anchor="end" '
                     f'transform="rotate(-60 {x} {LABEL_PAD - 8})">{name}</text>')
        y = LABEL_PAD + j * CELL + CELL // 2 + 4
        parts.append(f'<text x="{LABEL_PAD - 8}" y="{y}" text-anchor="end">{name}</text>')
    for i in range(k):
        for j in range(k):
            x, y = LABEL_PAD + j * CELL, LABEL_PAD + i * CELL
            color = heat_color(matrix[i, j])
            parts.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                         f'fill="{color}" stroke="white" stroke-width="1">'
                         f'<title>{names[i]} / {names[j]}: {matrix[i, j]:.4f}</title></rect>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")


def export_heatmap(edge_scores: np.ndarray, names: list[str], base_path) -> tuple[str, str]:
    """Write ``<base>.csv`` (exact values) and ``<base>.svg`` (clamped colors)."""
    edge_scores = np.asarray(edge_scores, dtype=np.float64)
    if edge_scores.ndim != 2 or edge_scores.shape[0] != edge_scores.shape[1]:
        raise MetricError(f"heatmap needs a square matrix, got {edge_scores.shape}")
    if len(names) != edge_scores.shape[0]:
        raise MetricError(f"{len(names)} names for a {edge_scores.shape[0]}-row matrix")
    csv_path, svg_path = f"{base_path}.csv", f"{base_path}.svg"
    write_matrix_csv(edge_scores, names, csv_path)
    write_heatmap_svg(edge_scores, names, svg_path)
    return csv_path, svg_path


# ----------------------------------------------------------------- histories


def write_history_csv(history: dict[str, list[float]], path) -> None:
    keys = list(history)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step"] + keys)
        for step in range(len(history[keys[0]])):
            writer.writerow([step] + [repr(history[k][step]) for k in keys])


def write_valid_history_csv(values: list[float], metric_name: str, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", metric_name])
        for epoch, value in enumerate(values, start=1):
            writer.writerow([epoch, repr(value)])


def training_figures(history: dict[str, list[float]], valid_history: list[float],
                     metric_name: str, edge_prob_history: list[list[np.ndarray]],
                     out_dir, true_graphs: list[np.ndarray] | None = None) -> list[str]:
    """Render loss, validation, and edge-convergence figures; returns file paths."""
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in history.items():
        if name == "total" or any(v != 0 for v in values):
            ax.plot(values, label=name, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    path = str(out_dir / "loss_components.png")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    if valid_history:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(range(1, len(valid_history) + 1), valid_history, marker="o", markersize=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric_name)
        path = str(out_dir / "validation.png")
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    if edge_prob_history:
        n_graphs = len(edge_prob_history[0])
        for g in range(n_graphs):
            probs = np.array([snap[g] for snap in edge_prob_history])
            k = probs.shape[1]
            truth = None
            if true_graphs is not None and g < len(true_graphs):
                truth = np.asarray(true_graphs[g])
            fig, ax = plt.subplots(figsize=(7, 4))
            for i in range(k):
                for j in range(k):
                    if i == j:
                        continue
                    if truth is None:
                        color, alpha = "gray", 0.6
                    elif truth[i, j]:
                        color, alpha = "tab:red", 0.9
                    else:
                        color, alpha = "tab:blue", 0.5
                    ax.plot(range(1, probs.shape[0] + 1), probs[:, i, j],
                            color=color, alpha=alpha, linewidth=0.8)
            ax.set_xlabel("epoch")
            ax.set_ylabel("edge probability")
            ax.set_ylim(-0.02, 1.02)
            if truth is not None:
                ax.set_title("red: true edges, blue: non-edges")
            path = str(out_dir / f"edge_convergence_graph{g}.png")
            fig.tight_layout()
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    return written
