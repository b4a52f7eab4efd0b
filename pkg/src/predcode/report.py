"""Report emission: metrics JSON, delimited confusion matrix, and figures.

The confusion matrix is written three ways: a CSV (header = class names),
a dependency-free P6 PPM heatmap whose bytes are a pure function of the
metrics, and a matplotlib PNG for human eyes. Training runs additionally
get a loss/accuracy curve figure rendered from the log rows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import Metrics

PPM_TARGET_SIZE = 256


def render_confusion_ppm(confusion: list[list[float]], path: str | Path) -> None:
    """Grayscale P6 heatmap, one cell per entry, intensity = round(255 * value)."""
    matrix = np.asarray(confusion, dtype=np.float64)
    n = matrix.shape[0]
    cell = max(1, PPM_TARGET_SIZE // n)
    intensities = np.rint(255.0 * matrix).astype(np.uint8)
    image = np.repeat(np.repeat(intensities, cell, axis=0), cell, axis=1)
    rgb = np.repeat(image[:, :, None], 3, axis=2)
    side = n * cell
    with open(path, "wb") as fh:
        fh.write(f"P6\n{side} {side}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_confusion_csv(metrics: Metrics, path: str | Path) -> None:
    lines = [",".join(metrics.classes)]
    for row in metrics.confusion:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def plot_confusion(metrics: Metrics, path: str | Path) -> None:
    matrix = np.asarray(metrics.confusion)
    n = matrix.shape[0]
    fig, ax = plt.subplots(figsize=(max(4, n * 0.5), max(3.5, n * 0.5)))
    im = ax.imshow(matrix, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("prediction")
    ax.set_ylabel("true label")
    ax.set_xticks(range(n), metrics.classes, rotation=90 if n > 8 else 0)
    ax.set_yticks(range(n), metrics.classes)
    if n <= 12:
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center",
                        color="white" if matrix[i, j] < 0.5 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title(f"top-1 {metrics.top1:.3f}, top-5 {metrics.top5:.3f}, n={metrics.samples}")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_training_curves(rows: list[dict], path: str | Path) -> None:
    """Loss curves and validation accuracy/lr from training-log rows."""
    if not rows:
        return
    epochs = [r["epoch"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [r["train_loss"] for r in rows], label="train loss")
    ax1.plot(epochs, [r["val_loss"] for r in rows], label="val loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(epochs, [r["val_acc"] for r in rows], color="tab:green", label="val top-1")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val top-1")
    ax2.set_ylim(0.0, 1.0)
    ax2b = ax2.twinx()
    ax2b.plot(epochs, [r["lr"] for r in rows], color="tab:gray", alpha=0.6, label="lr")
    ax2b.set_yscale("log")
    ax2b.set_ylabel("learning rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def emit_report(metrics: Metrics, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics.json, confusion.csv, confusion.ppm, confusion.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out_dir / "metrics.json",
        "csv": out_dir / "confusion.csv",
        "ppm": out_dir / "confusion.ppm",
        "png": out_dir / "confusion.png",
    }
    paths["metrics"].write_text(metrics.to_json())
    write_confusion_csv(metrics, paths["csv"])
    render_confusion_ppm(metrics.confusion, paths["ppm"])
    plot_confusion(metrics, paths["png"])
    return paths
