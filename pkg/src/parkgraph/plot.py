"""Static SVG of a training history."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_history_svg(history, path) -> None:
    """Line plot of train/validation MAE per epoch.  Output bytes are reproducible."""
    epochs = [r.epoch for r in history]
    with matplotlib.rc_context({"svg.hashsalt": "parkgraph", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(epochs, [r.train_mae for r in history], marker="o", ms=3, label="train")
        ax.plot(epochs, [r.val_mae for r in history], marker="s", ms=3, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MAE (normalised)")
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
