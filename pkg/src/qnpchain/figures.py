"""Optional diagnostic plots (requires the ``plot`` extra, i.e. matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _ellipse(mu, S, n_std=2.0, n=200):
    w, V = np.linalg.eigh(S[:2, :2])
    t = np.linspace(0, 2 * np.pi, n)
    circ = np.stack([np.cos(t), np.sin(t)])
    return (V @ (np.sqrt(np.maximum(w, 0))[:, None] * n_std * circ)).T + mu[:2]


def plot_features(out: Path, features: dict, labels) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for l in labels:
        X = features[l]
        ax.scatter(X[:, 0], X[:, 1], s=4, alpha=0.5, label=f"label {l}")
    ax.set_xlabel("I1")
    ax.set_ylabel("Q1")
    ax.legend()
    path = out / "features.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_summary(out: Path, summaries: dict, labels) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for l in labels:
        s = summaries[l]
        e = _ellipse(s.mu, s.Sigma)
        ax.plot(e[:, 0], e[:, 1], label=f"label {l}")
        ax.plot(*s.mu[:2], "+")
    ax.set_xlabel("I1")
    ax.set_ylabel("Q1")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    path = out / "nvk_summary.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_sweep(out: Path, rows: list) -> Path:
    ok = [r for r in rows if r.get("status", "ok") == "ok"]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    if ok:
        keys = [k for k in ok[0] if k not in ("status",)]
        x = np.arange(len(ok))
        for name, ax in zip(("norm_dmu", "sigma2_dmu"), axes):
            if name in keys:
                ax.plot(x, [r[name] for r in ok], "o-")
            ax.set_ylabel(name)
            ax.set_xlabel("sweep point")
        if "sigma2_min" in keys:
            axes[1].plot(x, [r["sigma2_min"] for r in ok], "s--", label="sigma2_min")
            axes[1].axhline(0.5, color="k", lw=0.5)
            axes[1].legend()
    path = out / "sweep.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot(kind: str, out: Path, **data) -> Path:
    fn = {"features": plot_features, "summary": plot_summary, "sweep": plot_sweep}[kind]
    return fn(Path(out), **data)
