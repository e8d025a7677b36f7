"""Atomic JSON output and deterministic SVG rendering of the analysis reports."""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import DataError  # noqa: E402

SVG_RC = {
    "svg.hashsalt": "rescurve",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: str | Path, doc) -> Path:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise DataError(f"missing report file {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _save_svg(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "rescurve"})
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def plot_ksweep(sweep: dict, path: Path) -> Path:
    """Silhouette and distortion against k, side by side."""
    ks = [r["k"] for r in sweep["rows"]]
    with plt.rc_context(SVG_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
        a1.plot(ks, [r["silhouette"] for r in sweep["rows"]], "o-", color="tab:blue")
        a1.set_xlabel("k")
        a1.set_ylabel("silhouette (DTW)")
        a2.plot(ks, [r["distortion"] for r in sweep["rows"]], "s-", color="tab:red")
        a2.axvline(sweep["elbow_k"], ls="--", color="grey", lw=0.8)
        a2.set_xlabel("k")
        a2.set_ylabel("distortion")
        for ax in (a1, a2):
            ax.axvline(sweep["recommended_k"], ls=":", color="black", lw=0.8)
            ax.set_xticks(ks)
        fig.tight_layout()
        return _save_svg(fig, path)


def plot_cluster_overlay(clusters: list[dict], path: Path, step_hours: float | None = None,
                         key: str = "center") -> Path:
    """All cluster-average curves on one axis; ``key`` picks the DBA center or the pointwise mean."""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        for c in clusters:
            y = c[key]
            ax.plot(range(len(y)), y, marker=".", label=f"cluster {c['cluster']} (n={c['size']})")
        ax.set_xlabel("time step" if not step_hours else f"time step ({step_hours:g} h)")
        ax.set_ylabel("performance (negated outage fraction)")
        ax.set_ylim(-1.02, 0.05)
        ax.legend(loc="lower right", fontsize=7)
        fig.tight_layout()
        return _save_svg(fig, path)


def plot_triptych(report: dict, path: Path) -> Path:
    """Average curve, its gradients and gradient percentage changes for one cluster."""
    tri = report["triptych"]
    v, g = tri["values"], tri["gradients"]
    pc = [float("nan") if x is None else x for x in tri["pct_change"]]
    with plt.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, 3, figsize=(10, 3))
        axes[0].plot(range(len(v)), v, "o-", ms=3)
        axes[0].set_title(f"cluster {report['cluster']}: {report['label']}")
        axes[0].set_ylabel("performance")
        axes[1].bar(range(len(g)), g, color="tab:green")
        axes[1].set_title("gradient")
        axes[2].plot(range(1, len(pc) + 1), pc, "d-", ms=3, color="tab:purple")
        axes[2].set_title("gradient % change")
        for ev in report["evidence"]:
            ls = ":" if ev["kind"] == "fake peak" else "--"
            axes[0].axvline(ev["t"], ls=ls, color="grey", lw=0.8)
        for ax in axes:
            ax.set_xlabel("time step")
        fig.tight_layout()
        return _save_svg(fig, path)
