"""Static figures for evaluation reports (file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import ApeReport  # noqa: E402

# fixed metadata keeps PNG bytes reproducible across runs
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_trajectory(report: ApeReport, path, init_time: float | None = None) -> Path:
    est, ref = report.aligned, report.reference
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(ref.p[:, 0], ref.p[:, 1], color="0.3", lw=1.5, label="ground truth")
    ax.plot(est.p[:, 0], est.p[:, 1], color="tab:blue", lw=1.0, label="estimate (aligned)")
    if init_time is not None and len(est):
        k = int(np.clip(np.searchsorted(est.t, init_time), 0, len(est) - 1))
        ax.plot(*est.p[k, :2], "o", color="tab:red", label="initialization")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    ax.set_title(f"mean APE {report.mean:.3f} m")
    return _save(fig, Path(path))


def plot_ape(report: ApeReport, path, init_time: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(report.times, report.residuals, color="tab:blue", lw=0.8)
    ax.axhline(report.mean, color="0.4", ls="--", lw=1, label=f"mean {report.mean:.3f} m")
    if init_time is not None:
        ax.axvline(init_time, color="tab:red", lw=1.2, label="initialization")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("APE [m]")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return _save(fig, Path(path))
