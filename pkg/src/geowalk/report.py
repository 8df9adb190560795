"""Dataset statistics: delimited summaries, figures, and point-cloud dumps.

The report path reads a generated dataset back through the manifest, computes
per-category counts, per-step stuck fractions, and feature-norm distribution
summaries, then renders them as CSV plus matplotlib figures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .shards import MANIFEST_NAME, Manifest, read_manifest, read_shard_file
from .walk import NEVER_STUCK, SampleRecord, decode_stuck_steps

#: Cap on feature norms kept in memory for histograms.
_NORM_SAMPLE_CAP = 200_000


@dataclass
class DatasetStats:
    n_shards: int = 0
    n_points_total: int = 0
    tau: int = 0
    per_category: dict = field(default_factory=dict)
    stuck_fraction: np.ndarray | None = None  # (tau+1,)
    feature_norm_summary: list[dict] = field(default_factory=list)  # one per step
    norm_samples: np.ndarray | None = None  # (K, tau+1) subsampled norms

    def to_dict(self) -> dict:
        return {
            "n_shards": self.n_shards,
            "n_points_total": self.n_points_total,
            "tau": self.tau,
            "per_category": dict(self.per_category),
            "stuck_fraction": [float(v) for v in self.stuck_fraction]
            if self.stuck_fraction is not None
            else None,
            "feature_norm_summary": self.feature_norm_summary,
        }


def _summarize(norms: np.ndarray) -> dict:
    qs = np.percentile(norms, [25, 50, 75])
    return {
        "count": int(norms.size),
        "mean": float(norms.mean()),
        "std": float(norms.std()),
        "min": float(norms.min()),
        "p25": float(qs[0]),
        "p50": float(qs[1]),
        "p75": float(qs[2]),
        "max": float(norms.max()),
    }


def collect_stats(root: str | Path, manifest: Manifest | None = None) -> DatasetStats:
    """Aggregate statistics over every shard listed in the dataset manifest."""
    root = Path(root)
    if manifest is None:
        manifest = read_manifest(root / MANIFEST_NAME)
    stats = DatasetStats(per_category=dict(manifest.category_counts))
    stuck_acc: np.ndarray | None = None
    norm_chunks: list[np.ndarray] = []
    kept = 0
    for info in manifest.shards:
        record = read_shard_file(root / info.path)
        stats.n_shards += 1
        stats.n_points_total += record.n_points
        stats.tau = record.tau
        stuck = decode_stuck_steps(record.stuck_steps)
        steps = np.arange(record.tau + 1)
        settled = stuck != NEVER_STUCK
        per_step = ((stuck[None, :] <= steps[:, None]) & settled[None, :]).sum(axis=1)
        if stuck_acc is None:
            stuck_acc = per_step.astype(np.float64)
        else:
            stuck_acc += per_step
        if kept < _NORM_SAMPLE_CAP:
            norms = np.linalg.norm(
                record.feature_trajectory.features.astype(np.float64), axis=2
            )
            take = min(len(norms), _NORM_SAMPLE_CAP - kept)
            norm_chunks.append(norms[:take])
            kept += take
    if stuck_acc is not None and stats.n_points_total:
        stats.stuck_fraction = stuck_acc / stats.n_points_total
    if norm_chunks:
        samples = np.concatenate(norm_chunks)
        if samples.size:
            stats.norm_samples = samples
            stats.feature_norm_summary = [
                {"step": t, **_summarize(samples[:, t])}
                for t in range(samples.shape[1])
            ]
    return stats


def write_stats_csv(stats: DatasetStats, path: str | Path) -> None:
    """Delimited per-step table: stuck fractions and feature-norm summaries."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "stuck_fraction", "norm_count", "norm_mean", "norm_std",
             "norm_min", "norm_p25", "norm_p50", "norm_p75", "norm_max"]
        )
        for t in range(stats.tau + 1):
            stuck = stats.stuck_fraction[t] if stats.stuck_fraction is not None else ""
            row = [t, stuck]
            if t < len(stats.feature_norm_summary):
                s = stats.feature_norm_summary[t]
                row += [s["count"], s["mean"], s["std"], s["min"],
                        s["p25"], s["p50"], s["p75"], s["max"]]
            writer.writerow(row)


def render_figures(stats: DatasetStats, out_dir: str | Path) -> list[Path]:
    """Render the stats as PNG figures next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if stats.stuck_fraction is not None:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        steps = np.arange(stats.tau + 1)
        ax.bar(steps, stats.stuck_fraction, color="#3566a5")
        ax.set_xlabel("step")
        ax.set_ylabel("stuck fraction")
        ax.set_ylim(0, 1)
        ax.set_xticks(steps)
        fig.tight_layout()
        path = out_dir / "stuck_fraction.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if stats.norm_samples is not None:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for t in range(stats.norm_samples.shape[1]):
            ax.hist(
                stats.norm_samples[:, t], bins=60, histtype="step",
                label=f"step {t}",
            )
        ax.set_xlabel("feature norm")
        ax.set_ylabel("points")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out_dir / "feature_norms.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if stats.per_category:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        names = sorted(stats.per_category)
        ax.bar(names, [stats.per_category[n] for n in names], color="#4f9d69")
        ax.set_ylabel("samples")
        fig.tight_layout()
        path = out_dir / "category_counts.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def dump_point_cloud_obj(records: list[SampleRecord], path: str | Path) -> int:
    """Write positions as OBJ point records, grouped by stuck state."""
    free_lines: list[str] = []
    stuck_lines: list[str] = []
    for record in records:
        stuck = decode_stuck_steps(record.stuck_steps) != NEVER_STUCK
        for (x, y, z), s in zip(record.positions_0.tolist(), stuck.tolist()):
            (stuck_lines if s else free_lines).append(f"v {x!r} {y!r} {z!r}\n")
    with open(path, "w") as fh:
        fh.write("o free\n")
        fh.writelines(free_lines)
        fh.write("o stuck\n")
        fh.writelines(stuck_lines)
    return len(free_lines) + len(stuck_lines)
