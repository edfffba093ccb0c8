"""Sweep reporting: delimited output plus rendered figures.

The CSV is the machine-readable artifact; the figures are rendered next to
it (write amplification and estimated throughput against versioning
coverage, one panel per capacity level, line per mode/file-size pair).
"""

import csv
import os
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .workload import CSV_FIELDS, WorkloadRow  # noqa: E402


def write_csv(rows: List[WorkloadRow], path: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([
                r.mode, r.kind, f"{r.capacity_ratio:g}", f"{r.versioning_ratio:g}",
                r.ops_completed, r.host_pages, r.nand_pages,
                f"{r.write_amplification:.6f}", r.gc_invocations,
                r.ov_pages_resident, r.device_full_events,
                f"{r.est_throughput_mbps:.3f}",
            ])
    return path


def read_csv(path: str) -> List[WorkloadRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(WorkloadRow(
                mode=rec["mode"], kind=rec["kind"],
                capacity_ratio=float(rec["capacity_ratio"]),
                versioning_ratio=float(rec["versioning_ratio"]),
                ops_completed=int(rec["ops_completed"]),
                host_pages=int(rec["host_pages"]),
                nand_pages=int(rec["nand_pages"]),
                write_amplification=float(rec["write_amplification"]),
                gc_invocations=int(rec["gc_invocations"]),
                ov_pages_resident=int(rec["ov_pages_resident"]),
                device_full_events=int(rec["device_full_events"]),
                est_throughput_mbps=float(rec["est_throughput_mbps"]),
            ))
    return rows


def _series(rows: List[WorkloadRow]):
    """(capacity, kind, mode) -> [(ratio, row)] sorted by ratio."""
    out = {}
    for r in rows:
        out.setdefault((r.capacity_ratio, r.kind, r.mode), []).append(r)
    for key in out:
        out[key].sort(key=lambda r: r.versioning_ratio)
    return out

_STYLE = {"selective": "-o", "uniform": "--s"}


def _plot_metric(rows, metric, ylabel, out_path):
    series = _series(rows)
    capacities = sorted({cap for cap, _, _ in series})
    fig, axes = plt.subplots(1, len(capacities),
                             figsize=(5.2 * len(capacities), 4.2),
                             squeeze=False, sharey=True)
    for ax, cap in zip(axes[0], capacities):
        for (c, kind, mode), srows in sorted(series.items()):
            if c != cap:
                continue
            xs = [r.versioning_ratio for r in srows]
            ys = [getattr(r, metric) for r in srows]
            ax.plot(xs, ys, _STYLE.get(mode, "-"), label=f"{mode}/{kind}")
        ax.set_title(f"capacity {cap:g}")
        ax.set_xlabel("versioning ratio")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel(ylabel)
    axes[0][-1].legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def render_figures(rows: List[WorkloadRow], out_dir: str, prefix: str = "sweep"):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    paths.append(_plot_metric(rows, "write_amplification", "write amplification",
                              os.path.join(out_dir, f"{prefix}_waf.png")))
    paths.append(_plot_metric(rows, "est_throughput_mbps", "est. throughput (MB/s)",
                              os.path.join(out_dir, f"{prefix}_throughput.png")))
    return paths
