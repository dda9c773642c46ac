"""
Experiment reports and their JSON / CSV / text exports.
"""

import csv
import json
import os
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import psutil

from version import get_version_info


def system_info() -> Dict[str, Any]:
    freq = psutil.cpu_freq()
    return {
        "cpu_count": psutil.cpu_count(),
        "cpu_freq_max": freq.max if freq else 0,
        "memory_total_gb": round(psutil.virtual_memory().total / (1024 ** 3), 2),
        "os": os.name,
        "python": platform.python_version(),
    }


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class ExperimentReport:
    """Per-(cell, seed) records with mean/std summaries per cell."""

    def __init__(self, tag: str, grid: Optional[Dict] = None, metadata: Optional[Dict] = None):
        self.tag = tag
        self.grid = dict(grid or {})
        self.metadata = dict(metadata or {})
        self.flags: Dict[str, Any] = {}
        self.records: List[Dict] = []
        self._cell_order: List[str] = []

    def add(self, cell: str, seed, metrics: Dict[str, Any], params: Optional[Dict] = None,
            extra: Optional[Dict] = None):
        if cell not in self._cell_order:
            self._cell_order.append(cell)
        self.records.append({
            "cell": cell,
            "seed": seed,
            "params": dict(params or {}),
            "metrics": dict(metrics),
            "extra": dict(extra or {}),
        })

    @property
    def cells(self) -> List[str]:
        return list(self._cell_order)

    def cell_records(self, cell: str) -> List[Dict]:
        return [r for r in self.records if r["cell"] == cell]

    def values(self, cell: str, metric: str) -> List[float]:
        out = []
        for r in self.cell_records(cell):
            v = r["metrics"].get(metric)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                out.append(float(v))
        return out

    def mean(self, cell: str, metric: str) -> float:
        vals = self.values(cell, metric)
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> Dict[str, Dict]:
        out = {}
        for cell in self._cell_order:
            recs = self.cell_records(cell)
            metrics = sorted({k for r in recs for k in r["metrics"]})
            entry = {"seeds": len(recs), "params": recs[0]["params"] if recs else {}}
            for m in metrics:
                vals = self.values(cell, m)
                if vals:
                    entry[m] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "count": len(vals)}
            out[cell] = entry
        return out

    def ordered_records(self) -> List[Dict]:
        order = {c: i for i, c in enumerate(self._cell_order)}
        return sorted(self.records, key=lambda r: (order[r["cell"]], str(r["seed"])))

    def to_dict(self) -> Dict:
        return _plain({
            "experiment": self.tag,
            "grid": self.grid,
            "metadata": self.metadata,
            "flags": self.flags,
            "summary": self.summary(),
            "records": self.ordered_records(),
        })


class ReportExporter:
    """Export experiment reports to various formats."""

    @staticmethod
    def export_to_json(report: ExperimentReport, filename, config: Optional[Dict] = None):
        export_data = {
            "timestamp": datetime.now().isoformat(),
            "version": get_version_info()["artifact_version"],
            "system_info": system_info(),
            "config": _plain(config or {}),
            "report": report.to_dict(),
        }
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w") as f:
            json.dump(export_data, f, indent=2, sort_keys=True)

    @staticmethod
    def export_to_csv(report: ExperimentReport, filename):
        """One row per (cell, seed); nested extras are left to the JSON export."""
        records = report.ordered_records()
        params = sorted({k for r in records for k in r["params"]})
        metrics = sorted({k for r in records for k in r["metrics"]})
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["experiment", "cell", "seed"] + params + metrics)
            for r in records:
                row = [report.tag, r["cell"], r["seed"]]
                row += [_plain(r["params"].get(k, "")) for k in params]
                row += ["" if r["metrics"].get(k) is None else _plain(r["metrics"][k]) for k in metrics]
                writer.writerow(row)

    @staticmethod
    def export_to_text(report: ExperimentReport, filename=None) -> str:
        """Mean +- std per cell and metric; written to ``filename`` when given."""
        lines = [f"Experiment: {report.tag}", "=" * 60]
        for cell, entry in report.summary().items():
            lines.append(f"{cell}  (seeds: {entry['seeds']})")
            for key, stats in entry.items():
                if isinstance(stats, dict) and "mean" in stats:
                    lines.append(f"    {key}: {stats['mean']:.4f} +- {stats['std']:.4f}")
        for key, value in report.flags.items():
            lines.append(f"flag {key}: {value}")
        text = "\n".join(lines) + "\n"
        if filename:
            Path(filename).write_text(text)
        return text
