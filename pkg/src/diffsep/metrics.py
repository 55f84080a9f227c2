"""Append-only CSV metrics stream written during training.

Column order is fixed: ``step,l_r,l_o,l_arc,l_td,td_mse,total``. The l_*
columns carry the weighted terms; td_mse is the raw (unweighted) overlap
disagreement, tracked even when its weight is zero. Floats are written with
repr so equal runs produce byte-identical files. A crashed run may leave a
truncated final line; the loader tolerates and drops it.
"""

from __future__ import annotations

import os

import numpy as np

from .losses import LossReport

__all__ = ["METRICS_COLUMNS", "MetricsWriter", "load_metrics"]

METRICS_COLUMNS = ("step", "l_r", "l_o", "l_arc", "l_td", "td_mse", "total")
_HEADER = ",".join(METRICS_COLUMNS)


class MetricsWriter:
    """Appends one row per report; flushes every ``flush_interval`` rows."""

    def __init__(self, path: str, flush_interval: int = 1):
        if flush_interval < 1:
            raise ValueError("flush_interval must be ≥ 1")
        self.path = path
        self.flush_interval = flush_interval
        self._pending = 0
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._f = open(path, "a")
        if fresh:
            self._f.write(_HEADER + "\n")
            self._f.flush()

    def append(self, step: int, report: LossReport) -> None:
        row = (int(step), report.l_r, report.l_o, report.l_arc, report.l_td,
               report.raw_td, report.total)
        self._f.write(",".join(repr(v) for v in row) + "\n")
        self._pending += 1
        if self._pending >= self.flush_interval:
            self._f.flush()
            self._pending = 0

    def close(self) -> None:
        if not self._f.closed:
            self._f.flush()
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_metrics(path: str) -> dict[str, np.ndarray]:
    """Read a metrics CSV into column arrays, dropping a truncated last line."""
    with open(path) as f:
        lines = f.read().split("\n")
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"{path}: missing metrics header")
    rows = []
    body = [ln for ln in lines[1:] if ln]
    for i, line in enumerate(body):
        parts = line.split(",")
        try:
            if len(parts) != len(METRICS_COLUMNS):
                raise ValueError
            rows.append([float(p) for p in parts])
        except ValueError:
            if i == len(body) - 1:
                break  # torn final line from an interrupted run
            raise ValueError(f"{path}: corrupt metrics row {i + 2}: {line!r}")
    cols = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(METRICS_COLUMNS))
    return {name: cols[:, j] for j, name in enumerate(METRICS_COLUMNS)}
