"""Uniform time series with named columns and exact-round-trip CSV output."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class TimeSeries:
    """Columns sampled on a strictly increasing time grid.

    Standard errors live in ordinary columns (by convention ``<name>_se``).
    """

    def __init__(self, t, columns: dict | None = None):
        self.t = np.asarray(t, dtype=float)
        if self.t.ndim != 1:
            raise ValueError("time grid must be one-dimensional")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        self.columns: dict[str, np.ndarray] = {}
        for name, values in (columns or {}).items():
            self[name] = values

    def __setitem__(self, name: str, values):
        values = np.asarray(values)
        if values.shape != self.t.shape:
            raise ValueError(f"column {name!r} has shape {values.shape}, expected {self.t.shape}")
        self.columns[name] = values

    def __getitem__(self, name: str) -> np.ndarray:
        return self.t if name == "t" else self.columns[name]

    def __contains__(self, name):
        return name == "t" or name in self.columns

    def __len__(self):
        return len(self.t)

    @property
    def names(self) -> list[str]:
        return ["t", *self.columns]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        cols = [self.t, *self.columns.values()]
        for i in range(len(self.t)):
            w.writerow([fmt(c[i]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path) -> TimeSeries:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[0] != "t":
            raise ValueError("first CSV column must be t")
        return cls(body[:, 0], {h: body[:, i] for i, h in enumerate(header) if i})
