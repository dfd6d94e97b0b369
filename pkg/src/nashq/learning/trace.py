"""Columnar per-step trace with a fixed CSV layout."""
from __future__ import annotations

import csv
import io
from array import array

import numpy as np

# column order is part of the output contract
TRACE_COLUMNS = (
    "t", "episode", "s", "a1", "a2", "r1", "r2", "s_next",
    "alpha_1", "alpha_2", "epsilon", "delta_1", "delta_2", "absmax_1", "absmax_2",
)
INT_COLUMNS = {"t", "episode", "s", "a1", "a2", "s_next"}

# one row per training episode for the episodic runner
EPISODE_COLUMNS = ("episode", "t_start", "steps", "return_1", "return_2", "epsilon",
                   "terminal", "capped", "absmax_1", "absmax_2")
EPISODE_INT_COLUMNS = {"episode", "t_start", "steps", "terminal", "capped"}

CHECKPOINT_COLUMNS = ("t", "metric_1", "metric_2")


def format_value(v):
    """Shortest round-tripping text for a number; integers stay integers."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class Trace:
    """Append-only table of per-step diagnostics.

    Columns live in compact ``array`` buffers; :meth:`column` returns numpy
    views.
    """

    def __init__(self, columns=TRACE_COLUMNS, int_columns=INT_COLUMNS):
        self.columns = tuple(columns)
        self.int_columns = frozenset(int_columns)
        self._data = {c: array("q" if c in self.int_columns else "d") for c in self.columns}
        self._append = [self._data[c].append for c in self.columns]

    def append(self, *values):
        for push, v in zip(self._append, values):
            push(v)

    def __len__(self):
        return len(self._data[self.columns[0]])

    def column(self, name):
        buf = self._data[name]
        dtype = np.int64 if name in self.int_columns else float
        return np.frombuffer(buf, dtype=dtype) if len(buf) else np.zeros(0, dtype=dtype)

    def rows(self):
        cols = [self._data[c] for c in self.columns]
        return zip(*cols)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        ints = [c in self.int_columns for c in self.columns]
        for row in self.rows():
            w.writerow([str(v) if is_int else repr(v) for v, is_int in zip(row, ints)])

    def to_csv(self, path=None):
        """Write to ``path``, or return the CSV text when ``path`` is None."""
        if path is None:
            buf = io.StringIO()
            self.write_csv(buf)
            return buf.getvalue()
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)
        return None


def write_rows_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_value(v) for v in row])
