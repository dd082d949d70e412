"""Per-iteration trace records and their CSV form.

Row ``k`` describes the iterate ``w^k`` and the step ``w^{k-1} -> w^k`` that
produced it (row 0 carries the initial point with zero step fields):
``du_norm = ||u^{k-1} - u^k||``, ``delta_k``/``eps_k``/``q_norm``/``h`` are
the step quantities evaluated at ``w^{k-1}``, and ``xi_norm`` is the norm of
the computed subgradient witness at ``w^k``.
"""

from dataclasses import dataclass, fields, astuple
import csv
import io

import numpy as np

__all__ = ["TRACE_COLUMNS", "Trace", "TraceRecord", "TraceFormatError"]


@dataclass
class TraceRecord:
    k: int
    L_gamma: float
    Lambda: float
    feas_residual: float
    delta_k: float = 0.0
    eps_k: float = 0.0
    q_norm: float = 0.0
    du_norm: float = 0.0
    dv_norm: float = 0.0
    dp_norm: float = 0.0
    h: float = 0.0
    cert_bound: float = 0.0
    xi_norm: float = 0.0
    wall_ms: float = 0.0
    tau_k: float = 0.0
    dual_res: float = 0.0
    p_norm: float = 0.0
    c3: float = 0.0

    @property
    def dw_norm(self):
        return float(np.sqrt(self.du_norm ** 2 + self.dv_norm ** 2 + self.dp_norm ** 2))


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRecord))


class TraceFormatError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class Trace:
    """Ordered collection of ``TraceRecord`` rows with column access."""

    def __init__(self, records=None):
        self.records = list(records or [])

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, key):
        if isinstance(key, str):
            if key not in TRACE_COLUMNS:
                raise KeyError(key)
            dtype = int if key == "k" else float
            return np.array([getattr(r, key) for r in self.records], dtype=dtype)
        return self.records[key]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([_fmt(x) for x in astuple(r)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def read_csv(cls, path):
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise TraceFormatError(f"cannot read trace: {exc}") from exc
        if not rows:
            raise TraceFormatError("empty trace file (missing header)")
        header = tuple(rows[0])
        if header != TRACE_COLUMNS:
            raise TraceFormatError(f"unexpected header {header}")
        records = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise TraceFormatError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields")
            try:
                vals = [int(row[0])] + [float(x) for x in row[1:]]
            except ValueError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from exc
            records.append(TraceRecord(*vals))
        return cls(records)
