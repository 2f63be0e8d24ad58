"""CSV import/export of processes, adjoints and plot data; atomic file writes."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .problem import ControlPath, ConvergentFunction, Process, SemiInfiniteGrid
from .report import round_sig


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    v = round_sig(float(v))
    if isinstance(v, str):
        return v
    return repr(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def process_header(n: int, m: int) -> list:
    return ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]


def process_csv(process: Process) -> str:
    """One row per node, then a final row t = inf with the limits."""
    n, m = process.x.dim, process.u.dim
    rows = [[t, *process.x(t), *process.u(t)] for t in process.grid.nodes]
    rows.append([math.inf, *process.x.limit, *process.u.limit])
    return _csv_text(process_header(n, m), rows)


def write_process_csv(process: Process, path) -> Path:
    return atomic_write(path, process_csv(process))


def read_process_csv(path, n: int, m: int, label: str = "", interpolation: str = "exponential") -> Process:
    """Process from the t, x_1..x_n, u_1..u_m schema.

    States are interpolated as in :class:`ConvergentFunction` with the
    given mode; controls are piecewise constant.

    Raises :class:`SchemaError` naming the first offending column.
    """
    text = Path(path).read_text()
    if not text.strip():
        raise SchemaError("empty trajectory file", column="t")
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    want = process_header(n, m)
    for i, col in enumerate(want):
        if i >= len(header) or header[i] != col:
            raise SchemaError(f"expected column {col!r} at position {i + 1}", column=col)
    if len(header) > len(want):
        raise SchemaError(f"unexpected column {header[len(want)]!r}", column=header[len(want)])
    rows = []
    for k, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(want):
            raise SchemaError(f"row {k + 2} has {len(row)} fields, expected {len(want)}", column=want[min(len(row), len(want) - 1)])
        vals = []
        for col, v in zip(want, row):
            try:
                vals.append(float(v))
            except ValueError:
                raise SchemaError(f"non-numeric value {v!r} in row {k + 2}", column=col) from None
        rows.append(vals)
    if len(rows) < 2 or not math.isinf(rows[-1][0]):
        raise SchemaError("the last row must carry the limits at t = inf", column="t")
    data = np.array(rows[:-1])
    limit = np.array(rows[-1])
    try:
        grid = SemiInfiniteGrid(data[:, 0])
    except ValueError as exc:
        raise SchemaError(str(exc), column="t") from None
    x = ConvergentFunction(grid, data[:, 1 : 1 + n], limit[1 : 1 + n], interpolation=interpolation)
    u = ControlPath(grid, data[:, 1 + n :], limit[1 + n :])
    return Process(x, u, label or Path(path).stem)


def adjoint_csv(adj, nodes) -> str:
    header = ["t"] + [f"p_{i + 1}" for i in range(adj.n)]
    rows = [[t, *adj.p(t)] for t in nodes]
    rows.append([math.inf, *adj.p_limit])
    return _csv_text(header, rows)


def jump_table(adj) -> list:
    """Rows (s_n, j, beta_jn) for every finite atom."""
    return [{"s": s, "j": j + 1, "beta": beta} for j, mu in enumerate(adj.measures) for s, beta in mu.atoms]


def plot_csv(process, adj=None, gaps=None) -> str:
    """Columns t, x_*, u_*, p_*, h_gap at the nodes, for external plotting."""
    n, m = process.x.dim, process.u.dim
    header = process_header(n, m)
    if adj is not None:
        header += [f"p_{i + 1}" for i in range(adj.n)]
    header.append("h_gap")
    rows = []
    for k, t in enumerate(process.grid.nodes):
        row = [t, *process.x(t), *process.u(t)]
        if adj is not None:
            row += list(adj.p(t))
        row.append(gaps[k] if gaps is not None else math.nan)
        rows.append(row)
    return _csv_text(header, rows)


def pathology_csv(table: dict) -> str:
    cols = ["T", "tau", "J_T", "J_infinite_of_T_process", "J_limit_process"]
    return _csv_text(cols, [[r[c] for c in cols] for r in table["rows"]])
