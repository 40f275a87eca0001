"""Plain-text and CSV rendering shared by the harness commands."""

from __future__ import annotations

import csv
import io
from typing import Sequence


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    for row in rows:
        w.writerow([fmt_value(v) for v in row])
    return buf.getvalue()


def render_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in headers]] + [[fmt_value(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render(headers: Sequence[str], rows: Sequence[Sequence], fmt: str = "table") -> str:
    if fmt == "csv":
        return render_csv(headers, rows)
    return render_table(headers, rows)
