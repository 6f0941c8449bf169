"""Report tables and their machine/human renderings.

Tables carry raw cell values; rendering applies the one-decimal display
convention. Output is byte-deterministic: ordering is fixed upstream and
the only non-deterministic content, the metadata header line, can be
suppressed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone


@dataclass
class ReportTable:
    title: str
    columns: list
    rows: list = field(default_factory=list)  # list of cell lists

    def add_row(self, cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(
                f"row has {len(cells)} cells, table {self.title!r} has {len(self.columns)} columns"
            )
        self.rows.append(list(cells))


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def _header_line(table: ReportTable, now: datetime | None = None) -> str:
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# sidtrack report: {table.title} (generated {stamp})"


def render_csv(table: ReportTable, header: bool = True) -> str:
    buf = io.StringIO()
    if header:
        buf.write(_header_line(table) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_cell(c) for c in row])
    return buf.getvalue()


def render_markdown(table: ReportTable, header: bool = True) -> str:
    cells = [[str(c) for c in table.columns]]
    cells.extend([format_cell(c) for c in row] for row in table.rows)
    widths = [max(len(row[i]) for row in cells) for i in range(len(table.columns))]

    def line(row):
        return "| " + " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) + " |"

    out = []
    if header:
        out.append(_header_line(table))
        out.append("")
    out.append(line(cells[0]))
    out.append("| " + " | ".join("-" * w for w in widths) + " |")
    out.extend(line(row) for row in cells[1:])
    return "\n".join(out) + "\n"


def parse_csv_report(text: str) -> ReportTable:
    """Read back a rendered CSV report (used by the ``report`` verb to
    re-render machine output as a human table)."""
    lines = text.splitlines()
    title = "report"
    start = 0
    if lines and lines[0].startswith("# "):
        title = lines[0][2:]
        start = 1
    reader = csv.reader(io.StringIO("\n".join(lines[start:])))
    rows = list(reader)
    if not rows:
        raise ValueError("empty report file")
    table = ReportTable(title=title, columns=rows[0])
    for row in rows[1:]:
        table.add_row(row)
    return table
