"""Deterministic CSV + text reports and the exit-code rule."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def fmt(x) -> str:
    """Stable text for a cell: ``repr`` for floats, ``str`` otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(float(x))   # numpy scalars repr as np.float64(...)
    if hasattr(x, "item") and not isinstance(x, str):
        return fmt(x.item())
    return str(x)


@dataclass
class Table:
    header: Sequence[str]
    rows: list[Sequence] = field(default_factory=list)


@dataclass
class HarnessResult:
    """What one harness run produced: a status, tables and summary lines."""

    name: str
    status: str
    tables: dict[str, Table] = field(default_factory=dict)
    summary: list[str] = field(default_factory=list)
    contradiction: bool = False

    def table(self, name: str, header: Sequence[str]) -> Table:
        t = self.tables[name] = Table(list(header))
        return t


def overall_status(results: Sequence[HarnessResult]) -> str:
    if any(r.status == FAIL or r.contradiction for r in results):
        return FAIL
    if any(r.status == INCONCLUSIVE for r in results):
        return INCONCLUSIVE
    return PASS


def exit_code(results: Sequence[HarnessResult]) -> int:
    return {PASS: EXIT_OK, FAIL: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}[overall_status(results)]


def write_csv(path: Path, table: Table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([fmt(x) for x in row])


def emit_report(results: Sequence[HarnessResult], out: str | Path) -> list[Path]:
    """Write every table as ``<name>.csv`` and one ``summary.txt``.

    Files are written in sorted order with fixed formatting, so identical
    inputs give identical bytes.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e.strerror}") from None
    written = []
    for r in results:
        for name in sorted(r.tables):
            p = out / f"{name}.csv"
            write_csv(p, r.tables[name])
            written.append(p)
    lines = [f"status: {overall_status(results)}", f"harnesses: {len(results)}"]
    for r in results:
        flag = " CONTRADICTION" if r.contradiction else ""
        lines.append("")
        lines.append(f"[{r.name}] {r.status}{flag}")
        lines.extend(f"  {s}" for s in r.summary)
    p = out / "summary.txt"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)
    return written
