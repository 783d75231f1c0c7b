"""CSV reports and their console echo.

Every report starts with ``#`` comment lines carrying the config hash and the
seed, then a header row, then one row per record. Numbers are written with 17
significant digits through :func:`common.utils.formatted_value`, so a rerun with
the same config gives the same bytes. Columns holding wall-clock measurements
are listed in a ``# nondeterministic_columns=`` line.
"""

from collections.abc import Iterable, Sequence
from pathlib import Path
import csv
import io
import logging

from common.utils import formatted_value
from interface.config import ExperimentConfig

logger = logging.getLogger(__name__)

Row = Sequence[object]


def _preamble(config: ExperimentConfig, nondeterministic: Sequence[str]) -> list[str]:
    lines = [
        f"# config_hash={config.config_hash}",
        f"# seed={config.seed}",
        f"# model={config.model.kind}",
    ]
    if nondeterministic:
        lines.append(f"# nondeterministic_columns={','.join(nondeterministic)}")
    return lines


def render_csv(
    columns: Sequence[str],
    rows: Iterable[Row],
    config: ExperimentConfig,
    nondeterministic: Sequence[str] = (),
) -> str:
    """Report text: preamble comments, header row, data rows."""
    unknown = [name for name in nondeterministic if name not in columns]
    if unknown:
        raise ValueError(f"Nondeterministic columns {unknown} are not in {list(columns)}.")
    buffer = io.StringIO()
    buffer.write("\n".join(_preamble(config, nondeterministic)) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"Row {list(row)} has {len(row)} fields, expected {len(columns)}.")
        writer.writerow([formatted_value(value) for value in row])
    return buffer.getvalue()


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Row],
    config: ExperimentConfig,
    nondeterministic: Sequence[str] = (),
) -> Path:
    """Write a report file, creating its directory."""
    path = Path(path)
    text = render_csv(columns, rows, config, nondeterministic)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def format_console_table(columns: Sequence[str], rows: Sequence[Row], digits: int = 8) -> str:
    """Aligned plain-text table for the terminal (shorter numbers than the CSV)."""

    def cell(value: object) -> str:
        if isinstance(value, float):
            return f"{value:.{digits}g}"
        return formatted_value(value)

    table = [list(columns)] + [[cell(value) for value in row] for row in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(columns))]
    return "\n".join("  ".join(text.rjust(width) for text, width in zip(line, widths)) for line in table)
