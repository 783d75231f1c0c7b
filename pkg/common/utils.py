"""Shared formatting and hashing helpers.

Responsibility:
- Provide one way to turn numbers into text for every file normvol writes
  (CSV reports, moment tables), so reruns are byte-identical and every double
  survives a write/read round trip.
- Provide the content hash used to fingerprint simulation inputs and configs.

Entry point / public API:
- :func:`formatted_value`: format a number with 17 significant digits.
- :func:`parse_value`: read back a number written by :func:`formatted_value`.
- :func:`content_hash`: SHA-256 of a canonical key/value description.

Design note:
- This module complements common/constants.py: constants.py holds static
  values, utils.py holds the functions several modules reuse. The moment table
  writer, the CSV writer and the config hasher all go through here.
"""

from collections.abc import Mapping
import hashlib
import math

from common.constants import SIGNIFICANT_DIGITS


def formatted_value(value: float | int | bool | str | None) -> str:
    """Format a value for a report or table file.

    Floats use 17 significant digits (``repr``-exact), integers and strings are
    written as-is, booleans as ``true``/``false``, None and NaN as empty/``nan``.
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def parse_value(text: str) -> float:
    """Parse a float written by :func:`formatted_value`.

    Raises:
        ValueError: If the text is not a number.
    """
    return float(text.strip())


def content_hash(fields: Mapping[str, object]) -> str:
    """Hash a flat mapping into a stable hexadecimal fingerprint.

    Keys are sorted and values formatted with :func:`formatted_value`, so two
    mappings with the same content always hash the same.
    """
    canonical = "\n".join(f"{key}={formatted_value(fields[key])}" for key in sorted(fields))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
