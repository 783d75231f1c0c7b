"""Package marker for the common module.

Shared constants, exception classes, formatting helpers and the table-driven
test helper used by every other package, e.g. 'from common import constants'.
"""
