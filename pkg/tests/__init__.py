"""Package marker for the test suite.

Run everything with ``pytest`` from the repository root, or one file on its own
with e.g. ``python -m tests.test_bachelier`` for the OK/FAIL report.
"""
