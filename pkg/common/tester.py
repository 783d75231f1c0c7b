"""Table-driven test helpers shared by the normvol test suite.

Responsibility:
- Provide a compact way to check a function against many argument tuples and
  expected values, including the numerical tolerances pricing code needs.
- Let every test file run on its own (``python -m tests.test_bachelier``)
  with a readable OK/FAIL report, while pytest collects the same functions.

Design note:
- A test case is a tuple of arguments plus one expected value. Use the string
  ``"error"`` as the expected value when the call must raise.
- Floats (and numpy arrays) are compared with ``rel_tol``/``abs_tol``; everything
  else with ``==``. With both tolerances at 0 the comparison is exact.
- Test functions assert on the boolean returned by :func:`run_tests_for_function`,
  so under pytest a failure shows the printed report in the captured output.

Entry point / public API:
- :func:`run_tests_for_function`: check a function on a batch of cases.
- :func:`test_module`: run a list of test functions and print a summary.

Example:
    from pricing.bachelier import MarketSpec, bachelier_price

    assert run_tests_for_function(
        [(MarketSpec(100.0, 100.0, 1.0), 20.0), (MarketSpec(100.0, 80.0, 1.0), 0.0)],
        [7.978845608028654, 20.0],
        bachelier_price,
        comment="closed-form values",
        rel_tol=1e-14,
    )
"""

from typing import Callable
import math

import numpy as np


def _matches(result, expected, rel_tol: float, abs_tol: float) -> bool:
    """Compare one result with its expected value under the given tolerances."""
    if isinstance(expected, (float, np.floating)) or isinstance(result, (float, np.floating)):
        if isinstance(result, (np.ndarray,)):
            return False
        return math.isclose(float(result), float(expected), rel_tol=rel_tol, abs_tol=abs_tol)
    if isinstance(expected, np.ndarray) or isinstance(result, np.ndarray):
        return bool(np.allclose(result, expected, rtol=rel_tol, atol=abs_tol))
    return result == expected


def run_tests_for_function(
    args: list[tuple],
    expected: list,
    function: Callable,
    comment: str = "",
    rel_tol: float = 0.0,
    abs_tol: float = 0.0,
) -> bool:
    """Test a function against multiple input/output pairs, including error cases.

    Runs the given function against each set of arguments and compares the
    result to the corresponding expected value. Prints a summary: either
    "OK" if all tests pass, or "FAIL" with details for each failed test.

    Args:
        args: List of argument tuples, one per test case.
        expected: Expected return values (one per test case). The string
            "error" means the call must raise an exception.
        function: The function under test, called as ``function(*arg)``.
        comment: Optional description of the batch, shown in the report.
        rel_tol: Relative tolerance for float and array comparisons.
        abs_tol: Absolute tolerance for float and array comparisons.

    Returns:
        True if and only if all cases passed.
    """
    passed = True
    function_name = getattr(function, "__name__", repr(function))
    report = f"test {function_name} "
    report += f"({comment}) ... " if comment else " ... "
    fail_messages = []
    for i, (arg, exp) in enumerate(zip(args, expected, strict=True)):
        try:
            result = function(*arg)
        except Exception as e:
            if isinstance(exp, str) and exp == "error":
                continue
            fail_messages.append(
                f"Test {i} failed: for args {arg}:\n  expected {exp}\n  but got exception {e!r}"
            )
            passed = False
            continue
        if isinstance(exp, str) and exp == "error":
            fail_messages.append(
                f"Test {i} failed: for args {arg}:\n  expected an exception\n  but got {result}"
            )
            passed = False
        elif not _matches(result, exp, rel_tol, abs_tol):
            fail_messages.append(
                f"Test {i} failed: for args {arg}:\n  expected {exp}\n  but got {result}"
            )
            passed = False
    if passed:
        print(report + "OK")
        return True
    print(report + "FAIL")
    for msg in fail_messages:
        print("\n  " + msg)
    return False


def test_module(module_name: str, test_functions: list[Callable]) -> bool:
    """Run every test function of a module and print a banner with the outcome.

    A test function passes when it returns without raising and does not return
    False. Assertion errors and unexpected exceptions are reported, not raised.
    """
    print(f"\n------------------------\nTesting {module_name.upper()}:\n------------------------\n")
    success = True
    for test_function in test_functions:
        try:
            outcome = test_function()
        except Exception as e:
            print(f"{test_function.__name__} ... FAIL ({e!r})")
            success = False
            continue
        if outcome is False:
            success = False
    status = "ALL TESTS PASSED" if success else "FAILED"
    print(f"\n------------------------\n{module_name.upper()}: {status}\n------------------------\n")
    return success


# pytest would otherwise collect the helper above as a test.
test_module.__test__ = False
