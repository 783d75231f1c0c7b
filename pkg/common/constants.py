"""Shared constants, enums and exception types used throughout normvol.

Responsibility:
- Define model names, control-variate kinds, exit codes and the numerical
  constants every module must agree on (Taylor switch points, floors, defaults).
- Act as the single source of truth for the exception hierarchy, so pricing
  modules can raise precise errors and the command line can map them to exit
  codes without importing every module.

Design note:
- Keeping all constant strings in one place makes it much less likely a typo
  sneaks into two modules that are supposed to agree on the same text (a config
  key spelled one way in the parser and another way in the report writer).
- Exceptions are grouped under two bases: :class:`UsageError` (the user asked
  for something malformed, exit code 2) and :class:`PricingError` (the numbers
  could not be produced, exit code 1).

Entry point:
- This is a constants module; all classes and values are public API.
- Import as needed: ``from common.constants import ModelKind, DomainError``.

Includes:
- Exception bases: :class:`UsageError`, :class:`PricingError`
- Concrete errors: :class:`ConfigError`, :class:`DomainError`, :class:`ArbitrageError`,
  :class:`InsufficientMomentsError`, :class:`NonConvergenceError`,
  :class:`StaleCacheError`, :class:`TableParseError`, :class:`MomentTableError`,
  :class:`SimulationError`, :class:`MissingPathDataError`,
  :class:`DegenerateControlVariateError`
- Enums: :class:`ModelKind`, :class:`CvKind`, :class:`GreekMethod`, :class:`Command`,
  :class:`ExitCode`
- Numerical constants: :data:`TAYLOR_SWITCH`, :data:`IV_FLOOR_FACTOR`, ...
"""

from enum import IntEnum
import math

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11: equivalent of the stdlib StrEnum
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()

### Notes on Python features used in this module ###
#
# The exception classes below inherit from Exception directly (through two
# small bases). They don't need any special behavior, just a unique type. That
# way, other modules can raise and catch them specifically, without interfering
# with exceptions raised by numpy or Python itself.
#
# The enums inherit from StrEnum so that their values are strings. This allows
# easy comparison to the text read from config files and command lines
# (e.g., if kind == ModelKind.HESTON: ...).


class UsageError(Exception):
    """Base for errors caused by malformed input files or command lines."""
    pass


class PricingError(Exception):
    """Base for numerical failures while producing a price or an estimate."""
    pass


class ConfigError(UsageError):
    """Raised when an experiment config file cannot be parsed or validated."""
    pass


class DomainError(PricingError):
    """Raised when an input lies outside the domain of a formula."""
    pass


class ArbitrageError(PricingError):
    """Raised when a price violates a static no-arbitrage bound."""
    pass


class InsufficientMomentsError(PricingError):
    """Raised when a series is asked for more terms than the moment table holds."""
    pass


class NonConvergenceError(PricingError):
    """Raised when an iterative criterion is never met within its budget."""
    pass


class StaleCacheError(PricingError):
    """Raised when a stored moment table belongs to other simulation inputs."""
    pass


class TableParseError(PricingError):
    """Raised when a moment table file is malformed."""
    pass


class MomentTableError(PricingError):
    """Raised when a moment table violates its invariants (e.g. a non-positive moment)."""
    pass


class SimulationError(PricingError):
    """Raised for invalid simulation settings or a broken discretization."""
    pass


class MissingPathDataError(PricingError):
    """Raised when a path batch lacks the arrays an estimator needs."""
    pass


class DegenerateControlVariateError(PricingError):
    """Raised when a control variate has zero sample variance."""
    pass


class ModelKind(StrEnum):
    """Stochastic-volatility families the engine knows how to simulate."""

    HESTON = "heston"
    SABR = "sabr"


class CvKind(StrEnum):
    """Control variates of the variance-reduction study.

    - CV1: linear, X_T - X_0.
    - CV2: realized variance centred by its closed-form mean.
    - CV3: realized volatility centred by the volatility swap.
    - CV4: uncorrelated twin payoff centred by its series price.
    - SELF: the payoff itself (diagnostic, beta* = 1).
    """

    CV1 = "cv1"
    CV2 = "cv2"
    CV3 = "cv3"
    CV4 = "cv4"
    SELF = "self"


# Kinds reported by the study; SELF is a diagnostic only.
STUDY_CV_KINDS = (CvKind.CV1, CvKind.CV2, CvKind.CV3, CvKind.CV4)


class GreekMethod(StrEnum):
    """Ways the Greek benchmark computes Delta and Gamma."""

    SERIES = "series"
    CONDITIONAL_MC = "conditional_mc"
    FD_MC = "fd_mc"


class Command(StrEnum):
    """Sub-commands of the command line."""

    PRICE = "price"
    SMILE = "smile"
    NSTAR = "nstar"
    GREEKS = "greeks"
    CV = "cv"
    MOMENTS = "moments"


class ExitCode(IntEnum):
    """Process exit codes."""

    OK = 0
    NUMERICAL = 1
    USAGE = 2


SQRT_2PI = math.sqrt(2.0 * math.pi)

# Below this exponent argument, (e^x - 1)/x and (1 - e^-x)/x switch to Taylor series.
TAYLOR_SWITCH = 1e-6

# Integrated variances below IV_FLOOR_FACTOR * m0 are floored; more than
# IV_FLOOR_MAX_FRACTION of such paths is a hard error.
IV_FLOOR_FACTOR = 1e-12
IV_FLOOR_MAX_FRACTION = 1e-4

# Heston negative-variance excursions above this fraction of steps are logged.
TRUNCATION_WARN_FRACTION = 0.01

DEFAULT_STEPS_PER_YEAR = 252
DEFAULT_N_TERMS = 30
DEFAULT_N_MAX = 40
DEFAULT_N_STAR_TOL = 0.01
DEFAULT_FD_STEP = 1e-3

# Paths per random stream. Fixed, so results never depend on the worker count.
PATHS_PER_BLOCK = 2048

# z-value of the two-sided 95% normal confidence interval.
Z_95 = 1.96

# Decimal output carries 17 significant digits so every double round-trips.
SIGNIFICANT_DIGITS = 17

MOMENT_TABLE_FORMAT_VERSION = 1
