"""Closed-form Bachelier (normal model) pricing, sensitivities and inversion.

Responsibility:
- Price a European call under the normal model, Bac(T, x, k, sigma), and give
  its analytic Delta, Gamma and Vega and its fourth spatial derivative K_Bac.
- Invert the price for the Bachelier implied volatility.
- Convert an ATM Black-Scholes implied volatility to the Bachelier one.

Design note:
- Prices are in absolute currency units and undiscounted: the engine works
  under a risk-neutral measure with zero rates, so there is no discount factor,
  no dividend and no day count anywhere in this module.
- Every function accepts a scalar or a numpy array for ``sigma`` and returns a
  matching shape, because the Monte Carlo pricers evaluate the formula at one
  realized volatility per path.
- sigma = 0 is handled as the explicit limit in price and Delta. Gamma and the
  kernel are singular there and reject it.
- The standard normal CDF is ``scipy.special.ndtr`` (double-precision accurate in
  both tails); the series pricer's accuracy rests on it.

Entry points / public API:
- :class:`MarketSpec`, :class:`BachelierQuote`
- :func:`bachelier_price`, :func:`bachelier_put_price`, :func:`bachelier_kernel`
- :func:`bachelier_delta`, :func:`bachelier_gamma`, :func:`bachelier_vega`,
  :func:`bachelier_quote`
- :func:`implied_vol_bachelier`, :func:`atm_bachelier_from_bs`
"""

from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from scipy.special import ndtr

from common.constants import SQRT_2PI, ArbitrageError, DomainError, NonConvergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarketSpec:
    """The option contract under valuation.

    Attributes:
        x: Spot price of the underlying (any sign; the normal model admits negative levels).
        k: Strike price.
        T: Time to maturity in years, strictly positive.
    """

    x: float
    k: float
    T: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.k) and math.isfinite(self.T)):
            raise DomainError(f"Market inputs must be finite, got x={self.x}, k={self.k}, T={self.T}.")
        if self.T <= 0.0:
            raise DomainError(f"Maturity must be positive, got T={self.T}.")

    @property
    def moneyness(self) -> float:
        """Spot minus strike, x - k."""
        return self.x - self.k

    @property
    def intrinsic(self) -> float:
        """Call intrinsic value max(x - k, 0)."""
        return max(self.x - self.k, 0.0)

    def with_strike(self, k: float) -> "MarketSpec":
        return replace(self, k=k)

    def with_spot(self, x: float) -> "MarketSpec":
        return replace(self, x=x)


@dataclass(frozen=True)
class BachelierQuote:
    """Price and first/second-order sensitivities at one volatility."""

    price: float
    d: float
    vega: float
    delta: float
    gamma: float


def norm_pdf(d):
    """Standard normal density N'(d)."""
    return np.exp(-0.5 * np.square(d)) / SQRT_2PI


def norm_cdf(d):
    """Standard normal distribution function N(d)."""
    return ndtr(d)


def _as_sigma(sigma, *, strictly_positive: bool) -> np.ndarray:
    """Validate a volatility argument and return it as a float array."""
    s = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("Volatility must be finite.")
    if strictly_positive and np.any(s <= 0.0):
        raise DomainError("Volatility must be strictly positive here.")
    if np.any(s < 0.0):
        raise DomainError("Volatility must be non-negative.")
    return s


def _shaped(values: np.ndarray, like):
    """Return a Python float for scalar input, the array otherwise."""
    return float(values) if np.ndim(like) == 0 else values


def d_bachelier(m: MarketSpec, sigma):
    """d_Bac = (x - k) / (sigma sqrt(T)) for sigma > 0."""
    s = _as_sigma(sigma, strictly_positive=True)
    return _shaped(m.moneyness / (s * math.sqrt(m.T)), sigma)


def _time_value(a: float, vol: np.ndarray) -> np.ndarray:
    """Time value shared by the call and the put: vol (N'(d) - |d| N(-|d|)), d = |a| / vol.

    Both sides of put-call parity carry this same non-negative amount above
    their intrinsic values. Zero at vol = 0.
    """
    positive = vol > 0.0
    safe_vol = np.where(positive, vol, 1.0)
    d = abs(a) / safe_vol
    value = safe_vol * norm_pdf(d) - abs(a) * norm_cdf(-d)
    return np.where(positive, np.maximum(value, 0.0), 0.0)


def bachelier_price(m: MarketSpec, sigma):
    """Price a call: (x - k) N(d) + N'(d) sigma sqrt(T), intrinsic value at sigma = 0.

    Evaluated as intrinsic value plus time value, so the price never drops
    below max(x - k, 0) deep in the money.
    """
    s = _as_sigma(sigma, strictly_positive=False)
    price = max(m.moneyness, 0.0) + _time_value(m.moneyness, s * math.sqrt(m.T))
    return _shaped(price, sigma)


def bachelier_put_price(m: MarketSpec, sigma):
    """Price a put, call - (x - k), as max(k - x, 0) plus time value."""
    s = _as_sigma(sigma, strictly_positive=False)
    price = max(-m.moneyness, 0.0) + _time_value(m.moneyness, s * math.sqrt(m.T))
    return _shaped(price, sigma)


def bachelier_kernel(m: MarketSpec, sigma):
    """Fourth x-derivative of the price, K_Bac.

    ((x - k)^2 - T sigma^2) / (T^(5/2) sigma^5) * exp(-d^2 / 2) / sqrt(2 pi)
    """
    s = _as_sigma(sigma, strictly_positive=True)
    a = m.moneyness
    d = a / (s * math.sqrt(m.T))
    kernel = (a * a - m.T * s * s) / (m.T**2.5 * s**5) * norm_pdf(d)
    return _shaped(kernel, sigma)


def bachelier_delta(m: MarketSpec, sigma):
    """Delta N(d); the step function 1{x > k} (1/2 at the money) at sigma = 0."""
    s = _as_sigma(sigma, strictly_positive=False)
    vol = s * math.sqrt(m.T)
    positive = vol > 0.0
    d = m.moneyness / np.where(positive, vol, 1.0)
    limit = 1.0 if m.x > m.k else (0.5 if m.x == m.k else 0.0)
    return _shaped(np.where(positive, norm_cdf(d), limit), sigma)


def bachelier_gamma(m: MarketSpec, sigma):
    """Gamma N'(d) / (sigma sqrt(T))."""
    s = _as_sigma(sigma, strictly_positive=True)
    vol = s * math.sqrt(m.T)
    return _shaped(norm_pdf(m.moneyness / vol) / vol, sigma)


def bachelier_vega(m: MarketSpec, sigma):
    """Vega N'(d) sqrt(T)."""
    s = _as_sigma(sigma, strictly_positive=True)
    d = m.moneyness / (s * math.sqrt(m.T))
    return _shaped(norm_pdf(d) * math.sqrt(m.T), sigma)


def bachelier_quote(m: MarketSpec, sigma: float) -> BachelierQuote:
    """Bundle price, d, Vega, Delta and Gamma at a single positive volatility."""
    return BachelierQuote(
        price=bachelier_price(m, sigma),
        d=d_bachelier(m, sigma),
        vega=bachelier_vega(m, sigma),
        delta=bachelier_delta(m, sigma),
        gamma=bachelier_gamma(m, sigma),
    )


def implied_vol_bachelier(
    m: MarketSpec,
    price: float,
    *,
    put: bool = False,
    price_tol: float = 1e-10,
    max_iter: int = 400,
) -> float:
    """Invert a Bachelier option price for its implied volatility.

    The solver works on the time value above intrinsic, which the call and the
    put share through put-call parity. Deep in the money the call's time value
    falls below the resolution of its price (beyond d of about 5.5 in double
    precision), so such quotes invert exactly only when passed as the
    out-of-the-money put with ``put=True``. The bracket [0, sigma_hi] is grown
    geometrically until it over-prices; then safeguarded Newton steps
    (bisection whenever Newton would leave the bracket) converge.

    Args:
        m: Contract.
        price: Option price, at least the intrinsic value.
        put: Whether ``price`` is a put price rather than a call price.
        price_tol: Absolute tolerance on the repriced option.
        max_iter: Iteration budget.

    Returns:
        The implied volatility; 0.0 when the price equals the intrinsic value.

    Raises:
        ArbitrageError: If the price is below intrinsic value.
        DomainError: If the price is not finite.
        NonConvergenceError: If the iteration budget runs out.
    """
    if not math.isfinite(price):
        raise DomainError(f"Price must be finite, got {price}.")
    a = m.moneyness
    intrinsic = max(-a, 0.0) if put else m.intrinsic
    if price < intrinsic:
        raise ArbitrageError(f"Price {price} is below the intrinsic value {intrinsic}.")
    target = price - intrinsic
    if target == 0.0:
        return 0.0
    sqrt_t = math.sqrt(m.T)

    def residual(sigma: float) -> float:
        return float(_time_value(a, np.asarray(sigma * sqrt_t))) - target

    lo = 0.0
    hi = max(abs(a) / sqrt_t, target * SQRT_2PI / sqrt_t, 1e-300)
    while residual(hi) < 0.0:
        lo = hi
        hi *= 2.0
        if not math.isfinite(hi):
            raise NonConvergenceError(f"Could not bracket the implied volatility of price {price}.")

    sigma = hi if lo == 0.0 else 0.5 * (lo + hi)
    for iteration in range(max_iter):
        f = residual(sigma)
        if f == 0.0 or hi - lo <= 4e-16 * hi:
            break
        if f > 0.0:
            hi = sigma
        else:
            lo = sigma
        vega = float(norm_pdf(a / (sigma * sqrt_t))) * sqrt_t
        step = f / vega if vega > 0.0 else math.inf
        candidate = sigma - step
        if not (lo < candidate < hi) or not math.isfinite(candidate):
            # Geometric bisection when both ends are positive: the price is
            # exponentially flat in sigma on the far wings.
            candidate = math.sqrt(lo * hi) if lo > 0.0 else 0.5 * hi
        if abs(candidate - sigma) <= 1e-15 * sigma:
            sigma = candidate
            break
        sigma = candidate
    else:
        raise NonConvergenceError(f"Implied volatility did not converge for price {price}.")

    if abs(residual(sigma)) > price_tol:
        logger.debug("Implied vol of %s stopped on bracket width with residual %s", price, residual(sigma))
    logger.debug("Implied vol %s after %d iterations", sigma, iteration)
    return sigma


def atm_bachelier_from_bs(x: float, T: float, i_bs: float) -> float:
    """Convert an ATM Black-Scholes implied volatility to the Bachelier one.

    Equates the two ATM prices: sqrt(2 pi / T) * x * (2 N(I_bs sqrt(T) / 2) - 1).
    """
    if not (math.isfinite(x) and math.isfinite(T) and math.isfinite(i_bs)):
        raise DomainError(f"Inputs must be finite, got x={x}, T={T}, I_bs={i_bs}.")
    if x <= 0.0 or T <= 0.0 or i_bs < 0.0:
        raise DomainError(f"Need x > 0, T > 0 and I_bs >= 0, got x={x}, T={T}, I_bs={i_bs}.")
    # 2N(u) - 1 = erf(u / sqrt 2), exact near zero where 2N(u) - 1 would cancel.
    return SQRT_2PI / math.sqrt(T) * x * math.erf(i_bs * math.sqrt(T) / 2.0 / math.sqrt(2.0))
