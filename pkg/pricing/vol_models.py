"""Parameter sets and closed-form facts for the supported volatility models.

Responsibility:
- Hold the Heston and SABR parameter sets (with the price/vol correlation rho).
- Give the closed forms every other module leans on: the variance swap
  M_0 = (1/T) E int_0^T sigma_s^2 ds, the expected instantaneous variance curve,
  the conditional expectation of future variance, and the density of the
  quadratic variation of M_s = (1/T) E_s int_0^T sigma_u^2 du.

Dynamics:
- Heston: d sigma^2 = -kappa (sigma^2 - theta) dt + nu sigma dW.
  E_s sigma_u^2 = theta + (sigma_s^2 - theta) exp(-kappa (u - s)).
- SABR: sigma_t = sigma0 exp(-nu^2 t / 2 + nu W_t), so sigma^2 is a geometric
  Brownian motion with d sigma^2 = sigma^2 (nu^2 dt + 2 nu dW).
  E_s sigma_u^2 = sigma_s^2 exp(nu^2 (u - s)).

Quadratic variation of M (Ito on M_s = (1/T)[int_0^s sigma^2 + F(s, sigma_s^2)]):
- Heston: d<M,M>_s/ds = nu^2 sigma_s^2 (1 - e^{-kappa (T-s)})^2 / (kappa^2 T^2)
- SABR:   d<M,M>_s/ds = 4 sigma_s^4 (e^{nu^2 (T-s)} - 1)^2 / (nu^2 T^2)

Design note:
- rho is stored with the model but ignored here: it only changes how the asset
  is simulated, never the law of the volatility.
- (1 - e^-x)/x and (e^x - 1)/x switch to their Taylor series below
  TAYLOR_SWITCH to avoid cancellation; both branches agree to 1e-10 there.

Entry points / public API:
- :class:`HestonParams`, :class:`SabrParams`, the :data:`VolModel` union
- :func:`m0`, :func:`expected_variance_curve`, :func:`conditional_future_variance`,
  :func:`conditional_mean_variance`, :func:`qv_density_of_M`, :func:`model_from_description`
"""

from dataclasses import dataclass, replace
from typing import ClassVar
import math

import numpy as np

from common.constants import TAYLOR_SWITCH, DomainError, ModelKind


@dataclass(frozen=True)
class HestonParams:
    """Heston variance dynamics.

    Attributes:
        sigma0: Initial volatility (initial variance sigma0^2).
        kappa: Mean-reversion speed, 1/years.
        theta: Long-run variance.
        nu: Volatility of variance.
        rho: Correlation between the asset noise and the variance noise.
    """

    kind: ClassVar[ModelKind] = ModelKind.HESTON

    sigma0: float
    kappa: float
    theta: float
    nu: float
    rho: float = 0.0

    def __post_init__(self) -> None:
        values = (self.sigma0, self.kappa, self.theta, self.nu, self.rho)
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"Heston parameters must be finite: {self}.")
        if self.sigma0 <= 0 or self.kappa <= 0 or self.theta <= 0 or self.nu <= 0:
            raise DomainError(f"Heston needs sigma0, kappa, theta, nu > 0: {self}.")
        if abs(self.rho) > 1.0:
            raise DomainError(f"Correlation must lie in [-1, 1], got {self.rho}.")

    def with_rho(self, rho: float) -> "HestonParams":
        return replace(self, rho=rho)

    def describe(self) -> dict[str, object]:
        """Flat description used in fingerprints and file headers."""
        return {
            "model": str(self.kind),
            "sigma0": self.sigma0,
            "kappa": self.kappa,
            "theta": self.theta,
            "nu": self.nu,
            "rho": self.rho,
        }


@dataclass(frozen=True)
class SabrParams:
    """SABR (lognormal) volatility, sigma_t = sigma0 exp(-nu^2 t / 2 + nu W_t).

    Attributes:
        sigma0: Initial volatility.
        nu: Volatility of volatility, 1/sqrt(years). nu = 0 is deterministic volatility.
        rho: Correlation between the asset noise and the volatility noise.
    """

    kind: ClassVar[ModelKind] = ModelKind.SABR

    sigma0: float
    nu: float
    rho: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.sigma0, self.nu, self.rho)):
            raise DomainError(f"SABR parameters must be finite: {self}.")
        if self.sigma0 <= 0 or self.nu < 0:
            raise DomainError(f"SABR needs sigma0 > 0 and nu >= 0: {self}.")
        if abs(self.rho) > 1.0:
            raise DomainError(f"Correlation must lie in [-1, 1], got {self.rho}.")

    def with_rho(self, rho: float) -> "SabrParams":
        return replace(self, rho=rho)

    def describe(self) -> dict[str, object]:
        """Flat description used in fingerprints and file headers."""
        return {"model": str(self.kind), "sigma0": self.sigma0, "nu": self.nu, "rho": self.rho}


# Exactly one variant is active; dispatch is by isinstance.
VolModel = HestonParams | SabrParams


def expm1_ratio(x):
    """(e^x - 1) / x, with its Taylor series for |x| < TAYLOR_SWITCH."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_SWITCH
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, 1.0 + x / 2.0 + x * x / 6.0, np.expm1(safe) / safe)
    return float(ratio) if ratio.ndim == 0 else ratio


def one_minus_exp_ratio(x):
    """(1 - e^-x) / x, with its Taylor series for |x| < TAYLOR_SWITCH."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_SWITCH
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, 1.0 - x / 2.0 + x * x / 6.0, -np.expm1(-safe) / safe)
    return float(ratio) if ratio.ndim == 0 else ratio


def _check_maturity(T: float) -> None:
    if not (math.isfinite(T) and T > 0.0):
        raise DomainError(f"Maturity must be positive, got T={T}.")


def m0(model: VolModel, T: float) -> float:
    """Variance swap M_0 = (1/T) E int_0^T sigma_s^2 ds in closed form."""
    _check_maturity(T)
    s0_sq = model.sigma0**2
    if isinstance(model, HestonParams):
        return model.theta + (s0_sq - model.theta) * one_minus_exp_ratio(model.kappa * T)
    if isinstance(model, SabrParams):
        return s0_sq * expm1_ratio(model.nu**2 * T)
    raise DomainError(f"Unsupported model {model!r}.")


def expected_variance_curve(model: VolModel, t):
    """Expected instantaneous variance E sigma_t^2 (scalar or array t >= 0)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise DomainError("Time must be non-negative.")
    s0_sq = model.sigma0**2
    if isinstance(model, HestonParams):
        curve = model.theta + (s0_sq - model.theta) * np.exp(-model.kappa * t_arr)
    elif isinstance(model, SabrParams):
        curve = s0_sq * np.exp(model.nu**2 * t_arr)
    else:
        raise DomainError(f"Unsupported model {model!r}.")
    return float(curve) if curve.ndim == 0 else curve


def _future_weight(model: VolModel, tau):
    """dF/d(sigma_s^2) where F = E_s int_s^T sigma_u^2 du and tau = T - s."""
    if isinstance(model, HestonParams):
        return tau * one_minus_exp_ratio(model.kappa * tau)
    if isinstance(model, SabrParams):
        return tau * expm1_ratio(model.nu**2 * tau)
    raise DomainError(f"Unsupported model {model!r}.")


def conditional_future_variance(model: VolModel, sigma_sq_s, s, T: float):
    """E_s int_s^T sigma_u^2 du given the current variance sigma_s^2."""
    tau = np.maximum(T - np.asarray(s, dtype=float), 0.0)
    sigma_sq = np.asarray(sigma_sq_s, dtype=float)
    weight = _future_weight(model, tau)
    if isinstance(model, HestonParams):
        return model.theta * tau + (sigma_sq - model.theta) * weight
    return sigma_sq * weight


def conditional_mean_variance(model: VolModel, realized, sigma_sq_s, s, T: float):
    """M_s = (1/T) [int_0^s sigma^2 du + E_s int_s^T sigma_u^2 du]."""
    return (np.asarray(realized, dtype=float) + conditional_future_variance(model, sigma_sq_s, s, T)) / T


def qv_density_of_M(model: VolModel, sigma_sq_s, s, T: float):
    """Density d<M,M>_s/ds of the quadratic variation of M at time s.

    Args:
        model: Volatility model.
        sigma_sq_s: Current variance sigma_s^2 (scalar or array, >= 0).
        s: Current time(s), 0 <= s <= T.
        T: Maturity.
    """
    _check_maturity(T)
    s_arr = np.asarray(s, dtype=float)
    sigma_sq = np.asarray(sigma_sq_s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > T * (1.0 + 1e-12)):
        raise DomainError("Time must lie in [0, T].")
    if np.any(sigma_sq < 0.0):
        raise DomainError("Variance must be non-negative.")
    weight = _future_weight(model, np.maximum(T - s_arr, 0.0))
    if isinstance(model, HestonParams):
        # dF/dsigma^2 times the diffusion nu sigma of sigma^2
        density = model.nu**2 * sigma_sq * np.square(weight) / T**2
    else:
        density = 4.0 * model.nu**2 * np.square(sigma_sq) * np.square(weight) / T**2
    return float(density) if density.ndim == 0 else density


def model_from_description(fields: dict[str, object]) -> VolModel:
    """Rebuild a parameter set from :meth:`describe` output (values may be text).

    Raises:
        DomainError: If the model type is unknown or a parameter is missing or invalid.
    """
    try:
        kind = ModelKind(str(fields["model"]))
        if kind is ModelKind.HESTON:
            return HestonParams(
                sigma0=float(fields["sigma0"]),
                kappa=float(fields["kappa"]),
                theta=float(fields["theta"]),
                nu=float(fields["nu"]),
                rho=float(fields.get("rho", 0.0)),
            )
        return SabrParams(
            sigma0=float(fields["sigma0"]),
            nu=float(fields["nu"]),
            rho=float(fields.get("rho", 0.0)),
        )
    except KeyError as e:
        raise DomainError(f"Model description lacks the parameter {e.args[0]!r}.") from e
    except ValueError as e:
        raise DomainError(f"Invalid model description {dict(fields)}: {e}") from e
