"""Deterministic, block-parallel simulation of volatility and asset paths.

Responsibility:
- Simulate the volatility on a uniform grid, its integrated variance
  (1/T) int_0^T sigma_s^2 ds per path, and optionally the terminal asset value
  X_T (and its uncorrelated twin X_T^0) under
  dX_t = sigma_t (rho dW_t + sqrt(1 - rho^2) dB_t).

Schemes:
- SABR: sigma^2 is sampled exactly at the grid nodes from its lognormal law.
- Heston: full-truncation Euler on the variance V, using V+ = max(V, 0) in both
  drift and diffusion; node values stored are V+.
- Integrated variance: trapezoidal rule on the node values of sigma^2.
- Asset: Euler sum x0 + sum sigma_{t_i} (rho dW_i + sqrt(1 - rho^2) dB_i) with the
  left-node volatility; X^0 reuses the same sigma path and the same dB (rho = 0).

Design note:
- Paths are generated in fixed blocks of PATHS_PER_BLOCK. Block b draws from its
  own Philox stream keyed by SeedSequence(seed, spawn_key=(b,)), so the output is
  a pure function of (model, T, config) and is bit-identical for any worker count.
- Within a block, the vol noise W is drawn before the asset noise B. A vol-only
  run and an asset run with the same seed therefore share their volatility paths.
- Antithetic pairs are interleaved: path 2i+1 uses the negated Gaussians
  (both W and B) of path 2i.

Entry points / public API:
- :class:`SimConfig`, :class:`PathBatch`
- :func:`simulate_vol_paths`, :func:`simulate_asset_terminal`
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from common.constants import (
    DEFAULT_STEPS_PER_YEAR,
    PATHS_PER_BLOCK,
    TRUNCATION_WARN_FRACTION,
    SimulationError,
)
from common.utils import content_hash
from pricing.vol_models import HestonParams, SabrParams, VolModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo setup.

    Attributes:
        n_paths: Number of paths (even when antithetic).
        steps_per_year: Grid density; the grid has round(steps_per_year * T) steps.
        seed: 64-bit seed of every random stream.
        antithetic: Pair each path with its sign-flipped twin.
        keep_grid: Retain sigma^2 at every node (needed by the decomposition pricer).
        workers: Threads used for block generation; never changes the output.
    """

    n_paths: int
    steps_per_year: int = DEFAULT_STEPS_PER_YEAR
    seed: int = 0
    antithetic: bool = True
    keep_grid: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise SimulationError(f"Need at least 2 paths, got {self.n_paths}.")
        if self.antithetic and self.n_paths % 2:
            raise SimulationError(f"Antithetic runs need an even path count, got {self.n_paths}.")
        if self.steps_per_year < 1:
            raise SimulationError(f"steps_per_year must be >= 1, got {self.steps_per_year}.")
        if not 0 <= self.seed < 2**64:
            raise SimulationError(f"Seed must be a 64-bit unsigned integer, got {self.seed}.")
        if self.workers < 1:
            raise SimulationError(f"workers must be >= 1, got {self.workers}.")

    def n_steps(self, T: float) -> int:
        """Number of grid steps for maturity T."""
        return max(1, int(round(self.steps_per_year * T)))

    def describe(self) -> dict[str, object]:
        """Inputs that determine the simulated numbers (workers excluded)."""
        return {
            "n_paths": self.n_paths,
            "steps_per_year": self.steps_per_year,
            "seed": self.seed,
            "antithetic": self.antithetic,
        }


def simulation_fingerprint(model: VolModel, T: float, cfg: SimConfig) -> str:
    """Content hash of everything that determines a volatility batch."""
    fields = dict(model.describe())
    # rho never changes the volatility paths, so batches shared across rho hash alike.
    fields.pop("rho", None)
    fields.update(cfg.describe())
    fields["T"] = T
    return content_hash(fields)


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Immutable result of one simulation run.

    Attributes:
        model: Model simulated.
        T: Maturity.
        config: Simulation settings.
        times: Grid nodes 0 = t_0 < ... < t_n = T.
        integrated_variance: (1/T) int_0^T sigma^2 ds per path.
        terminal_x: X_T per path, if simulated.
        terminal_x_rho0: X_T^0 per path (same sigma, same B, rho = 0), if simulated.
        sigma_sq_nodes: sigma^2 at every node, shape (n_paths, n_steps + 1), if kept.
        negative_variance_steps: Heston steps whose untruncated variance went negative.
    """

    model: VolModel
    T: float
    config: SimConfig
    times: np.ndarray
    integrated_variance: np.ndarray
    terminal_x: np.ndarray | None = None
    terminal_x_rho0: np.ndarray | None = None
    sigma_sq_nodes: np.ndarray | None = None
    negative_variance_steps: int = 0
    fingerprint: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        # The batch owns read-only copies; the caller's arrays stay writable.
        for name in ("times", "integrated_variance", "terminal_x", "terminal_x_rho0", "sigma_sq_nodes"):
            array = getattr(self, name)
            if array is not None:
                owned = np.array(array, dtype=float, copy=True)
                owned.setflags(write=False)
                object.__setattr__(self, name, owned)

    @property
    def n_paths(self) -> int:
        return int(self.integrated_variance.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.times.shape[0] - 1)

    @property
    def antithetic(self) -> bool:
        return self.config.antithetic

    @property
    def negative_variance_fraction(self) -> float:
        """Share of simulated steps with a negative variance before truncation."""
        return self.negative_variance_steps / (self.n_paths * self.n_steps)


@dataclass
class _Block:
    """Arrays produced by one block of paths."""

    integrated_variance: np.ndarray
    terminal_x: np.ndarray | None
    terminal_x_rho0: np.ndarray | None
    sigma_sq_nodes: np.ndarray | None
    negative_steps: int


def _block_sizes(n_paths: int) -> list[int]:
    full, rest = divmod(n_paths, PATHS_PER_BLOCK)
    return [PATHS_PER_BLOCK] * full + ([rest] if rest else [])


def _block_generator(seed: int, block_index: int) -> np.random.Generator:
    """Counter-based stream of one block, independent of scheduling."""
    sequence = np.random.SeedSequence(seed, spawn_key=(block_index,))
    return np.random.Generator(np.random.Philox(sequence))


def _gaussians(rng: np.random.Generator, size: int, n_steps: int, antithetic: bool) -> np.ndarray:
    """Standard normals of shape (size, n_steps), antithetic pairs interleaved."""
    if not antithetic:
        return rng.standard_normal((size, n_steps))
    base = rng.standard_normal((size // 2, n_steps))
    z = np.empty((size, n_steps))
    z[0::2] = base
    z[1::2] = -base
    return z


def _variance_nodes(model: VolModel, z_w: np.ndarray, dt: float, times: np.ndarray) -> tuple[np.ndarray, int]:
    """sigma^2 at every node for one block, and the count of truncated steps."""
    size, n_steps = z_w.shape
    s0_sq = model.sigma0**2
    if isinstance(model, SabrParams):
        # exact: sigma_t^2 = sigma0^2 exp(-nu^2 t + 2 nu W_t)
        w = np.zeros((size, n_steps + 1))
        np.cumsum(z_w * math.sqrt(dt), axis=1, out=w[:, 1:])
        nu = model.nu
        return s0_sq * np.exp(-nu * nu * times[None, :] + 2.0 * nu * w), 0
    if isinstance(model, HestonParams):
        nodes = np.empty((size, n_steps + 1))
        nodes[:, 0] = s0_sq
        v = np.full(size, s0_sq)
        negative = 0
        sqrt_dt = math.sqrt(dt)
        for i in range(n_steps):
            v_plus = np.maximum(v, 0.0)
            v = v + model.kappa * (model.theta - v_plus) * dt + model.nu * np.sqrt(v_plus) * sqrt_dt * z_w[:, i]
            negative += int(np.count_nonzero(v < 0.0))
            nodes[:, i + 1] = np.maximum(v, 0.0)
        return nodes, negative
    raise SimulationError(f"Unsupported model {model!r}.")


def _simulate_block(
    model: VolModel,
    T: float,
    cfg: SimConfig,
    block_index: int,
    size: int,
    x0: float | None,
    couple_rho0: bool,
) -> _Block:
    n_steps = cfg.n_steps(T)
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    rng = _block_generator(cfg.seed, block_index)
    z_w = _gaussians(rng, size, n_steps, cfg.antithetic)
    nodes, negative = _variance_nodes(model, z_w, dt, times)
    integrated = (0.5 * (nodes[:, 0] + nodes[:, -1]) + nodes[:, 1:-1].sum(axis=1)) * dt / T

    terminal_x = terminal_x_rho0 = None
    if x0 is not None:
        z_b = _gaussians(rng, size, n_steps, cfg.antithetic)
        sigma_left = np.sqrt(nodes[:, :-1]) * math.sqrt(dt)
        rho = model.rho
        terminal_x = x0 + np.sum(sigma_left * (rho * z_w + math.sqrt(1.0 - rho * rho) * z_b), axis=1)
        if couple_rho0:
            terminal_x_rho0 = x0 + np.sum(sigma_left * z_b, axis=1)
    logger.debug("Simulated block %d (%d paths)", block_index, size)
    return _Block(
        integrated_variance=integrated,
        terminal_x=terminal_x,
        terminal_x_rho0=terminal_x_rho0,
        sigma_sq_nodes=nodes if cfg.keep_grid else None,
        negative_steps=negative,
    )


def _run(model: VolModel, T: float, cfg: SimConfig, x0: float | None, couple_rho0: bool) -> PathBatch:
    if not (math.isfinite(T) and T > 0.0):
        raise SimulationError(f"Maturity must be positive, got T={T}.")
    sizes = _block_sizes(cfg.n_paths)
    logger.info(
        "Simulating %s: %d paths, %d steps, seed %d, %d worker(s)",
        model.kind, cfg.n_paths, cfg.n_steps(T), cfg.seed, cfg.workers,
    )

    def job(index: int) -> _Block:
        return _simulate_block(model, T, cfg, index, sizes[index], x0, couple_rho0)

    if cfg.workers == 1 or len(sizes) == 1:
        blocks = [job(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            # map() yields in submission order, so concatenation order is fixed.
            blocks = list(executor.map(job, range(len(sizes))))

    def joined(name: str) -> np.ndarray | None:
        parts = [getattr(block, name) for block in blocks]
        return None if parts[0] is None else np.concatenate(parts)

    n_steps = cfg.n_steps(T)
    batch = PathBatch(
        model=model,
        T=T,
        config=cfg,
        times=np.linspace(0.0, T, n_steps + 1),
        integrated_variance=joined("integrated_variance"),
        terminal_x=joined("terminal_x"),
        terminal_x_rho0=joined("terminal_x_rho0"),
        sigma_sq_nodes=joined("sigma_sq_nodes"),
        negative_variance_steps=sum(block.negative_steps for block in blocks),
        fingerprint=simulation_fingerprint(model, T, cfg),
    )
    if batch.negative_variance_fraction > TRUNCATION_WARN_FRACTION:
        logger.warning(
            "Variance went negative on %.2f%% of steps before truncation",
            100.0 * batch.negative_variance_fraction,
        )
    return batch


def simulate_vol_paths(model: VolModel, T: float, cfg: SimConfig) -> PathBatch:
    """Simulate volatility paths and their integrated variance."""
    return _run(model, T, cfg, None, False)


def simulate_asset_terminal(
    model: VolModel, x0: float, T: float, cfg: SimConfig, couple_rho0: bool = False
) -> PathBatch:
    """Simulate volatility paths plus the terminal asset value.

    Args:
        model: Volatility model; its rho correlates the asset with the vol noise.
        x0: Initial asset price.
        T: Maturity.
        cfg: Simulation settings.
        couple_rho0: Also return X_T^0 driven by the same sigma and B with rho = 0.
    """
    if not math.isfinite(x0):
        raise SimulationError(f"Initial price must be finite, got {x0}.")
    return _run(model, T, cfg, x0, couple_rho0)
