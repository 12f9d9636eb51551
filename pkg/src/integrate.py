"""
Deterministic quadrature, exact summation and seeded Monte Carlo engine.

Every expectation the bounds need runs through one of two nested grids on the
same integration domain:

  - y-outer: marginal weights of y, normalized posterior weights of theta | y
  - theta-outer: prior weights of theta, likelihood weights of y | theta

Continuous axes use (composite) Gauss-Legendre rules on truncated windows,
finite spaces use exact summation. Integrands are vectorized callables
f(y, theta) evaluated with numpy broadcasting.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidSpec, NonFinite, UnsupportedSampling, ZeroEvidence

if TYPE_CHECKING:
    from .model import ScalarModel

logger = logging.getLogger(__name__)

EVIDENCE_FLOOR = 1e-300
NORMALIZATION_TOL = 1e-8
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
UINT64_MASK = (1 << 64) - 1
MIN_SEGMENT_NODES = 17
POSTERIOR_CHUNK = 2048


@dataclass(frozen=True)
class IntegrationConfig:
    nodes_per_axis: int = 257
    tail_sigmas: float = 8.0
    mc_samples: int = 0
    seed: int = 0
    workers: int = 1
    vector_nodes_per_axis: int = 24

    def __post_init__(self):
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 33:
            raise InvalidSpec(f"nodes_per_axis must be an integer >= 33, got {self.nodes_per_axis}")
        if not self.tail_sigmas >= 4.0:
            raise InvalidSpec(f"tail_sigmas must be >= 4, got {self.tail_sigmas}")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 0:
            raise InvalidSpec(f"mc_samples must be a nonnegative integer, got {self.mc_samples}")
        if int(self.seed) != self.seed or not 0 <= self.seed <= UINT64_MASK:
            raise InvalidSpec(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise InvalidSpec(f"workers must be a positive integer, got {self.workers}")
        if int(self.vector_nodes_per_axis) != self.vector_nodes_per_axis or self.vector_nodes_per_axis < 4:
            raise InvalidSpec(f"vector_nodes_per_axis must be an integer >= 4, got {self.vector_nodes_per_axis}")

    @property
    def digest(self) -> str:
        # workers does not change any number, so it stays out of the digest
        payload = {k: v for k, v in asdict(self).items() if k != 'workers'}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()[:16]


@dataclass(frozen=True)
class NestedGrid:
    """Outer nodes (N,) with absolute weights and inner nodes (N, M).

    For a y-outer grid the inner weights are normalized posterior weights and
    `evidence` holds the marginal density at each outer node; for a
    theta-outer grid they are the raw likelihood weights of y | theta.
    """
    outer: np.ndarray
    outer_weights: np.ndarray
    inner: np.ndarray
    inner_weights: np.ndarray
    evidence: Optional[np.ndarray] = None

    def inner_expect(self, values) -> np.ndarray:
        values = np.broadcast_to(values, self.inner.shape)
        return np.sum(self.inner_weights * values, axis=1)

    def expect(self, values) -> float:
        return float(np.sum(self.outer_weights * self.inner_expect(values)))


# ---------------------------------------------------------------------------
# Node generation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def segment_rule(lo, hi, breaks, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on rows of [lo, hi] split at `breaks`.

    lo, hi have shape (N,); breaks has shape (N, K). Breaks outside a row's
    window are clipped onto its ends and yield empty segments, so every row
    carries the same node count. Returns nodes and weights of shape (N, S*m).
    """
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.maximum(np.asarray(hi, dtype=float)[:, None], lo)
    breaks = np.asarray(breaks, dtype=float).reshape(lo.shape[0], -1)
    points = np.sort(np.concatenate([lo, np.clip(breaks, lo, hi), hi], axis=1), axis=1)
    a, b = points[:, :-1], points[:, 1:]
    n_seg = a.shape[1]
    m = n if n_seg == 1 else max(MIN_SEGMENT_NODES, -(-n // n_seg))
    x, w = gauss_legendre(m)
    half = (b - a)[:, :, None] / 2.0
    mid = (a + b)[:, :, None] / 2.0
    nodes = (mid + half * x).reshape(lo.shape[0], -1)
    weights = (half * w).reshape(lo.shape[0], -1)
    return nodes, weights


def _shift_margin(shifts: Sequence[float]) -> float:
    return 2.0 * max((abs(d) for d in shifts), default=0.0)


def theta_window(model: ScalarModel, cfg: IntegrationConfig, shifts: Sequence[float] = ()) -> Tuple[float, float]:
    half = cfg.tail_sigmas * model.prior_sd + _shift_margin(shifts)
    space = model.parameter_space
    return max(space.lo, model.prior_mean - half), min(space.hi, model.prior_mean + half)


def offset_window(model: ScalarModel, cfg: IntegrationConfig, shifts: Sequence[float] = ()) -> Tuple[float, float]:
    """Window for y - theta; exact when the offset support is bounded."""
    if model.offset_support is not None:
        return model.offset_support
    if model.noise_sd is None:
        raise InvalidSpec(f"{model.name}: continuous model declares neither noise_sd nor offset_support")
    half = cfg.tail_sigmas * model.noise_sd + _shift_margin(shifts)
    return -half, half


def _offset_breaks(model: ScalarModel, shifts: Sequence[float]) -> list:
    # p(y | theta + d) switches on and off where y - theta crosses d + a and d + b
    if model.offset_support is None:
        return []
    a, b = model.offset_support
    return sorted({d + a for d in shifts} | {d + b for d in shifts})


def _check_supported(model: ScalarModel):
    if model.theta_discrete != model.y_discrete:
        raise InvalidSpec(f"{model.name}: mixed discrete/continuous models are not supported")


# ---------------------------------------------------------------------------
# Nested grids
# ---------------------------------------------------------------------------

def theta_outer_grid(
    model: ScalarModel,
    cfg: IntegrationConfig,
    shifts: Sequence[float] = (),
    thetas=None,
) -> NestedGrid:
    """Prior-weighted theta nodes, each with the y | theta rule."""
    _check_supported(model)
    if model.theta_discrete:
        theta = np.array(model.parameter_space.values) if thetas is None else np.atleast_1d(np.asarray(thetas, dtype=float))
        y = np.broadcast_to(np.array(model.observation_space.values), (theta.size, len(model.observation_space.values)))
        return NestedGrid(
            outer=theta,
            outer_weights=model.prior(theta),
            inner=y,
            inner_weights=model.likelihood(y, theta[:, None]),
        )

    if thetas is None:
        lo, hi = theta_window(model, cfg, shifts)
        nodes, weights = segment_rule([lo], [hi], np.empty((1, 0)), cfg.nodes_per_axis)
        theta, outer_weights = nodes[0], weights[0] * model.prior(nodes[0])
    else:
        theta = np.atleast_1d(np.asarray(thetas, dtype=float))
        outer_weights = model.prior(theta)

    u_lo, u_hi = offset_window(model, cfg, shifts)
    breaks = np.array([_offset_breaks(model, shifts)])
    u, wu = segment_rule([u_lo], [u_hi], breaks, cfg.nodes_per_axis)
    y = theta[:, None] + u
    return NestedGrid(
        outer=theta,
        outer_weights=outer_weights,
        inner=y,
        inner_weights=wu * model.likelihood(y, theta[:, None]),
    )


def y_outer_grid(
    model: ScalarModel,
    cfg: IntegrationConfig,
    shifts: Sequence[float] = (),
    ys=None,
) -> NestedGrid:
    """Marginal-weighted y nodes, each with the theta | y posterior rule."""
    _check_supported(model)
    if model.y_discrete:
        y = np.array(model.observation_space.values) if ys is None else np.atleast_1d(np.asarray(ys, dtype=float))
        outer_rule = np.ones_like(y)
        theta = np.broadcast_to(np.array(model.parameter_space.values), (y.size, len(model.parameter_space.values)))
        raw = model.prior(theta) * model.likelihood(y[:, None], theta)
    else:
        t_lo, t_hi = theta_window(model, cfg, shifts)
        u_lo, u_hi = offset_window(model, cfg, shifts)
        if ys is None:
            nodes, weights = segment_rule([t_lo + u_lo], [t_hi + u_hi], np.empty((1, 0)), cfg.nodes_per_axis)
            y, outer_rule = nodes[0], weights[0]
        else:
            y = np.atleast_1d(np.asarray(ys, dtype=float))
            outer_rule = np.ones_like(y)
        lo = np.maximum(t_lo, y - u_hi)
        hi = np.minimum(t_hi, y - u_lo)
        # theta + d leaves the support of p(y | .) where y - theta - d crosses a or b
        breaks = y[:, None] - np.array(_offset_breaks(model, shifts))[None, :]
        theta, wt = segment_rule(lo, hi, breaks, cfg.nodes_per_axis)
        raw = wt * model.prior(theta) * model.likelihood(y[:, None], theta)

    evidence = np.sum(raw, axis=1)
    usable = evidence >= EVIDENCE_FLOOR
    safe = np.where(usable, evidence, 1.0)
    posterior = np.where(usable[:, None], raw / safe[:, None], 0.0)
    return NestedGrid(
        outer=y,
        outer_weights=outer_rule * np.where(usable, evidence, 0.0),
        inner=theta,
        inner_weights=posterior,
        evidence=evidence,
    )


def _require_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        bad = int(np.size(values) - np.count_nonzero(np.isfinite(values)))
        raise NonFinite(f"{what}: integrand is not finite at {bad} node(s)")


def evaluate_on(grid: NestedGrid, f: Callable, y_outer: bool, what: str = "integrand") -> np.ndarray:
    """Evaluate f(y, theta) at every inner node of a grid."""
    if y_outer:
        values = f(grid.outer[:, None], grid.inner)
    else:
        values = f(grid.inner, grid.outer[:, None])
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.inner.shape)
    _require_finite(values, what)
    return values


# ---------------------------------------------------------------------------
# Public expectations
# ---------------------------------------------------------------------------

def expect_joint(
    model: ScalarModel,
    f: Callable,
    cfg: IntegrationConfig,
    shifts: Sequence[float] = (),
    order: str = 'y',
) -> float:
    """E[f(y, theta)] over the joint law; order selects the outer variable."""
    if order == 'y':
        grid = y_outer_grid(model, cfg, shifts)
    elif order == 'theta':
        grid = theta_outer_grid(model, cfg, shifts)
    else:
        raise InvalidSpec(f"order must be 'y' or 'theta', got {order!r}")
    return grid.expect(evaluate_on(grid, f, y_outer=(order == 'y')))


def expect_given_theta(
    model: ScalarModel,
    f: Callable,
    theta: float,
    cfg: IntegrationConfig,
    shifts: Sequence[float] = (),
) -> float:
    """E[f(y) | theta]."""
    grid = theta_outer_grid(model, cfg, shifts, thetas=[theta])
    values = evaluate_on(grid, lambda y, t: f(y), y_outer=False)
    return float(grid.inner_expect(values)[0])


def expect_given_y(
    model: ScalarModel,
    f: Callable,
    y: float,
    cfg: IntegrationConfig,
    shifts: Sequence[float] = (),
) -> float:
    """E[f(theta) | y] under the posterior."""
    grid = y_outer_grid(model, cfg, shifts, ys=[y])
    if grid.evidence[0] < EVIDENCE_FLOOR:
        raise ZeroEvidence(f"{model.name}: marginal density at y={y} is {grid.evidence[0]:.3g}")
    values = evaluate_on(grid, lambda yy, t: f(t), y_outer=True)
    return float(grid.inner_expect(values)[0])


def posterior_mean(model: ScalarModel, y, cfg: IntegrationConfig, strict: bool = True):
    """E(theta | y), analytic when the model provides it.

    With strict=False observations of zero evidence map to 0 instead of
    raising; integrands use this where such nodes carry zero weight.
    """
    y = np.asarray(y, dtype=float)
    if model.analytic_posterior_mean is not None:
        result = np.asarray(model.analytic_posterior_mean(y), dtype=float)
        return float(result) if result.ndim == 0 else result

    flat = y.reshape(-1)
    if model.y_discrete:
        keys, inverse = np.unique(flat, return_inverse=True)
        means = _posterior_means(model, keys, cfg, strict)[inverse]
    else:
        means = np.concatenate([
            _posterior_means(model, flat[i:i + POSTERIOR_CHUNK], cfg, strict)
            for i in range(0, flat.size, POSTERIOR_CHUNK)
        ]) if flat.size else flat
    result = means.reshape(y.shape)
    return float(result) if result.ndim == 0 else result


def _posterior_means(model: ScalarModel, ys: np.ndarray, cfg: IntegrationConfig, strict: bool) -> np.ndarray:
    grid = y_outer_grid(model, cfg, ys=ys)
    if strict and np.any(grid.evidence < EVIDENCE_FLOOR):
        worst = ys[np.argmin(grid.evidence)]
        raise ZeroEvidence(f"{model.name}: marginal density at y={worst} is below {EVIDENCE_FLOOR}")
    return grid.inner_expect(grid.inner)


def posterior_variance(model: ScalarModel, y, cfg: IntegrationConfig) -> float:
    """E[(theta - E(theta|y))^2 | y]."""
    mean = posterior_mean(model, y, cfg)
    return expect_given_y(model, lambda t: (t - mean) ** 2, y, cfg)


def check_normalization(model: ScalarModel, cfg: IntegrationConfig, tol: float = NORMALIZATION_TOL) -> float:
    """Largest deviation from 1 of the prior mass and of p(. | theta) at 11 probes."""
    _check_supported(model)
    if model.theta_discrete:
        prior_total = float(np.sum(model.prior(np.array(model.parameter_space.values))))
        probes = np.array(model.parameter_space.values)
    else:
        lo, hi = theta_window(model, cfg)
        nodes, weights = segment_rule([lo], [hi], np.empty((1, 0)), cfg.nodes_per_axis)
        prior_total = float(np.sum(weights[0] * model.prior(nodes[0])))
        probes = model.prior_mean + np.linspace(-3.0, 3.0, 11) * model.prior_sd

    grid = theta_outer_grid(model, cfg, thetas=probes)
    likelihood_totals = np.sum(grid.inner_weights, axis=1)
    deviation = max(abs(prior_total - 1.0), float(np.max(np.abs(likelihood_totals - 1.0))))
    if deviation > tol:
        raise InvalidSpec(f"{model.name}: normalization deviates from 1 by {deviation:.3g}")
    return deviation


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def task_seed(seed: int, task_index: int) -> int:
    """Sub-seed for the task_index-th parallel task."""
    return (seed ^ (task_index * GOLDEN_GAMMA)) & UINT64_MASK


def mc_expect_joint(model: ScalarModel, f: Callable, samples: int, seed: int) -> Tuple[float, float]:
    """Ancestral-sampling estimate of E[f(y, theta)] and its standard error."""
    if samples < 1000:
        raise InvalidSpec(f"mc_expect_joint needs at least 1000 samples, got {samples}")
    if model.sampler is None:
        raise UnsupportedSampling(f"{model.name} has no sampler")
    rng = np.random.default_rng(seed)
    theta, y = model.sampler(rng, samples)
    values = np.broadcast_to(np.asarray(f(y, theta), dtype=float), theta.shape)
    _require_finite(values, "monte carlo integrand")
    estimate = float(np.mean(values))
    std_error = float(np.std(values, ddof=1) / np.sqrt(samples))
    logger.debug("mc estimate %.6g +/- %.3g from %d samples (seed %d)", estimate, std_error, samples, seed)
    return estimate, std_error
