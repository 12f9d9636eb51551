"""
Test functions psi(y, theta) and the E[psi | y] = 0 condition checker.

Families:
  ww       joint-density ratio (p(y, t+h)/p(y, t))^s - (p(y, t-h)/p(y, t))^(1-s)
  cond     the same with p(y | .) in place of p(y, .)
  optimal  theta - E(theta | y)
  custom   any vectorized callable (y, theta) -> real

All functions act on the reduced observation used by the integration engine.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpec, ZeroEvidence
from .integrate import EVIDENCE_FLOOR, IntegrationConfig, evaluate_on, posterior_mean, y_outer_grid
from .model import ScalarModel

logger = logging.getLogger(__name__)

FAMILIES = ('ww', 'cond', 'optimal', 'custom')
RATIO_FAMILIES = ('ww', 'cond')
DENSITY_FLOOR = 1e-300
CONDITION_TOL = 1e-8


@dataclass(frozen=True)
class PsiSpec:
    family: str
    h: Optional[float] = None
    s: Optional[float] = None
    custom_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown psi family {self.family!r}; expected one of {FAMILIES}")
        if self.family in RATIO_FAMILIES:
            if self.h is None or not np.isfinite(self.h) or self.h == 0:
                raise InvalidSpec(f"family {self.family} needs a finite nonzero h, got {self.h}")
            if self.s is None or not 0.0 < self.s <= 1.0:
                raise InvalidSpec(f"family {self.family} needs s in (0, 1], got {self.s}")
        if (self.custom_fn is not None) != (self.family == 'custom'):
            raise InvalidSpec("custom_fn must be given exactly when family is 'custom'")

    @property
    def shifts(self) -> Tuple[float, ...]:
        """Parameter shifts the function evaluates densities at."""
        if self.family in RATIO_FAMILIES:
            return (self.h, -self.h)
        return ()

    @property
    def label(self) -> str:
        if self.family in RATIO_FAMILIES:
            return f"{self.family}(h={self.h:g}, s={self.s:g})"
        return self.family


@dataclass(frozen=True)
class ConditionReport:
    max_deviation: float
    passed: bool
    tolerance: float
    probes: Tuple[float, ...]
    deviations: Tuple[float, ...]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _density(model: ScalarModel, y, theta, joint: bool) -> np.ndarray:
    value = model.likelihood(y, theta)
    if joint:
        value = value * model.prior(theta)
    return np.asarray(value, dtype=float)


def _log_density(model: ScalarModel, y, theta, joint: bool, linear: np.ndarray) -> np.ndarray:
    # the model's log path keeps Gaussian tails exact; otherwise log of the linear value
    has_log = model.log_likelihood is not None and (not joint or model.log_prior is not None)
    if has_log:
        value = model.log_likelihood(y, theta)
        if joint:
            value = value + model.log_prior(theta)
        return np.asarray(value, dtype=float)
    with np.errstate(divide='ignore'):
        return np.log(linear)


def _ratio_term(model, y, theta, shift, exponent, joint, base, log_base) -> np.ndarray:
    shifted_theta = theta + shift
    shifted = _density(model, y, shifted_theta, joint)
    log_shifted = _log_density(model, y, shifted_theta, joint, shifted)
    alive = (shifted > DENSITY_FLOOR) & (base > DENSITY_FLOOR)
    with np.errstate(invalid='ignore', over='ignore'):
        term = np.exp(exponent * (log_shifted - log_base))
    # 0^s := 0, so one vanishing shifted density never poisons the other term
    return np.where(alive, term, 0.0)


def eval_psi(spec: PsiSpec, model: ScalarModel, y, theta, cfg: Optional[IntegrationConfig] = None, strict: bool = True):
    """psi(y, theta) for broadcastable arrays; 0 wherever p(y, theta) (or p(y | theta)) is 0."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)

    if spec.family == 'optimal':
        value = theta - posterior_mean(model, y, cfg or IntegrationConfig(), strict=strict)
    elif spec.family == 'custom':
        value = np.broadcast_to(np.asarray(spec.custom_fn(y, theta), dtype=float), np.broadcast(y, theta).shape)
    else:
        joint = spec.family == 'ww'
        base = _density(model, y, theta, joint)
        log_base = _log_density(model, y, theta, joint, base)
        plus = _ratio_term(model, y, theta, spec.h, spec.s, joint, base, log_base)
        minus = _ratio_term(model, y, theta, -spec.h, 1.0 - spec.s, joint, base, log_base)
        value = np.where(base > DENSITY_FLOOR, plus - minus, 0.0)

    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def psi_function(spec: PsiSpec, model: ScalarModel, cfg: IntegrationConfig) -> Callable:
    """psi as an integrand f(y, theta) for the integration grids."""
    return lambda y, theta: eval_psi(spec, model, y, theta, cfg, strict=False)


# ---------------------------------------------------------------------------
# Zero condition
# ---------------------------------------------------------------------------

def check_zero_condition(
    model: ScalarModel,
    spec: PsiSpec,
    y_probes: Sequence[float],
    cfg: IntegrationConfig,
    tol: float = CONDITION_TOL,
) -> ConditionReport:
    """max over probes of |E[psi(y, theta) | y]| and a pass flag at `tol`."""
    probes = np.atleast_1d(np.asarray(y_probes, dtype=float))
    if probes.size == 0:
        raise InvalidSpec("check_zero_condition needs at least one y probe")

    grid = y_outer_grid(model, cfg, spec.shifts, ys=probes)
    if np.any(grid.evidence < EVIDENCE_FLOOR):
        worst = probes[np.argmin(grid.evidence)]
        raise ZeroEvidence(f"{model.name}: marginal density at y={worst} is below {EVIDENCE_FLOOR}")

    values = evaluate_on(grid, psi_function(spec, model, cfg), y_outer=True, what=f"psi {spec.label}")
    deviations = np.abs(grid.inner_expect(values))
    max_deviation = float(np.max(deviations))
    passed = max_deviation <= tol
    logger.debug("E[psi|y] check for %s on %s: max deviation %.3g", spec.label, model.name, max_deviation)
    return ConditionReport(
        max_deviation=max_deviation,
        passed=bool(passed),
        tolerance=tol,
        probes=tuple(float(p) for p in probes),
        deviations=tuple(float(d) for d in deviations),
    )
