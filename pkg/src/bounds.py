"""
Exact Bayes risk and the Cauchy-Schwarz family of Bayes-risk lower bounds.

Flavors:
  global           E^2[(t - E(t|y)) psi] / var[psi]
  conditional      the same under the posterior at one y
  avg_conditional  y-average of the conditional ratio
  avg_theta        theta-average of E^2[(t - E(t|y)) psi | t] / E[psi^2 | t]
  ww               E^2[t psi] / E[psi^2], valid when E[psi | y] = 0
  ww_conditional   the same under the posterior at one y
  asymptotic       prior average of 1 / Fisher information

Soft failures (degenerate denominators, non-regular models) are reported
through BoundResult.status; exceptions are reserved for invalid input and
integration breakdowns.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConditionViolated, InvalidSpec, ZeroEvidence
from .integrate import (
    EVIDENCE_FLOOR,
    IntegrationConfig,
    NestedGrid,
    evaluate_on,
    expect_joint,
    posterior_mean,
    theta_outer_grid,
    y_outer_grid,
)
from .model import Estimator, ScalarModel, y_probes
from .testfn import PsiSpec, check_zero_condition, psi_function

logger = logging.getLogger(__name__)

FLAVORS = ('global', 'conditional', 'avg_conditional', 'avg_theta', 'ww', 'ww_conditional', 'asymptotic', 'exact_risk')
STATUSES = ('ok', 'degenerate_denominator', 'non_regular', 'unsupported')

DEGENERATE_REL = 1e-14
WEIGHT_FLOOR = 1e-12
FISHER_FLOOR = 1e-12
FD_STEP = 1e-5
RICHARDSON_TOL = 1e-4
WW_CONDITION_TOL = 1e-6
MIN_LIMIT_H = 1e-3

ASYMPTOTIC_NOTE = "valid as a lower bound only in the large-information regime"
EXCEEDS_RISK_NOTE = "exceeds the exact Bayes risk: outside the asymptotic regime"


@dataclass(frozen=True)
class BoundResult:
    flavor: str
    status: str
    value: Optional[float]
    numerator: Optional[float] = None
    denominator: Optional[float] = None
    meta: Dict[str, float] = field(default_factory=dict)
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise InvalidSpec(f"unknown flavor {self.flavor!r}")
        if self.status not in STATUSES:
            raise InvalidSpec(f"unknown status {self.status!r}")
        if self.status != 'ok' and self.value is not None:
            raise InvalidSpec("a non-ok BoundResult carries no value")

    @property
    def ok(self) -> bool:
        return self.status == 'ok'


@dataclass(frozen=True)
class LimitRow:
    h: float
    bound: float
    numerator_scaled: float
    denominator_scaled: float
    bound_deviation: float
    numerator_deviation: float
    denominator_deviation: float


@dataclass(frozen=True)
class LimitReport:
    status: str
    rows: Tuple[LimitRow, ...] = ()
    target_bound: Optional[float] = None
    target_numerator: Optional[float] = None
    target_denominator: Optional[float] = None
    monotone: Optional[bool] = None
    order: Optional[float] = None


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _is_degenerate(denominator: float, second_moment: float) -> bool:
    return not denominator >= DEGENERATE_REL * max(1.0, second_moment)


def _ratio_result(flavor, numerator, denominator, second_moment, meta, notes=()) -> BoundResult:
    if _is_degenerate(denominator, second_moment):
        return BoundResult(flavor, 'degenerate_denominator', None, numerator, denominator, meta, notes)
    return BoundResult(flavor, 'ok', numerator / denominator, numerator, denominator, meta, notes)


def _spec_meta(spec: PsiSpec) -> Dict[str, float]:
    meta = {}
    if spec.h is not None:
        meta['h'] = float(spec.h)
    if spec.s is not None:
        meta['s'] = float(spec.s)
    return meta


def _grid_posterior_mean(model: ScalarModel, grid: NestedGrid, cfg: IntegrationConfig) -> np.ndarray:
    """Posterior mean at the outer nodes of a y-outer grid."""
    if model.analytic_posterior_mean is not None:
        return posterior_mean(model, grid.outer, cfg)
    return grid.inner_expect(grid.inner)


def _posterior_terms(model: ScalarModel, spec: PsiSpec, cfg: IntegrationConfig, ys=None):
    """Per-y posterior moments of psi on a y-outer grid.

    Returns the grid and, per outer node, E[psi|y], E[psi^2|y],
    E[(t - E(t|y)) psi | y] and E[t psi | y].
    """
    grid = y_outer_grid(model, cfg, spec.shifts, ys=ys)
    if ys is not None and np.any(grid.evidence < EVIDENCE_FLOOR):
        raise ZeroEvidence(f"{model.name}: marginal density at y={ys} is below {EVIDENCE_FLOOR}")
    psi = evaluate_on(grid, psi_function(spec, model, cfg), y_outer=True, what=f"psi {spec.label}")
    error = grid.inner - _grid_posterior_mean(model, grid, cfg)[:, None]
    return (
        grid,
        grid.inner_expect(psi),
        grid.inner_expect(psi * psi),
        grid.inner_expect(error * psi),
        grid.inner_expect(grid.inner * psi),
    )


def _theta_terms(model: ScalarModel, spec: PsiSpec, cfg: IntegrationConfig):
    """Per-theta moments E[(t - E(t|y)) psi | t] and E[psi^2 | t] on a theta-outer grid."""
    grid = theta_outer_grid(model, cfg, spec.shifts)
    psi = evaluate_on(grid, psi_function(spec, model, cfg), y_outer=False, what=f"psi {spec.label}")
    if spec.family == 'optimal':
        error = psi
    else:
        error = grid.outer[:, None] - posterior_mean(model, grid.inner, cfg, strict=False)
    return grid, grid.inner_expect(error * psi), grid.inner_expect(psi * psi)


def _weighted_ratio_average(weights, numerators, denominators, second_moments):
    """Weighted average of numerators^2 / denominators.

    Returns None when a row with non-negligible weight has a degenerate
    denominator; rows of negligible weight are dropped.
    """
    degenerate = ~(denominators >= DEGENERATE_REL * np.maximum(1.0, second_moments))
    if np.any(degenerate & (weights > WEIGHT_FLOOR)):
        return None
    safe = np.where(degenerate, 1.0, denominators)
    ratios = np.where(degenerate, 0.0, numerators ** 2 / safe)
    return float(np.sum(weights * ratios) / np.sum(weights))


# ---------------------------------------------------------------------------
# Exact risk
# ---------------------------------------------------------------------------

def bayes_risk_exact(model: ScalarModel, cfg: IntegrationConfig) -> BoundResult:
    """E[(theta - E(theta|y))^2], the attainable Bayes risk."""
    grid = y_outer_grid(model, cfg)
    error = grid.inner - _grid_posterior_mean(model, grid, cfg)[:, None]
    risk = grid.expect(error ** 2)
    return BoundResult('exact_risk', 'ok', risk, risk, 1.0)


def mse_of_estimator(model: ScalarModel, estimator: Estimator, cfg: IntegrationConfig) -> float:
    """E[(theta - delta(y))^2] for a vectorized estimator."""
    return expect_joint(model, lambda y, theta: (theta - estimator(y)) ** 2, cfg)


# ---------------------------------------------------------------------------
# General (posterior-mean) forms
# ---------------------------------------------------------------------------

def bound_global(model: ScalarModel, spec: PsiSpec, cfg: IntegrationConfig) -> BoundResult:
    """E^2[(theta - E(theta|y)) psi] / var[psi]."""
    grid, e_psi, e_psi2, e_cross, _ = _posterior_terms(model, spec, cfg)
    weights = grid.outer_weights / np.sum(grid.outer_weights)
    mean_psi = float(np.sum(weights * e_psi))
    second = float(np.sum(weights * e_psi2))
    cross = float(np.sum(weights * e_cross))
    meta = _spec_meta(spec)
    meta['mean_psi'] = mean_psi
    return _ratio_result('global', cross ** 2, second - mean_psi ** 2, second, meta)


def bound_conditional(model: ScalarModel, spec: PsiSpec, y: float, cfg: IntegrationConfig) -> BoundResult:
    """E^2[(theta - E(theta|y)) psi | y] / var[psi | y] at one observation."""
    _, e_psi, e_psi2, e_cross, _ = _posterior_terms(model, spec, cfg, ys=[y])
    meta = _spec_meta(spec)
    meta['y'] = float(y)
    variance = float(e_psi2[0] - e_psi[0] ** 2)
    return _ratio_result('conditional', float(e_cross[0]) ** 2, variance, float(e_psi2[0]), meta)


def bound_avg_conditional(model: ScalarModel, spec: PsiSpec, cfg: IntegrationConfig) -> BoundResult:
    """E_y{ E^2[(theta - E(theta|y)) psi | y] / var[psi | y] }."""
    grid, e_psi, e_psi2, e_cross, _ = _posterior_terms(model, spec, cfg)
    weights = grid.outer_weights
    variance = e_psi2 - e_psi ** 2
    value = _weighted_ratio_average(weights, e_cross, variance, e_psi2)
    total = np.sum(weights)
    numerator = float(np.sum(weights * e_cross ** 2) / total)
    denominator = float(np.sum(weights * variance) / total)
    meta = _spec_meta(spec)
    if value is None:
        return BoundResult('avg_conditional', 'degenerate_denominator', None, numerator, denominator, meta)
    return BoundResult('avg_conditional', 'ok', value, numerator, denominator, meta)


def bound_avg_theta(model: ScalarModel, spec: PsiSpec, cfg: IntegrationConfig) -> BoundResult:
    """E_theta{ E^2[(theta - E(theta|y)) psi | theta] / E[psi^2 | theta] }."""
    grid, e_cross, e_psi2 = _theta_terms(model, spec, cfg)
    weights = grid.outer_weights
    value = _weighted_ratio_average(weights, e_cross, e_psi2, e_psi2)
    total = np.sum(weights)
    numerator = float(np.sum(weights * e_cross ** 2) / total)
    denominator = float(np.sum(weights * e_psi2) / total)
    meta = _spec_meta(spec)
    if value is None:
        return BoundResult('avg_theta', 'degenerate_denominator', None, numerator, denominator, meta)
    return BoundResult('avg_theta', 'ok', value, numerator, denominator, meta)


# ---------------------------------------------------------------------------
# Weiss-Weinstein forms
# ---------------------------------------------------------------------------

def _ww_spec(h: float, s: float) -> PsiSpec:
    if s is None or not 0.0 < s < 1.0:
        raise InvalidSpec(f"the ww bound needs 0 < s < 1, got {s}")
    return PsiSpec('ww', h=h, s=s)


def _require_condition(model, spec, probes, cfg):
    report = check_zero_condition(model, spec, probes, cfg, tol=WW_CONDITION_TOL)
    if not report.passed:
        raise ConditionViolated(
            f"E[psi|y] reaches {report.max_deviation:.3g} for {spec.label} on {model.name}"
        )
    return report


def bound_ww(model: ScalarModel, h: float, s: float, cfg: IntegrationConfig) -> BoundResult:
    """E^2[theta psi] / E[psi^2] with the joint-ratio psi."""
    spec = _ww_spec(h, s)
    report = _require_condition(model, spec, y_probes(model), cfg)
    grid, e_psi, e_psi2, e_cross, e_theta_psi = _posterior_terms(model, spec, cfg)
    weights = grid.outer_weights / np.sum(grid.outer_weights)
    second = float(np.sum(weights * e_psi2))
    theta_psi = float(np.sum(weights * e_theta_psi))

    # the general form must agree once E[psi|y] = 0
    mean_psi = float(np.sum(weights * e_psi))
    cross = float(np.sum(weights * e_cross))
    variance = second - mean_psi ** 2
    general = cross ** 2 / variance if not _is_degenerate(variance, second) else float('nan')

    meta = _spec_meta(spec)
    meta['condition_deviation'] = report.max_deviation
    result = _ratio_result('ww', theta_psi ** 2, second, second, meta)
    if result.ok:
        meta['general_form_gap'] = abs(result.value - general)
    return result


def bound_ww_conditional(model: ScalarModel, h: float, s: float, y: float, cfg: IntegrationConfig) -> BoundResult:
    """E^2[theta psi | y] / E[psi^2 | y] at one observation."""
    spec = _ww_spec(h, s)
    report = _require_condition(model, spec, [y], cfg)
    grid, e_psi, e_psi2, e_cross, e_theta_psi = _posterior_terms(model, spec, cfg, ys=[y])
    mean = _grid_posterior_mean(model, grid, cfg)[0]
    meta = _spec_meta(spec)
    meta['y'] = float(y)
    meta['condition_deviation'] = report.max_deviation
    meta['posterior_variance'] = float(grid.inner_expect((grid.inner - mean) ** 2)[0])
    variance = float(e_psi2[0] - e_psi[0] ** 2)
    if not _is_degenerate(variance, float(e_psi2[0])):
        general = float(e_cross[0]) ** 2 / variance
    else:
        general = float('nan')
    result = _ratio_result('ww_conditional', float(e_theta_psi[0]) ** 2, float(e_psi2[0]), float(e_psi2[0]), meta)
    if result.ok:
        meta['general_form_gap'] = abs(result.value - general)
    return result


# ---------------------------------------------------------------------------
# Fisher information and the asymptotic bound
# ---------------------------------------------------------------------------

def _log_likelihood(model: ScalarModel, y, theta) -> np.ndarray:
    if model.log_likelihood is not None:
        return model.log_likelihood(y, theta)
    with np.errstate(divide='ignore'):
        return np.log(model.likelihood(y, theta))


def _support_is_stable(model: ScalarModel, y, theta, eps: float) -> bool:
    """True when p(y | theta +- eps) > 0 wherever p(y | theta) > 0, edges included."""
    inside = model.likelihood(y, theta) > 0
    for shift in (eps, -eps):
        if np.any(inside & ~(model.likelihood(y, theta + shift) > 0)):
            return False
    if model.offset_support is not None:
        a, b = model.offset_support
        edges = theta + np.array([a + eps / 2.0, b - eps / 2.0])
        for shift in (eps, -eps):
            if np.any(~(model.likelihood(edges, theta + shift) > 0)):
                return False
    return True


def _fd_score(model: ScalarModel, y, theta, eps: float) -> np.ndarray:
    with np.errstate(invalid='ignore'):
        return (_log_likelihood(model, y, theta + eps) - _log_likelihood(model, y, theta - eps)) / (2.0 * eps)


def fisher_information(model: ScalarModel, cfg: IntegrationConfig, thetas=None):
    """E[score^2 | theta] on the prior grid (or at given thetas).

    Returns (grid, information, reason); reason is None for a regular model
    and a short text naming the failed regularity probe otherwise.
    """
    grid = theta_outer_grid(model, cfg, thetas=thetas)
    theta = grid.outer[:, None]
    if model.analytic_score is not None:
        information = grid.inner_expect(model.analytic_score(grid.inner, theta) ** 2)
        return grid, information, None

    if not _support_is_stable(model, grid.inner, theta, FD_STEP):
        return grid, None, "likelihood support shifts with theta"

    coarse = grid.inner_expect(np.nan_to_num(_fd_score(model, grid.inner, theta, FD_STEP), nan=np.inf) ** 2)
    fine = grid.inner_expect(np.nan_to_num(_fd_score(model, grid.inner, theta, FD_STEP / 2.0), nan=np.inf) ** 2)
    if not (np.all(np.isfinite(coarse)) and np.all(np.isfinite(fine))):
        return grid, None, "score diverges"
    scale = np.maximum(np.abs(fine), FISHER_FLOOR)
    if np.any(np.abs(coarse - fine) > RICHARDSON_TOL * scale):
        return grid, None, "finite-difference score does not settle"
    return grid, fine, None


def bound_asymptotic(model: ScalarModel, cfg: IntegrationConfig) -> BoundResult:
    """E_theta{ 1 / I(theta) }; reports a value, never asserts it bounds the risk."""
    notes = [ASYMPTOTIC_NOTE]
    grid, information, reason = fisher_information(model, cfg)
    weights = grid.outer_weights
    if reason is None and np.any((information < FISHER_FLOOR) & (weights > WEIGHT_FLOOR)):
        reason = "Fisher information vanishes"
    if reason is not None:
        logger.info("asymptotic bound on %s is non-regular: %s", model.name, reason)
        return BoundResult('asymptotic', 'non_regular', None, meta={}, notes=tuple(notes + [reason]))

    usable = information >= FISHER_FLOOR
    inverse = np.where(usable, 1.0 / np.where(usable, information, 1.0), 0.0)
    value = float(np.sum(weights * inverse) / np.sum(weights))
    meta = {'mean_information': float(np.sum(weights * information) / np.sum(weights))}

    risk = bayes_risk_exact(model, cfg).value
    meta['exact_risk'] = risk
    if value > risk:
        notes.append(EXCEEDS_RISK_NOTE)
        logger.warning("asymptotic bound %.6g exceeds the exact risk %.6g on %s", value, risk, model.name)
    return BoundResult('asymptotic', 'ok', value, 1.0, 1.0 / value, meta, tuple(notes))


# ---------------------------------------------------------------------------
# h -> 0 limit of the conditional-ratio family
# ---------------------------------------------------------------------------

def _validate_h_sequence(h_sequence: Sequence[float]) -> Tuple[float, ...]:
    hs = tuple(float(h) for h in h_sequence)
    if not hs:
        raise InvalidSpec("h_sequence must be nonempty")
    if any(h <= 0 for h in hs):
        raise InvalidSpec(f"h_sequence must be positive, got {hs}")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise InvalidSpec(f"h_sequence must be strictly decreasing, got {hs}")
    if hs[-1] < MIN_LIMIT_H:
        raise InvalidSpec(f"h_sequence must stay >= {MIN_LIMIT_H}, got {hs[-1]}")
    return hs


def _non_increasing(values, slack: float = 1e-9) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def limit_check_small_shift(
    model: ScalarModel,
    s: float,
    h_sequence: Sequence[float],
    cfg: IntegrationConfig,
) -> LimitReport:
    """Track the conditional-ratio bound (s = 1) and its two ingredients as h -> 0.

    Targets: E_t[I(t)] for E[psi^2|t]/h^2, -E_t[d/dt E(delta0|t)] for
    E[(t - delta0) psi|t]/h, and E_t[(d/dt E(delta0|t))^2 / I(t)] for the bound.
    The slope d/dt E(delta0|t) is evaluated as E[delta0 * score | t], which
    holds when the support of p(y|t) does not move with t.
    """
    if s != 1.0:
        raise InvalidSpec(f"the limit check runs at s = 1, got {s}")
    hs = _validate_h_sequence(h_sequence)
    if model.analytic_score is None:
        return LimitReport(status='non_regular')

    grid = theta_outer_grid(model, cfg)
    theta = grid.outer[:, None]
    score = model.analytic_score(grid.inner, theta)
    information = grid.inner_expect(score ** 2)
    slope = grid.inner_expect(posterior_mean(model, grid.inner, cfg, strict=False) * score)
    weights = grid.outer_weights / np.sum(grid.outer_weights)
    target_denominator = float(np.sum(weights * information))
    target_numerator = -float(np.sum(weights * slope))
    target_bound = float(np.sum(weights * slope ** 2 / information))

    rows = []
    for h in hs:
        spec = PsiSpec('cond', h=h, s=1.0)
        h_grid, e_cross, e_psi2 = _theta_terms(model, spec, cfg)
        w = h_grid.outer_weights / np.sum(h_grid.outer_weights)
        bound = float(np.sum(w * e_cross ** 2 / e_psi2))
        numerator_scaled = float(np.sum(w * e_cross)) / h
        denominator_scaled = float(np.sum(w * e_psi2)) / h ** 2
        rows.append(LimitRow(
            h=h,
            bound=bound,
            numerator_scaled=numerator_scaled,
            denominator_scaled=denominator_scaled,
            bound_deviation=abs(bound - target_bound),
            numerator_deviation=abs(numerator_scaled - target_numerator),
            denominator_deviation=abs(denominator_scaled - target_denominator),
        ))
        logger.debug("limit check h=%g: bound %.10g, numerator/h %.10g, denominator/h^2 %.10g",
                     h, bound, numerator_scaled, denominator_scaled)

    monotone = all(
        _non_increasing([getattr(r, name) for r in rows])
        for name in ('bound_deviation', 'numerator_deviation', 'denominator_deviation')
    )
    order = None
    fit = [(r.h, r.bound_deviation) for r in rows if r.bound_deviation > 1e-14]
    if len(fit) >= 2:
        order = float(np.polyfit(np.log([f[0] for f in fit]), np.log([f[1] for f in fit]), 1)[0])

    return LimitReport(
        status='ok',
        rows=tuple(rows),
        target_bound=target_bound,
        target_numerator=target_numerator,
        target_denominator=target_denominator,
        monotone=monotone,
        order=order,
    )
