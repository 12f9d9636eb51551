"""
Sweeps and maximization of bound families over the free variables (h, s).

maximize() seeds on a 9x9 grid and refines the best seed by golden-section
search along h and s in turn. Ties within TIE_REL of the best value break
toward smaller |h|, then smaller s, so results are reproducible.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bounds import (
    BoundResult,
    bound_avg_conditional,
    bound_avg_theta,
    bound_conditional,
    bound_global,
    bound_ww,
    bound_ww_conditional,
)
from .errors import AllDegenerate, InvalidSpec, RiskBoundError
from .integrate import IntegrationConfig
from .model import ScalarModel
from .testfn import PsiSpec

logger = logging.getLogger(__name__)

SWEEP_FLAVORS = ('global', 'conditional', 'avg_conditional', 'avg_theta', 'ww', 'ww_conditional')
SEED_POINTS = 9
MAX_EVALUATIONS = 200
MAX_PASSES = 3
REL_TOL = 1e-4
TIE_REL = 1e-12
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SweepRow:
    h: float
    s: float
    flavor: str
    value: Optional[float]
    numerator: Optional[float]
    denominator: Optional[float]
    status: str


@dataclass(frozen=True)
class SweepTable:
    rows: Tuple[SweepRow, ...]
    model_digest: str
    cfg_digest: str

    def ok_rows(self) -> List[SweepRow]:
        return [r for r in self.rows if r.status == 'ok']

    def best_value(self) -> Optional[float]:
        values = [r.value for r in self.ok_rows()]
        return max(values) if values else None


@dataclass(frozen=True)
class Optimum:
    h_star: float
    s_star: float
    value: float
    evaluations: int
    converged: bool
    seed_value: float
    result: Optional[BoundResult] = None


# ---------------------------------------------------------------------------
# Single evaluation
# ---------------------------------------------------------------------------

def evaluate_bound(
    model: ScalarModel,
    family: str,
    flavor: str,
    h: Optional[float],
    s: Optional[float],
    cfg: IntegrationConfig,
    y: Optional[float] = None,
    custom_fn: Optional[Callable] = None,
) -> BoundResult:
    """Dispatch one (family, flavor) bound at (h, s)."""
    if flavor not in SWEEP_FLAVORS:
        raise InvalidSpec(f"flavor {flavor!r} has no free (h, s); expected one of {SWEEP_FLAVORS}")
    if flavor in ('conditional', 'ww_conditional') and y is None:
        raise InvalidSpec(f"flavor {flavor} needs an observation y")
    if flavor in ('ww', 'ww_conditional'):
        if family != 'ww':
            raise InvalidSpec(f"flavor {flavor} is defined for family ww only, got {family}")
        if flavor == 'ww':
            return bound_ww(model, h, s, cfg)
        return bound_ww_conditional(model, h, s, y, cfg)

    if family == 'custom':
        spec = PsiSpec('custom', custom_fn=custom_fn)
    elif family == 'optimal':
        spec = PsiSpec('optimal')
    else:
        spec = PsiSpec(family, h=h, s=s)
    if flavor == 'global':
        return bound_global(model, spec, cfg)
    if flavor == 'conditional':
        return bound_conditional(model, spec, y, cfg)
    if flavor == 'avg_conditional':
        return bound_avg_conditional(model, spec, cfg)
    return bound_avg_theta(model, spec, cfg)


def _safe_row(model, family, flavor, h, s, cfg, y, custom_fn) -> SweepRow:
    try:
        result = evaluate_bound(model, family, flavor, h, s, cfg, y, custom_fn)
    except RiskBoundError as exc:
        logger.warning("%s/%s at h=%g, s=%g on %s failed: %s", family, flavor, h, s, model.name, exc)
        return SweepRow(h, s, flavor, None, None, None, 'unsupported')
    return SweepRow(h, s, flavor, result.value, result.numerator, result.denominator, result.status)


def _evaluate_points(model, family, flavor, points, cfg, y, custom_fn) -> List[SweepRow]:
    def task(point):
        return _safe_row(model, family, flavor, point[0], point[1], cfg, y, custom_fn)

    if cfg.workers == 1 or len(points) == 1:
        return [task(p) for p in points]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(task, points))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def sweep(
    model: ScalarModel,
    family: str,
    flavor: str,
    h_grid: Sequence[float],
    s_grid: Sequence[float],
    cfg: IntegrationConfig,
    y: Optional[float] = None,
    custom_fn: Optional[Callable] = None,
) -> SweepTable:
    """One row per (h, s); failures become status rows and never abort the sweep."""
    if len(h_grid) == 0 or len(s_grid) == 0:
        raise InvalidSpec("sweep grids must be nonempty")
    points = sorted({(float(h), float(s)) for h in h_grid for s in s_grid})
    rows = _evaluate_points(model, family, flavor, points, cfg, y, custom_fn)
    failed = sum(1 for r in rows if r.status != 'ok')
    logger.info("sweep %s/%s on %s: %d rows, %d not ok", family, flavor, model.name, len(rows), failed)
    return SweepTable(rows=tuple(rows), model_digest=model.digest, cfg_digest=cfg.digest)


# ---------------------------------------------------------------------------
# Maximization
# ---------------------------------------------------------------------------

class _Evaluator:
    """Memoized objective with an evaluation budget; non-ok points score -inf."""

    def __init__(self, model, family, flavor, cfg, y, custom_fn):
        self.args = (model, family, flavor)
        self.cfg = cfg
        self.y = y
        self.custom_fn = custom_fn
        self.cache: Dict[Tuple[float, float], SweepRow] = {}

    @property
    def evaluations(self) -> int:
        return len(self.cache)

    @property
    def exhausted(self) -> bool:
        return self.evaluations >= MAX_EVALUATIONS

    def seed(self, points):
        rows = _evaluate_points(*self.args, points, self.cfg, self.y, self.custom_fn)
        for point, row in zip(points, rows):
            self.cache[point] = row

    def __call__(self, h: float, s: float) -> float:
        key = (float(h), float(s))
        if key not in self.cache:
            model, family, flavor = self.args
            self.cache[key] = _safe_row(model, family, flavor, key[0], key[1], self.cfg, self.y, self.custom_fn)
        row = self.cache[key]
        return row.value if row.status == 'ok' else -math.inf


def _golden_max(f: Callable[[float], float], a: float, b: float, tol: float, evaluator: _Evaluator):
    """Golden-section search for a maximum of f on [a, b].

    Returns (x, f(x), converged); converged is False when the budget ran out.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if evaluator.exhausted:
            return (c, fc, False) if fc >= fd else (d, fd, False)
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc, True) if fc >= fd else (d, fd, True)


def _lattice_shifts(model: ScalarModel, lo: float, hi: float) -> np.ndarray:
    # on a finite parameter space only support differences give a nonzero psi
    values = np.array(model.parameter_space.values, dtype=float)
    diffs = np.unique((values[:, None] - values[None, :]).reshape(-1))
    return diffs[(diffs != 0) & (diffs >= lo) & (diffs <= hi)]


def _check_range(name: str, bounds: Sequence[float]) -> Tuple[float, float]:
    if len(bounds) != 2:
        raise InvalidSpec(f"{name} must be a pair [lo, hi], got {bounds}")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise InvalidSpec(f"{name} must satisfy lo < hi, got {bounds}")
    return lo, hi


def _pick_best(rows: Sequence[SweepRow]) -> SweepRow:
    top = max(r.value for r in rows)
    ties = [r for r in rows if r.value >= top - TIE_REL * abs(top)]
    return min(ties, key=lambda r: (abs(r.h), r.s))


def maximize(
    model: ScalarModel,
    family: str,
    flavor: str,
    h_range: Sequence[float],
    s_range: Sequence[float],
    cfg: IntegrationConfig,
    y: Optional[float] = None,
    custom_fn: Optional[Callable] = None,
) -> Optimum:
    h_lo, h_hi = _check_range('h_range', h_range)
    s_lo, s_hi = _check_range('s_range', s_range)
    if not (0.0 < s_lo and s_hi <= 1.0):
        raise InvalidSpec(f"s_range must lie in (0, 1], got {s_range}")

    lattice = model.theta_discrete
    if lattice:
        h_seeds = _lattice_shifts(model, h_lo, h_hi)
        if h_seeds.size == 0:
            raise AllDegenerate(f"no support difference of {model.name} lies in h_range {h_range}")
    else:
        h_seeds = np.linspace(h_lo, h_hi, SEED_POINTS)
    s_seeds = np.linspace(s_lo, s_hi, SEED_POINTS)

    evaluator = _Evaluator(model, family, flavor, cfg, y, custom_fn)
    evaluator.seed([(float(h), float(s)) for h in h_seeds for s in s_seeds])
    seeds = [r for r in evaluator.cache.values() if r.status == 'ok']
    if not seeds:
        raise AllDegenerate(f"every seed point of {family}/{flavor} on {model.name} is degenerate")
    best = _pick_best(seeds)
    seed_max = max(r.value for r in seeds)
    h_star, s_star, value = best.h, best.s, best.value
    logger.debug("seed best %s/%s: h=%g s=%g value=%.10g", family, flavor, h_star, s_star, value)

    h_step = (h_hi - h_lo) / (SEED_POINTS - 1)
    s_step = (s_hi - s_lo) / (SEED_POINTS - 1)
    h_tol = REL_TOL * (h_hi - h_lo)
    s_tol = REL_TOL * (s_hi - s_lo)

    converged = True
    for _ in range(MAX_PASSES):
        improved = False
        axes = [('s', s_step, s_tol, s_lo, s_hi)] if lattice else [
            ('h', h_step, h_tol, h_lo, h_hi),
            ('s', s_step, s_tol, s_lo, s_hi),
        ]
        for axis, step, tol, lo, hi in axes:
            if evaluator.exhausted:
                converged = False
                break
            if axis == 'h':
                x, fx, done = _golden_max(lambda t: evaluator(t, s_star), max(lo, h_star - step),
                                          min(hi, h_star + step), tol, evaluator)
            else:
                x, fx, done = _golden_max(lambda t: evaluator(h_star, t), max(lo, s_star - step),
                                          min(hi, s_star + step), tol, evaluator)
            converged = converged and done
            if fx > value + TIE_REL * abs(value):
                if axis == 'h':
                    h_star = x
                else:
                    s_star = x
                value = fx
                improved = True
        if not improved or evaluator.exhausted:
            break
    else:
        # pass cap reached while still improving
        converged = False

    if evaluator.exhausted:
        converged = False
    assert value >= seed_max - TIE_REL * abs(seed_max)
    result = evaluate_bound(model, family, flavor, h_star, s_star, cfg, y, custom_fn)
    logger.info("maximize %s/%s on %s: h*=%g s*=%g value=%.10g after %d evaluations",
                family, flavor, model.name, h_star, s_star, value, evaluator.evaluations)
    return Optimum(
        h_star=float(h_star),
        s_star=float(s_star),
        value=float(value),
        evaluations=evaluator.evaluations,
        converged=converged,
        seed_value=float(seed_max),
        result=result,
    )
