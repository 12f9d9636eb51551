"""
Matrix bounds for vector parameters, targets and test functions.

The catalog vector model is linear Gaussian:

    theta ~ N(0, prior_cov),  y = H theta + n,  n ~ N(0, noise_cov),  g = G theta

Expectations use nested Gauss-Hermite rules in Cholesky coordinates, either
y-outer (marginal of y, then the posterior) or theta-outer (prior, then the
likelihood). With eps0 = g - E(g|y) and Psi a stacked vector test function,
each flavor returns C V^-1 C^T for the matching cross moment C and second
moment V.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import linalg

from .errors import InvalidSpec, NotSPD, NotSymmetric
from .integrate import IntegrationConfig

logger = logging.getLogger(__name__)

MATRIX_FLAVORS = ('global', 'conditional', 'avg_conditional', 'avg_theta')
MATRIX_STATUSES = ('ok', 'singular_psi_cov', 'non_psd_input')
COMPONENT_FAMILIES = ('ww', 'cond', 'optimal', 'custom')

MAX_DIM = 2
CONDITION_LIMIT = 1e12
DEGENERATE_REL = 1e-14
WEIGHT_FLOOR = 1e-12
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10
LOG_DENSITY_FLOOR = np.log(1e-300)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

def _gaussian_logpdf(x: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """log N(x; 0, L L^T) over the last axis of x."""
    d = chol.shape[0]
    flat = x.reshape(-1, d)
    solved = linalg.solve_triangular(chol, flat.T, lower=True)
    quad = np.sum(solved ** 2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return (-0.5 * (quad + log_det + d * np.log(2.0 * np.pi))).reshape(x.shape[:-1])


def _cholesky(matrix: np.ndarray, what: str) -> np.ndarray:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidSpec(f"{what} must be square, got shape {matrix.shape}")
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(matrix))):
        raise NotSPD(f"{what} is not symmetric")
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as exc:
        raise NotSPD(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class VectorModel:
    """Linear Gaussian vector model with closed-form posterior quantities."""
    H: np.ndarray
    prior_cov: np.ndarray
    noise_cov: np.ndarray
    target: np.ndarray
    prior_chol: np.ndarray
    noise_chol: np.ndarray
    marginal_chol: np.ndarray
    posterior_cov: np.ndarray
    posterior_chol: np.ndarray
    gain: np.ndarray
    name: str = 'linear_gaussian_vector'

    @property
    def parameter_dim(self) -> int:
        return self.H.shape[1]

    @property
    def observation_dim(self) -> int:
        return self.H.shape[0]

    @property
    def target_dim(self) -> int:
        return self.target.shape[0]

    @property
    def digest(self) -> str:
        payload = {
            'name': self.name,
            'H': self.H.tolist(),
            'prior_cov': self.prior_cov.tolist(),
            'noise_cov': self.noise_cov.tolist(),
            'target': self.target.tolist(),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()[:16]

    def target_fn(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float) @ self.target.T

    def log_prior(self, theta) -> np.ndarray:
        return _gaussian_logpdf(np.asarray(theta, dtype=float), self.prior_chol)

    def log_likelihood(self, y, theta) -> np.ndarray:
        residual = np.asarray(y, dtype=float) - np.asarray(theta, dtype=float) @ self.H.T
        return _gaussian_logpdf(residual, self.noise_chol)

    def posterior_mean(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.gain.T

    def posterior_mean_g(self, y) -> np.ndarray:
        return self.posterior_mean(y) @ self.target.T

    def target_posterior_cov(self) -> np.ndarray:
        return self.target @ self.posterior_cov @ self.target.T


def make_linear_gaussian_vector_model(H, prior_cov, noise_cov, target=None) -> VectorModel:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    prior_cov = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    m, p = H.shape
    if not (1 <= p <= MAX_DIM and 1 <= m <= MAX_DIM):
        raise InvalidSpec(f"parameter and observation dimensions must be 1 or 2, got p={p}, m={m}")
    if prior_cov.shape != (p, p):
        raise InvalidSpec(f"prior_cov must be {p}x{p}, got {prior_cov.shape}")
    if noise_cov.shape != (m, m):
        raise InvalidSpec(f"noise_cov must be {m}x{m}, got {noise_cov.shape}")
    target = np.eye(p) if target is None else np.atleast_2d(np.asarray(target, dtype=float))
    if target.shape[1] != p:
        raise InvalidSpec(f"target must have {p} columns, got shape {target.shape}")

    prior_chol = _cholesky(prior_cov, 'prior_cov')
    noise_chol = _cholesky(noise_cov, 'noise_cov')

    # P = (prior_cov^-1 + H^T R^-1 H)^-1, K = P H^T R^-1
    prior_precision = linalg.cho_solve((prior_chol, True), np.eye(p))
    noise_inv_H = linalg.cho_solve((noise_chol, True), H)
    precision = prior_precision + H.T @ noise_inv_H
    posterior_cov = linalg.cho_solve((_cholesky((precision + precision.T) / 2.0, 'posterior precision'), True), np.eye(p))
    posterior_cov = (posterior_cov + posterior_cov.T) / 2.0
    gain = posterior_cov @ noise_inv_H.T
    marginal = H @ prior_cov @ H.T + noise_cov

    model = VectorModel(
        H=H,
        prior_cov=prior_cov,
        noise_cov=noise_cov,
        target=target,
        prior_chol=prior_chol,
        noise_chol=noise_chol,
        marginal_chol=_cholesky((marginal + marginal.T) / 2.0, 'marginal covariance'),
        posterior_cov=posterior_cov,
        posterior_chol=_cholesky(posterior_cov, 'posterior covariance'),
        gain=gain,
    )
    logger.debug("vector model p=%d m=%d q=%d, posterior covariance %s", p, m, model.target_dim, posterior_cov.tolist())
    return model


# ---------------------------------------------------------------------------
# Vector test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiComponent:
    """One block of a stacked test function.

    ww / cond shift theta by h * direction; optimal contributes the q entries
    of eps0; custom maps (y, theta) to one real.
    """
    family: str
    direction: Tuple[float, ...] = ()
    h: Optional[float] = None
    s: Optional[float] = None
    custom_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in COMPONENT_FAMILIES:
            raise InvalidSpec(f"unknown psi component family {self.family!r}")
        if self.family in ('ww', 'cond'):
            if self.h is None or not np.isfinite(self.h) or self.h == 0:
                raise InvalidSpec(f"component {self.family} needs a finite nonzero h, got {self.h}")
            if self.s is None or not 0.0 < self.s <= 1.0:
                raise InvalidSpec(f"component {self.family} needs s in (0, 1], got {self.s}")
            if not self.direction or not any(self.direction):
                raise InvalidSpec(f"component {self.family} needs a nonzero direction")
        if (self.custom_fn is not None) != (self.family == 'custom'):
            raise InvalidSpec("custom_fn must be given exactly when family is 'custom'")


@dataclass(frozen=True)
class VectorPsiSpec:
    components: Tuple[PsiComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise InvalidSpec("a vector test function needs at least one component")

    def dim(self, vmodel: VectorModel) -> int:
        return sum(vmodel.target_dim if c.family == 'optimal' else 1 for c in self.components)


def stacked_ratio_psi(family: str, hs: Sequence[float], s: float, parameter_dim: int) -> VectorPsiSpec:
    """One ratio component per coordinate axis, the i-th shifted by hs[i]."""
    if len(hs) != parameter_dim:
        raise InvalidSpec(f"need one h per parameter coordinate, got {len(hs)} for p={parameter_dim}")
    components = tuple(
        PsiComponent(family, direction=tuple(np.eye(parameter_dim)[i]), h=float(h), s=s)
        for i, h in enumerate(hs)
    )
    return VectorPsiSpec(components)


def optimal_psi() -> VectorPsiSpec:
    return VectorPsiSpec((PsiComponent('optimal'),))


def _log_density(vmodel: VectorModel, y, theta, joint: bool) -> np.ndarray:
    value = vmodel.log_likelihood(y, theta)
    if joint:
        value = value + vmodel.log_prior(theta)
    return value


def _ratio_component(comp: PsiComponent, vmodel: VectorModel, y, theta) -> np.ndarray:
    direction = np.asarray(comp.direction, dtype=float)
    if direction.shape != (vmodel.parameter_dim,):
        raise InvalidSpec(f"direction {comp.direction} does not match p={vmodel.parameter_dim}")
    shift = comp.h * direction
    joint = comp.family == 'ww'
    base = _log_density(vmodel, y, theta, joint)
    terms = []
    for sign, exponent in ((1.0, comp.s), (-1.0, 1.0 - comp.s)):
        shifted = _log_density(vmodel, y, theta + sign * shift, joint)
        alive = (shifted > LOG_DENSITY_FLOOR) & (base > LOG_DENSITY_FLOOR)
        with np.errstate(over='ignore', invalid='ignore'):
            terms.append(np.where(alive, np.exp(exponent * (shifted - base)), 0.0))
    return np.where(base > LOG_DENSITY_FLOOR, terms[0] - terms[1], 0.0)


def eval_vector_psi(spec: VectorPsiSpec, vmodel: VectorModel, y, theta) -> np.ndarray:
    """Psi(y, theta) stacked on a trailing axis of length r."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast_shapes(y.shape[:-1], theta.shape[:-1])
    blocks = []
    for comp in spec.components:
        if comp.family == 'optimal':
            blocks.append(np.broadcast_to(vmodel.target_fn(theta) - vmodel.posterior_mean_g(y), shape + (vmodel.target_dim,)))
        elif comp.family == 'custom':
            value = np.asarray(comp.custom_fn(y, theta), dtype=float)
            blocks.append(np.broadcast_to(value, shape)[..., None])
        else:
            blocks.append(np.broadcast_to(_ratio_component(comp, vmodel, y, theta), shape)[..., None])
    return np.concatenate(blocks, axis=-1)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def hermite_product_rule(n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite nodes (n^dim, dim) and weights for N(0, I), summing to 1."""
    x, w = hermegauss(n)
    w = w / np.sum(w)
    mesh = np.meshgrid(*([x] * dim), indexing='ij')
    nodes = np.stack([g.reshape(-1) for g in mesh], axis=-1)
    weights = np.ones(nodes.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing='ij'):
        weights = weights * g.reshape(-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class VectorGrid:
    """Nested rule: y and theta broadcast to (N, M, .), outer and inner weights."""
    y: np.ndarray
    theta: np.ndarray
    outer_weights: np.ndarray
    inner_weights: np.ndarray

    def inner_expect(self, values: np.ndarray) -> np.ndarray:
        return np.einsum('j,nj...->n...', self.inner_weights, values)

    def expect(self, values: np.ndarray) -> np.ndarray:
        return np.einsum('n,n...->...', self.outer_weights, self.inner_expect(values))


def vector_y_outer_grid(vmodel: VectorModel, cfg: IntegrationConfig, ys=None) -> VectorGrid:
    n = cfg.vector_nodes_per_axis
    if ys is None:
        z, outer_weights = hermite_product_rule(n, vmodel.observation_dim)
        y = z @ vmodel.marginal_chol.T
    else:
        y = np.atleast_2d(np.asarray(ys, dtype=float))
        if y.shape[1] != vmodel.observation_dim:
            raise InvalidSpec(f"observation must have {vmodel.observation_dim} entries, got {y.shape[1]}")
        outer_weights = np.ones(y.shape[0])
    x, inner_weights = hermite_product_rule(n, vmodel.parameter_dim)
    theta = vmodel.posterior_mean(y)[:, None, :] + (x @ vmodel.posterior_chol.T)[None, :, :]
    return VectorGrid(y=y[:, None, :], theta=theta, outer_weights=outer_weights, inner_weights=inner_weights)


def vector_theta_outer_grid(vmodel: VectorModel, cfg: IntegrationConfig) -> VectorGrid:
    n = cfg.vector_nodes_per_axis
    z, outer_weights = hermite_product_rule(n, vmodel.parameter_dim)
    theta = z @ vmodel.prior_chol.T
    x, inner_weights = hermite_product_rule(n, vmodel.observation_dim)
    y = (theta @ vmodel.H.T)[:, None, :] + (x @ vmodel.noise_chol.T)[None, :, :]
    return VectorGrid(y=y, theta=theta[:, None, :], outer_weights=outer_weights, inner_weights=inner_weights)


def _eps0(vmodel: VectorModel, grid: VectorGrid) -> np.ndarray:
    return vmodel.target_fn(grid.theta) - vmodel.posterior_mean_g(grid.y)


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixBoundResult:
    flavor: str
    status: str
    bound_matrix: Optional[np.ndarray]
    cross_matrix: np.ndarray
    psi_cov: np.ndarray
    meta: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == 'ok'


def _singular(second: np.ndarray, second_moment: np.ndarray) -> np.ndarray:
    """Per-matrix flag: not positive definite or condition number >= CONDITION_LIMIT."""
    eig = np.linalg.eigvalsh(second)
    scale = np.maximum(1.0, np.linalg.eigvalsh(second_moment)[..., -1])
    top = eig[..., -1]
    return ~(top > DEGENERATE_REL * scale) | ~(eig[..., 0] > top / CONDITION_LIMIT)


def _sandwich(cross: np.ndarray, second: np.ndarray, singular: np.ndarray) -> np.ndarray:
    """C V^-1 C^T as (L^-1 C^T)^T (L^-1 C^T) with V = L L^T; singular rows give 0."""
    r = second.shape[-1]
    safe = np.where(singular[..., None, None], np.eye(r), second)
    chol = np.linalg.cholesky(safe)
    solved = np.linalg.solve(chol, np.swapaxes(cross, -1, -2))
    product = np.swapaxes(solved, -1, -2) @ solved
    return np.where(singular[..., None, None], 0.0, product)


def _finish(flavor, matrix, cross, psi_cov, meta) -> MatrixBoundResult:
    matrix = (matrix + matrix.T) / 2.0
    lowest = float(np.linalg.eigvalsh(matrix)[0])
    meta['min_eigenvalue'] = lowest
    if lowest < -PSD_TOL:
        logger.warning("%s matrix bound has eigenvalue %.3g below zero", flavor, lowest)
        return MatrixBoundResult(flavor, 'non_psd_input', None, cross, psi_cov, meta)
    return MatrixBoundResult(flavor, 'ok', matrix, cross, psi_cov, meta)


def _posterior_moments(vmodel, spec, cfg, ys=None):
    grid = vector_y_outer_grid(vmodel, cfg, ys=ys)
    psi = eval_vector_psi(spec, vmodel, grid.y, grid.theta)
    if not np.all(np.isfinite(psi)):
        raise InvalidSpec("vector test function is not finite on the integration grid")
    mean = grid.inner_expect(psi)
    second_moment = grid.inner_expect(_outer(psi, psi))
    cross = grid.inner_expect(_outer(_eps0(vmodel, grid), psi))
    return grid, cross, second_moment - _outer(mean, mean), second_moment, mean


def mat_bound(
    vmodel: VectorModel,
    spec: VectorPsiSpec,
    flavor: str,
    cfg: IntegrationConfig,
    y=None,
) -> MatrixBoundResult:
    """Matrix bound C V^-1 C^T for the chosen flavor.

    global           C = E[eps0 Psi^T],           V = Cov[Psi]
    conditional      C = E[eps0 Psi^T | y],       V = Cov[Psi | y]
    avg_conditional  y-average of the conditional product
    avg_theta        theta-average with C = E[eps0 Psi^T | theta], V = E[Psi Psi^T | theta]
    """
    if flavor not in MATRIX_FLAVORS:
        raise InvalidSpec(f"unknown matrix flavor {flavor!r}; expected one of {MATRIX_FLAVORS}")
    meta: Dict[str, float] = {'r': float(spec.dim(vmodel)), 'q': float(vmodel.target_dim)}

    if flavor in ('global', 'conditional'):
        if flavor == 'conditional':
            if y is None:
                raise InvalidSpec("the conditional flavor needs an observation y")
            grid, cross, cov, second_moment, _ = _posterior_moments(vmodel, spec, cfg, ys=[np.ravel(y)])
            cross, cov, second_moment = cross[0], cov[0], second_moment[0]
        else:
            grid, cross_y, _, second_y, mean_y = _posterior_moments(vmodel, spec, cfg)
            w = grid.outer_weights / np.sum(grid.outer_weights)
            cross = np.einsum('n,nij->ij', w, cross_y)
            mean = np.einsum('n,ni->i', w, mean_y)
            second_moment = np.einsum('n,nij->ij', w, second_y)
            cov = second_moment - np.outer(mean, mean)
        cov = (cov + cov.T) / 2.0
        if _singular(cov, second_moment):
            return MatrixBoundResult(flavor, 'singular_psi_cov', None, cross, cov, meta)
        return _finish(flavor, _sandwich(cross, cov, np.array(False)), cross, cov, meta)

    if flavor == 'avg_conditional':
        grid, cross, second, second_moment, _ = _posterior_moments(vmodel, spec, cfg)
    else:
        grid = vector_theta_outer_grid(vmodel, cfg)
        psi = eval_vector_psi(spec, vmodel, grid.y, grid.theta)
        if not np.all(np.isfinite(psi)):
            raise InvalidSpec("vector test function is not finite on the integration grid")
        second = second_moment = grid.inner_expect(_outer(psi, psi))
        cross = grid.inner_expect(_outer(_eps0(vmodel, grid), psi))

    second = (second + np.swapaxes(second, -1, -2)) / 2.0
    w = grid.outer_weights / np.sum(grid.outer_weights)
    singular = _singular(second, second_moment)
    mean_cross = np.einsum('n,nij->ij', w, cross)
    mean_second = np.einsum('n,nij->ij', w, second)
    if np.any(singular & (w > WEIGHT_FLOOR)):
        return MatrixBoundResult(flavor, 'singular_psi_cov', None, mean_cross, mean_second, meta)
    products = _sandwich(cross, second, singular)
    return _finish(flavor, np.einsum('n,nij->ij', w, products), mean_cross, mean_second, meta)


def mse_matrix_exact(vmodel: VectorModel, estimator: Callable, cfg: IntegrationConfig) -> np.ndarray:
    """E[(g - delta(y)) (g - delta(y))^T] for an estimator mapping (..., m) to (..., q)."""
    grid = vector_y_outer_grid(vmodel, cfg)
    error = vmodel.target_fn(grid.theta) - np.asarray(estimator(grid.y), dtype=float)
    matrix = grid.expect(_outer(error, error))
    return (matrix + matrix.T) / 2.0


def check_loewner(A, B, tol: float = 1e-7) -> Tuple[bool, float]:
    """A >= B in the Loewner order, up to tol; returns the flag and lambda_min(A - B)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise InvalidSpec(f"shape mismatch {A.shape} vs {B.shape}")
    for name, matrix in (('A', A), ('B', B)):
        asymmetry = float(np.max(np.abs(matrix - matrix.T)))
        if asymmetry > SYMMETRY_TOL:
            raise NotSymmetric(f"{name} is not symmetric (max asymmetry {asymmetry:.3g})")
    lowest = float(linalg.eigvalsh((A - B + (A - B).T) / 2.0)[0])
    return lowest >= -tol, lowest
