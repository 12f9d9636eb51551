"""
Bayesian model abstraction and the catalog of ground-truth models.

A ScalarModel carries a prior over a scalar parameter and a conditional
density of the observation. Multi-sample Gaussian observations are reduced
to their sample mean, so every integral in the toolkit runs over at most one
parameter axis and one observation axis.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import stats

from .errors import DomainError, InvalidSpec
from .integrate import IntegrationConfig, check_normalization

logger = logging.getLogger(__name__)

MODEL_KINDS = ('gaussian_gaussian', 'discrete_channel', 'uniform_location')


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float = -np.inf
    hi: float = np.inf

    discrete = False

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)


@dataclass(frozen=True)
class FiniteSet:
    values: Tuple[float, ...]

    discrete = True

    def contains(self, x) -> np.ndarray:
        return np.isin(np.asarray(x, dtype=float), self.values)


Space = Union[Interval, FiniteSet]


# ---------------------------------------------------------------------------
# Model and estimator records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarModel:
    """Prior p(theta) and conditional p(y | theta) with declared supports.

    `likelihood`, `log_likelihood`, `analytic_posterior_mean` and
    `analytic_score` act on the reduced observation (the sample mean when
    obs_dim > 1). `raw_likelihood` and `reduce` map full observation vectors.

    Continuous models are location families in y: `noise_sd` is the scale of
    a Gaussian offset y - theta, `offset_support` the exact support of a
    bounded one. The integration engine builds its windows from these.
    """
    name: str
    params: Tuple[Tuple[str, float], ...]
    parameter_space: Space
    observation_space: Space
    prior: Callable[[np.ndarray], np.ndarray]
    likelihood: Callable[[np.ndarray, np.ndarray], np.ndarray]
    log_prior: Optional[Callable[[np.ndarray], np.ndarray]] = None
    log_likelihood: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    analytic_posterior_mean: Optional[Callable[[np.ndarray], np.ndarray]] = None
    analytic_score: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    sampler: Optional[Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]]] = None
    obs_dim: int = 1
    reduce: Optional[Callable[[np.ndarray], np.ndarray]] = None
    raw_likelihood: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    prior_mean: float = 0.0
    prior_sd: float = 1.0
    noise_sd: Optional[float] = None
    offset_support: Optional[Tuple[float, float]] = None

    @property
    def theta_discrete(self) -> bool:
        return self.parameter_space.discrete

    @property
    def y_discrete(self) -> bool:
        return self.observation_space.discrete

    @property
    def offset_var(self) -> float:
        if self.noise_sd is not None:
            return self.noise_sd ** 2
        if self.offset_support is not None:
            a, b = self.offset_support
            return (b - a) ** 2 / 12.0
        return 0.0

    @property
    def digest(self) -> str:
        payload = json.dumps({'name': self.name, 'params': list(self.params)}, sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]

    def param(self, key: str) -> float:
        return dict(self.params)[key]


@dataclass(frozen=True)
class Estimator:
    rule: Callable[[np.ndarray], np.ndarray]
    label: str

    def __call__(self, y):
        return self.rule(y)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    sigma_theta2: float = 1.0
    sigma_n2: float = 1.0
    n_obs: int = 1
    flip_prob: float = 0.2
    width: float = 1.0
    prior_var: float = 1.0


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _gaussian_gaussian(var_prior: float, var_noise: float, n_obs: int) -> ScalarModel:
    sd_prior = float(np.sqrt(var_prior))
    var_stat = var_noise / n_obs
    sd_stat = float(np.sqrt(var_stat))
    gain = var_prior / (var_prior + var_stat)
    sd_noise = float(np.sqrt(var_noise))

    def prior(theta):
        return stats.norm.pdf(theta, 0.0, sd_prior)

    def log_prior(theta):
        return stats.norm.logpdf(theta, 0.0, sd_prior)

    def likelihood(t, theta):
        return stats.norm.pdf(t, theta, sd_stat)

    def log_likelihood(t, theta):
        return stats.norm.logpdf(t, theta, sd_stat)

    def raw_likelihood(y, theta):
        theta = np.asarray(theta, dtype=float)[..., None]
        return np.prod(stats.norm.pdf(y, theta, sd_noise), axis=-1)

    def sampler(rng, size):
        theta = rng.normal(0.0, sd_prior, size)
        return theta, theta + rng.normal(0.0, sd_stat, size)

    return ScalarModel(
        name='gaussian_gaussian',
        params=(('sigma_theta2', var_prior), ('sigma_n2', var_noise), ('n_obs', n_obs)),
        parameter_space=Interval(),
        observation_space=Interval(),
        prior=prior,
        likelihood=likelihood,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        analytic_posterior_mean=lambda t: gain * np.asarray(t, dtype=float),
        analytic_score=lambda t, theta: (np.asarray(t, dtype=float) - theta) / var_stat,
        sampler=sampler,
        obs_dim=n_obs,
        reduce=lambda y: np.mean(y, axis=-1),
        raw_likelihood=raw_likelihood,
        prior_sd=sd_prior,
        noise_sd=sd_stat,
    )


def _discrete_channel(flip_prob: float) -> ScalarModel:
    support = FiniteSet((-1.0, 1.0))

    def prior(theta):
        return np.where(support.contains(theta), 0.5, 0.0)

    def likelihood(y, theta):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        inside = support.contains(y) & support.contains(theta)
        return np.where(inside, np.where(y == theta, 1.0 - flip_prob, flip_prob), 0.0)

    def sampler(rng, size):
        theta = rng.choice(np.array(support.values), size)
        flipped = rng.random(size) < flip_prob
        return theta, np.where(flipped, -theta, theta)

    return ScalarModel(
        name='discrete_channel',
        params=(('flip_prob', flip_prob),),
        parameter_space=support,
        observation_space=support,
        prior=prior,
        likelihood=likelihood,
        sampler=sampler,
    )


def _uniform_location(prior_var: float, width: float) -> ScalarModel:
    sd_prior = float(np.sqrt(prior_var))
    half = width / 2.0

    def prior(theta):
        return stats.norm.pdf(theta, 0.0, sd_prior)

    def likelihood(y, theta):
        offset = np.asarray(y, dtype=float) - np.asarray(theta, dtype=float)
        return np.where(np.abs(offset) <= half, 1.0 / width, 0.0)

    def sampler(rng, size):
        theta = rng.normal(0.0, sd_prior, size)
        return theta, theta + rng.uniform(-half, half, size)

    return ScalarModel(
        name='uniform_location',
        params=(('prior_var', prior_var), ('width', width)),
        parameter_space=Interval(),
        observation_space=Interval(),
        prior=prior,
        likelihood=likelihood,
        log_prior=lambda theta: stats.norm.logpdf(theta, 0.0, sd_prior),
        sampler=sampler,
        prior_sd=sd_prior,
        offset_support=(-half, half),
    )


def validate_model_spec(spec: ModelSpec):
    """Raise InvalidSpec when a catalog spec violates its parameter ranges."""
    if spec.kind not in MODEL_KINDS:
        raise InvalidSpec(f"unknown model kind {spec.kind!r}; expected one of {MODEL_KINDS}")
    if spec.kind == 'gaussian_gaussian':
        if not spec.sigma_theta2 > 0:
            raise InvalidSpec(f"sigma_theta2 must be positive, got {spec.sigma_theta2}")
        if not spec.sigma_n2 > 0:
            raise InvalidSpec(f"sigma_n2 must be positive, got {spec.sigma_n2}")
        if int(spec.n_obs) != spec.n_obs or spec.n_obs < 1:
            raise InvalidSpec(f"n_obs must be a positive integer, got {spec.n_obs}")
    elif spec.kind == 'discrete_channel':
        if not 0.0 < spec.flip_prob < 0.5:
            raise InvalidSpec(f"flip_prob must lie in (0, 1/2), got {spec.flip_prob}")
    else:
        if not spec.prior_var > 0:
            raise InvalidSpec(f"prior_var must be positive, got {spec.prior_var}")
        if not spec.width > 0:
            raise InvalidSpec(f"width must be positive, got {spec.width}")


def make_model(spec: ModelSpec, cfg: Optional[IntegrationConfig] = None) -> ScalarModel:
    """Build a catalog model and check its normalization invariants."""
    validate_model_spec(spec)
    if spec.kind == 'gaussian_gaussian':
        model = _gaussian_gaussian(float(spec.sigma_theta2), float(spec.sigma_n2), int(spec.n_obs))
    elif spec.kind == 'discrete_channel':
        model = _discrete_channel(float(spec.flip_prob))
    else:
        model = _uniform_location(float(spec.prior_var), float(spec.width))

    deviation = check_normalization(model, cfg or IntegrationConfig())
    logger.debug("built %s %s (normalization deviation %.3g)", model.name, dict(model.params), deviation)
    return model


def gaussian_gaussian(var_prior: float = 1.0, var_noise: float = 1.0, n_obs: int = 1) -> ScalarModel:
    return make_model(ModelSpec('gaussian_gaussian', sigma_theta2=var_prior, sigma_n2=var_noise, n_obs=n_obs))


def discrete_channel(flip_prob: float = 0.2) -> ScalarModel:
    return make_model(ModelSpec('discrete_channel', flip_prob=flip_prob))


def uniform_location(prior_var: float = 1.0, width: float = 1.0) -> ScalarModel:
    return make_model(ModelSpec('uniform_location', prior_var=prior_var, width=width))


# ---------------------------------------------------------------------------
# Density evaluation on raw observations
# ---------------------------------------------------------------------------

def _as_observation(model: ScalarModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if model.obs_dim > 1 and (y.ndim == 0 or y.shape[-1] != model.obs_dim):
        raise DomainError(
            f"{model.name} expects observations of dimension {model.obs_dim}, got shape {y.shape}"
        )
    return y


def conditional_density(model: ScalarModel, y, theta):
    """p(y | theta) for a raw observation; exactly 0 outside the supports."""
    y = _as_observation(model, y)
    theta = np.asarray(theta, dtype=float)
    if model.obs_dim > 1:
        inside = np.all(model.observation_space.contains(y), axis=-1)
        value = np.where(inside, model.raw_likelihood(y, theta), 0.0)
    else:
        value = np.where(model.observation_space.contains(y), model.likelihood(y, theta), 0.0)
    value = np.where(model.parameter_space.contains(theta), value, 0.0)
    return float(value) if np.ndim(value) == 0 else value


def joint_density(model: ScalarModel, y, theta):
    """p(y, theta) = prior(theta) * p(y | theta)."""
    theta = np.asarray(theta, dtype=float)
    value = model.prior(theta) * conditional_density(model, y, theta)
    return float(value) if np.ndim(value) == 0 else value


def reduce_observation(model: ScalarModel, y) -> np.ndarray:
    """Map a raw observation to the statistic the integration engine works on."""
    y = _as_observation(model, y)
    if model.obs_dim > 1:
        return model.reduce(y)
    return y


def y_probes(model: ScalarModel, count: int = 21) -> np.ndarray:
    """Observation probes for pointwise checks (support, or a central grid)."""
    if model.y_discrete:
        return np.array(model.observation_space.values)
    marginal_sd = np.sqrt(model.prior_sd ** 2 + model.offset_var)
    return model.prior_mean + np.linspace(-3.0, 3.0, count) * marginal_sd
