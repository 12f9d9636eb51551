"""
Run configuration loading and validation.

A run config is a JSON object with the sections model, bound, integration,
sweep, optimize and output. Unknown keys are rejected with the dotted path of
the offending key.
"""
import json
import logging
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, InvalidSpec
from .integrate import IntegrationConfig
from .matrix_bounds import MATRIX_FLAVORS
from .model import MODEL_KINDS, ModelSpec, validate_model_spec
from .testfn import FAMILIES

logger = logging.getLogger(__name__)

VECTOR_KIND = 'linear_gaussian_vector'
SCALAR_FLAVORS = ('global', 'conditional', 'avg_conditional', 'avg_theta', 'ww', 'ww_conditional', 'asymptotic', 'exact_risk')

MODEL_KEYS = {
    'gaussian_gaussian': ('sigma_theta2', 'sigma_n2', 'n_obs'),
    'discrete_channel': ('flip_prob',),
    'uniform_location': ('prior_var', 'width'),
    VECTOR_KIND: ('H', 'prior_cov', 'noise_cov', 'target'),
}
SECTIONS = ('model', 'bound', 'integration', 'sweep', 'optimize', 'output')


@dataclass
class VectorModelSpec:
    H: List[List[float]]
    prior_cov: List[List[float]]
    noise_cov: List[List[float]]
    target: Optional[List[List[float]]] = None
    kind: str = VECTOR_KIND


@dataclass
class BoundSettings:
    family: str = 'ww'
    flavor: str = 'global'
    h: Optional[float] = None
    s: Optional[float] = None
    y: Optional[Union[float, List[float]]] = None


@dataclass
class SweepSettings:
    h_grid: List[float]
    s_grid: List[float]


@dataclass
class OptimizeSettings:
    h_range: List[float]
    s_range: List[float]


@dataclass
class OutputSettings:
    csv_path: Optional[str] = None
    precision: int = 10
    xlsx_path: Optional[str] = None


@dataclass
class RunConfig:
    model: Union[ModelSpec, VectorModelSpec]
    bound: BoundSettings = field(default_factory=BoundSettings)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    sweep: Optional[SweepSettings] = None
    optimize: Optional[OptimizeSettings] = None
    output: OutputSettings = field(default_factory=OutputSettings)

    @property
    def is_vector(self) -> bool:
        return self.model.kind == VECTOR_KIND


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _section(data: dict, name: str, allowed: Sequence[str]) -> dict:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be a JSON object")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    return raw


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _key_from_message(section: str, exc: Exception, candidates: Sequence[str], default: str) -> str:
    # validators start their messages with the offending field name
    first = str(exc).split(' ', 1)[0]
    return f"{section}.{first if first in candidates else default}"


def _load_model(data: dict) -> Union[ModelSpec, VectorModelSpec]:
    raw = data.get('model')
    if not isinstance(raw, dict):
        raise ConfigError('model', "missing model section")
    kind = raw.get('kind')
    if kind not in MODEL_KEYS:
        raise ConfigError('model.kind', f"unknown model kind {kind!r}; expected one of {MODEL_KINDS + (VECTOR_KIND,)}")
    params = _section(data, 'model', ('kind',) + MODEL_KEYS[kind])
    params = {k: v for k, v in params.items() if k != 'kind'}

    if kind == VECTOR_KIND:
        for key in ('H', 'prior_cov', 'noise_cov'):
            if key not in params:
                raise ConfigError(f"model.{key}", "required for linear_gaussian_vector")
        for key, value in params.items():
            if value is None:
                continue
            try:
                matrix = np.asarray(value, dtype=float)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"model.{key}", "must be a matrix of numbers") from exc
            if matrix.ndim != 2 or not np.all(np.isfinite(matrix)):
                raise ConfigError(f"model.{key}", "must be a matrix of finite numbers")
        return VectorModelSpec(**params)

    for key, value in params.items():
        if not _is_number(value):
            raise ConfigError(f"model.{key}", f"must be a finite number, got {value!r}")
    spec = ModelSpec(kind=kind, **params)
    try:
        validate_model_spec(spec)
    except InvalidSpec as exc:
        raise ConfigError(_key_from_message('model', exc, MODEL_KEYS[kind], 'kind'), str(exc)) from exc
    return spec


def _load_integration(data: dict) -> IntegrationConfig:
    names = tuple(f.name for f in fields(IntegrationConfig))
    raw = _section(data, 'integration', names)
    try:
        return IntegrationConfig(**raw)
    except InvalidSpec as exc:
        raise ConfigError(_key_from_message('integration', exc, names, 'nodes_per_axis'), str(exc)) from exc


def _float_list(section: str, key: str, value, length: Optional[int] = None) -> List[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{section}.{key}", "must be a nonempty list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(f"{section}.{key}", f"must have {length} entries")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}", "must contain numbers only") from exc


def load_run_config_from_dict(data: dict) -> RunConfig:
    """Load and validate a run config from a Python dict (same schema as JSON)."""
    if not isinstance(data, dict):
        raise ConfigError('config', "must be a JSON object")
    for key in data:
        if key not in SECTIONS:
            raise ConfigError(key, "unknown section")

    model = _load_model(data)
    bound = BoundSettings(**_section(data, 'bound', ('family', 'flavor', 'h', 's', 'y')))
    integration = _load_integration(data)

    sweep = None
    if 'sweep' in data:
        raw = _section(data, 'sweep', ('h_grid', 's_grid'))
        sweep = SweepSettings(
            h_grid=_float_list('sweep', 'h_grid', raw.get('h_grid')),
            s_grid=_float_list('sweep', 's_grid', raw.get('s_grid')),
        )

    optimize = None
    if 'optimize' in data:
        raw = _section(data, 'optimize', ('h_range', 's_range'))
        optimize = OptimizeSettings(
            h_range=_float_list('optimize', 'h_range', raw.get('h_range'), 2),
            s_range=_float_list('optimize', 's_range', raw.get('s_range'), 2),
        )

    output = OutputSettings(**_section(data, 'output', ('csv_path', 'precision', 'xlsx_path')))

    config = RunConfig(
        model=model,
        bound=bound,
        integration=integration,
        sweep=sweep,
        optimize=optimize,
        output=output,
    )

    # Validate
    warnings = validate_run_config(config)
    for w in warnings:
        logger.warning(w)

    return config


def load_run_config(json_path: str) -> RunConfig:
    """Load and validate a run config JSON file."""
    try:
        with open(json_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError('config', f"cannot read {json_path}: {exc}") from exc
    return load_run_config_from_dict(data)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_s(key: str, s, family: str, flavor: str):
    if s is None:
        raise ConfigError(key, f"required for family {family}")
    if not _is_number(s) or not 0.0 < s <= 1.0:
        raise ConfigError(key, f"must lie in (0, 1], got {s}")
    if flavor in ('ww', 'ww_conditional') and s >= 1.0:
        raise ConfigError(key, f"flavor {flavor} needs s < 1, got {s}")


def validate_run_config(config: RunConfig) -> List[str]:
    """Raise ConfigError on invalid settings. Returns list of warning messages."""
    warnings = []
    bound = config.bound

    if bound.family not in FAMILIES or bound.family == 'custom':
        raise ConfigError('bound.family', f"must be one of ww, cond, optimal, got {bound.family!r}")
    flavors = MATRIX_FLAVORS if config.is_vector else SCALAR_FLAVORS
    if bound.flavor not in flavors:
        raise ConfigError('bound.flavor', f"must be one of {flavors}, got {bound.flavor!r}")
    if bound.flavor in ('ww', 'ww_conditional') and bound.family != 'ww':
        raise ConfigError('bound.family', f"flavor {bound.flavor} needs family ww")

    if bound.h is not None and (not _is_number(bound.h) or bound.h == 0):
        raise ConfigError('bound.h', f"must be a finite nonzero number, got {bound.h!r}")
    if bound.s is not None:
        _check_s('bound.s', bound.s, bound.family, bound.flavor)
    if bound.family == 'ww' and bound.s == 1.0:
        warnings.append("bound.s = 1 with family ww is usable by the general flavors only; the ww flavors need s < 1")
    if bound.family not in ('ww', 'cond') and (bound.h is not None or bound.s is not None):
        warnings.append(f"bound.h and bound.s are ignored for family {bound.family}")

    if bound.y is not None:
        if config.is_vector:
            _float_list('bound', 'y', bound.y, len(config.model.H))
        elif not isinstance(bound.y, (int, float)):
            raise ConfigError('bound.y', f"must be a number, got {bound.y!r}")

    if config.sweep is not None:
        if any(h == 0 for h in config.sweep.h_grid):
            raise ConfigError('sweep.h_grid', "h values must be nonzero")
        if any(not 0.0 < s <= 1.0 for s in config.sweep.s_grid):
            raise ConfigError('sweep.s_grid', "s values must lie in (0, 1]")
        if bound.flavor in ('ww', 'ww_conditional') and any(s >= 1.0 for s in config.sweep.s_grid):
            warnings.append("sweep.s_grid contains s = 1; flavor ww rows at s = 1 will be unsupported")

    if config.optimize is not None:
        h_lo, h_hi = config.optimize.h_range
        s_lo, s_hi = config.optimize.s_range
        if not h_lo < h_hi:
            raise ConfigError('optimize.h_range', f"must satisfy lo < hi, got {config.optimize.h_range}")
        if not (0.0 < s_lo < s_hi <= 1.0):
            raise ConfigError('optimize.s_range', f"must satisfy 0 < lo < hi <= 1, got {config.optimize.s_range}")
        if h_lo <= 0.0 <= h_hi:
            warnings.append("optimize.h_range contains h = 0; seed points there are unsupported")

    if not isinstance(config.output.precision, int) or not 1 <= config.output.precision <= 17:
        raise ConfigError('output.precision', f"must be an integer in [1, 17], got {config.output.precision}")

    return warnings


def require_for_command(config: RunConfig, command: str):
    """Raise ConfigError when a section the subcommand needs is missing."""
    bound = config.bound
    if command == 'bound' and not config.is_vector:
        if bound.flavor not in ('asymptotic', 'exact_risk') and bound.family in ('ww', 'cond'):
            if bound.h is None:
                raise ConfigError('bound.h', f"required for family {bound.family}")
            _check_s('bound.s', bound.s, bound.family, bound.flavor)
        if bound.flavor in ('conditional', 'ww_conditional') and bound.y is None:
            raise ConfigError('bound.y', f"required for flavor {bound.flavor}")
    if command == 'bound' and config.is_vector:
        if bound.family in ('ww', 'cond'):
            if bound.h is None:
                raise ConfigError('bound.h', f"required for family {bound.family}")
            _check_s('bound.s', bound.s, bound.family, bound.flavor)
        if bound.flavor == 'conditional' and bound.y is None:
            raise ConfigError('bound.y', "required for flavor conditional")
    if command == 'sweep' and config.sweep is None:
        raise ConfigError('sweep', "required for the sweep command")
    if command in ('optimize', 'compare') and config.optimize is None:
        raise ConfigError('optimize', f"required for the {command} command")
    if command in ('sweep', 'optimize') and config.is_vector:
        raise ConfigError('model.kind', f"{command} supports scalar models only")
