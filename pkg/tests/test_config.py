import logging

import pytest

from src.config import (
    VectorModelSpec,
    load_run_config,
    load_run_config_from_dict,
    require_for_command,
)
from src.errors import ConfigError
from src.model import ModelSpec


def _gg(**sections):
    data = {'model': {'kind': 'gaussian_gaussian', 'sigma_theta2': 1.0, 'sigma_n2': 1.0, 'n_obs': 1}}
    data.update(sections)
    return data


def _error_key(data) -> str:
    with pytest.raises(ConfigError) as info:
        load_run_config_from_dict(data)
    return info.value.key


def test_defaults():
    config = load_run_config_from_dict(_gg())
    assert config.model == ModelSpec('gaussian_gaussian', 1.0, 1.0, 1)
    assert config.bound.family == 'ww'
    assert config.bound.flavor == 'global'
    assert config.integration.nodes_per_axis == 257
    assert config.output.precision == 10
    assert config.sweep is None
    assert not config.is_vector


def test_vector_config():
    config = load_run_config_from_dict({
        'model': {'kind': 'linear_gaussian_vector', 'H': [[1.0]], 'prior_cov': [[1.0]], 'noise_cov': [[2.0]]},
        'bound': {'family': 'optimal', 'flavor': 'avg_theta'},
    })
    assert config.is_vector
    assert isinstance(config.model, VectorModelSpec)


@pytest.mark.parametrize("data, key", [
    (_gg(bound={'s': 1.5}), 'bound.s'),
    (_gg(bound={'flavor': 'ww', 's': 1.0}), 'bound.s'),
    (_gg(bound={'h': 0}), 'bound.h'),
    (_gg(bound={'foo': 1}), 'bound.foo'),
    (_gg(bound={'family': 'score'}), 'bound.family'),
    (_gg(bound={'flavor': 'ww', 'family': 'cond'}), 'bound.family'),
    (_gg(integration={'nodes_per_axis': 10}), 'integration.nodes_per_axis'),
    (_gg(integration={'tail_sigmas': 2.0}), 'integration.tail_sigmas'),
    (_gg(sweep={'h_grid': [], 's_grid': [0.5]}), 'sweep.h_grid'),
    (_gg(sweep={'h_grid': [1.0], 's_grid': [0.0]}), 'sweep.s_grid'),
    (_gg(optimize={'h_range': [1.0, 0.5], 's_range': [0.1, 0.9]}), 'optimize.h_range'),
    (_gg(optimize={'h_range': [0.5, 1.0], 's_range': [0.1, 1.2]}), 'optimize.s_range'),
    (_gg(output={'precision': 0}), 'output.precision'),
    (_gg(extra={}), 'extra'),
    ({'model': {'kind': 'discrete_channel', 'flip_prob': 0.7}}, 'model.flip_prob'),
    ({'model': {'kind': 'gaussian_gaussian', 'n_obs': 0}}, 'model.n_obs'),
    ({'model': {'kind': 'cauchy'}}, 'model.kind'),
    ({'model': {'kind': 'linear_gaussian_vector', 'H': [[1.0]], 'prior_cov': [[1.0]]}}, 'model.noise_cov'),
    ({'model': {'kind': 'gaussian_gaussian', 'sigma_theta2': 'abc'}}, 'model.sigma_theta2'),
    ({'model': {'kind': 'discrete_channel', 'flip_prob': True}}, 'model.flip_prob'),
    ({'model': {'kind': 'linear_gaussian_vector', 'H': [['a']], 'prior_cov': [[1.0]], 'noise_cov': [[1.0]]}}, 'model.H'),
    (_gg(bound={'family': 'optimal', 's': 1.5}), 'bound.s'),
    (_gg(bound={'family': 'optimal', 'h': 'wide'}), 'bound.h'),
])
def test_errors_name_the_offending_key(data, key):
    assert _error_key(data) == key


def test_ignored_settings_are_warned(caplog):
    with caplog.at_level(logging.WARNING, logger='src.config'):
        load_run_config_from_dict(_gg(bound={'family': 'optimal', 'h': 1.0}))
    assert 'ignored for family optimal' in caplog.text


def test_require_for_command():
    config = load_run_config_from_dict(_gg(bound={'h': 1.0, 's': 0.5}))
    require_for_command(config, 'bound')
    with pytest.raises(ConfigError) as info:
        require_for_command(config, 'sweep')
    assert info.value.key == 'sweep'
    with pytest.raises(ConfigError) as info:
        require_for_command(config, 'compare')
    assert info.value.key == 'optimize'

    missing_y = load_run_config_from_dict(_gg(bound={'flavor': 'conditional', 'h': 1.0, 's': 0.5}))
    with pytest.raises(ConfigError) as info:
        require_for_command(missing_y, 'bound')
    assert info.value.key == 'bound.y'


def test_load_from_file(write_config, tmp_path):
    config = load_run_config(write_config(_gg()))
    assert config.model.kind == 'gaussian_gaussian'
    broken = tmp_path / 'broken.json'
    broken.write_text('{"model": ', encoding='utf-8')
    with pytest.raises(ConfigError) as info:
        load_run_config(str(broken))
    assert info.value.key == 'config'


def test_ww_at_s_one_is_warned(caplog):
    with caplog.at_level(logging.WARNING, logger='src.config'):
        config = load_run_config_from_dict(_gg(bound={'h': 1.0, 's': 1.0}))
    assert config.bound.s == 1.0
    assert 'the ww flavors need s < 1' in caplog.text
