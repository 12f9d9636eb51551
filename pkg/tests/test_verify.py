import dataclasses

import pytest

from src import verify
from src.verify import battery_shifts, psi_battery, standard_estimators, verify_scalar


def test_battery_shifts(gg, bsc):
    assert battery_shifts(bsc) == [2.0]
    assert battery_shifts(gg) == pytest.approx([0.25, 0.5, 1.0, 1.5, 2.0])
    assert len(psi_battery(gg)) == 50
    assert {e.label for e in standard_estimators()} == {'zero', 'identity', 'half', 'sign'}


def test_channel_battery_passes_with_monte_carlo(bsc, cfg):
    checks = verify_scalar(bsc, dataclasses.replace(cfg, mc_samples=200000, seed=3))
    names = [c.name for c in checks]
    assert names[:2] == ['normalization', 'monte_carlo_risk']
    assert 'asymptotic_regime' in names
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


@pytest.mark.slow
def test_uniform_battery_passes(uni, cfg):
    checks = verify_scalar(uni, dataclasses.replace(cfg, workers=4))
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_cond_condition_departs_on_gaussian(gg, cfg):
    result = verify._check_zero_condition_cond(gg, cfg, 0.5)
    assert result.passed
    assert 'fails by more than' in result.detail
    worst = float(result.detail.split()[2].rstrip(','))
    assert worst > 1e-3


def test_cond_condition_holds_on_flat_prior(bsc, cfg):
    result = verify._check_zero_condition_cond(bsc, cfg, 0.64)
    assert result.passed
    assert result.detail.endswith('expected: holds')


def test_cond_condition_flags_unexpected_outcome(gg, bsc, cfg, monkeypatch):
    monkeypatch.setattr(verify, '_prior_is_flat', lambda model: True)
    assert not verify._check_zero_condition_cond(gg, cfg, 0.5).passed
    monkeypatch.setattr(verify, '_prior_is_flat', lambda model: False)
    assert not verify._check_zero_condition_cond(bsc, cfg, 0.64).passed


def test_flat_prior_detection(gg, bsc, uni):
    assert verify._prior_is_flat(bsc)
    assert not verify._prior_is_flat(gg)
    assert not verify._prior_is_flat(uni)


def test_scalar_battery_is_independent_of_workers(bsc, cfg):
    serial = verify_scalar(bsc, cfg)
    parallel = verify_scalar(bsc, dataclasses.replace(cfg, workers=4))
    assert serial == parallel
