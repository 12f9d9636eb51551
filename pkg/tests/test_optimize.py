import dataclasses
import itertools

import numpy as np
import pytest

from src.errors import AllDegenerate, InvalidSpec
from src.optimize import evaluate_bound, maximize, sweep


def test_sweep_rows_are_sorted_and_valid(gg, cfg):
    table = sweep(gg, 'ww', 'global', [2.0, 0.5, 1.0], [0.75, 0.25, 0.5], cfg)
    assert [(r.h, r.s) for r in table.rows] == sorted((h, s) for h in (0.5, 1.0, 2.0) for s in (0.25, 0.5, 0.75))
    assert all(r.status == 'ok' for r in table.rows)
    assert all(r.value <= 0.5 + 1e-7 for r in table.rows)
    assert table.best_value() == max(r.value for r in table.rows)
    assert table.model_digest == gg.digest


def test_sweep_on_channel(bsc, cfg):
    table = sweep(bsc, 'ww', 'ww', [2.0], [0.5], cfg)
    assert len(table.rows) == 1
    assert table.rows[0].value == pytest.approx(0.64, abs=1e-12)


def test_sweep_marks_invalid_points(gg, cfg):
    table = sweep(gg, 'ww', 'ww', [1.0], [0.5, 1.0], cfg)
    statuses = {r.s: r.status for r in table.rows}
    assert statuses == {0.5: 'ok', 1.0: 'unsupported'}
    assert table.rows[1].value is None


def test_sweep_needs_points(gg, cfg):
    with pytest.raises(InvalidSpec):
        sweep(gg, 'ww', 'global', [], [0.5], cfg)


def test_sweep_is_independent_of_workers(gg, cfg):
    serial = sweep(gg, 'cond', 'avg_theta', [0.5, 1.0], [0.5, 1.0], cfg)
    parallel = sweep(gg, 'cond', 'avg_theta', [0.5, 1.0], [0.5, 1.0], dataclasses.replace(cfg, workers=4))
    assert serial.rows == parallel.rows
    assert serial.cfg_digest == parallel.cfg_digest


def test_evaluate_bound_dispatch(gg, cfg):
    with pytest.raises(InvalidSpec):
        evaluate_bound(gg, 'ww', 'asymptotic', 1.0, 0.5, cfg)
    with pytest.raises(InvalidSpec):
        evaluate_bound(gg, 'cond', 'ww', 1.0, 0.5, cfg)
    with pytest.raises(InvalidSpec):
        evaluate_bound(gg, 'ww', 'conditional', 1.0, 0.5, cfg)
    result = evaluate_bound(gg, 'optimal', 'global', None, None, cfg)
    assert result.value == pytest.approx(0.5, abs=1e-7)


def test_maximize_on_channel(bsc, cfg):
    optimum = maximize(bsc, 'ww', 'global', [0.5, 3.0], [0.1, 0.9], cfg)
    assert optimum.value == pytest.approx(0.64, abs=1e-12)
    assert optimum.h_star == 2.0
    assert optimum.s_star == pytest.approx(0.5)
    assert optimum.result.ok
    assert optimum.converged


def test_maximize_gaussian(gg, cfg):
    optimum = maximize(gg, 'ww', 'global', [0.5, 3.0], [0.1, 0.9], cfg)
    assert optimum.value <= 0.5 + 1e-7
    assert optimum.value >= optimum.seed_value * (1.0 - 1e-12)
    assert optimum.evaluations <= 200
    assert 0.5 <= optimum.h_star <= 3.0
    assert 0.1 <= optimum.s_star <= 0.9
    assert optimum.result.value == pytest.approx(optimum.value, rel=1e-12)
    again = maximize(gg, 'ww', 'global', [0.5, 3.0], [0.1, 0.9], cfg)
    assert (again.h_star, again.s_star, again.value) == (optimum.h_star, optimum.s_star, optimum.value)


def test_maximize_all_degenerate(gg, bsc, cfg):
    with pytest.raises(AllDegenerate):
        maximize(gg, 'custom', 'global', [0.5, 1.0], [0.1, 0.9], cfg, custom_fn=lambda y, t: np.ones_like(y * t))
    with pytest.raises(AllDegenerate):
        maximize(bsc, 'ww', 'global', [0.5, 1.5], [0.1, 0.9], cfg)


@pytest.mark.parametrize("h_range, s_range", [
    ([1.0, 0.5], [0.1, 0.9]),
    ([0.5, 1.0], [0.0, 0.9]),
    ([0.5, 1.0], [0.5, 1.5]),
    ([0.5], [0.1, 0.9]),
])
def test_maximize_rejects_bad_ranges(gg, cfg, h_range, s_range):
    with pytest.raises(InvalidSpec):
        maximize(gg, 'ww', 'global', h_range, s_range, cfg)


def test_maximize_not_converged_when_passes_run_out(gg, cfg, monkeypatch):
    gains = itertools.count(1)

    def always_better(f, a, b, tol, evaluator):
        return (a + b) / 2.0, 1.0 + next(gains), True

    monkeypatch.setattr('src.optimize._golden_max', always_better)
    optimum = maximize(gg, 'ww', 'global', [0.5, 3.0], [0.1, 0.9], cfg)
    assert not optimum.converged
