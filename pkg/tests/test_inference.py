import numpy as np
import pytest

from turingpinn.core import GridSpec, Pattern, params_for_pattern
from turingpinn.inference import (PARAMETER_SETS, InferenceRun, TrainConfig, aggregate, alternative_candidates,
                                  initial_params, multi_restart, output_map, percent_error, restart_seeds,
                                  set_mask, train_inverse)
from turingpinn.pinn import LossBreakdown

P = params_for_pattern("P")


def _small_pattern():
    g = GridSpec(8, 8, -5.0, 5.0, -5.0, 5.0)
    xx, yy = g.mesh()
    return Pattern(g, 0.2 * np.cos(0.6 * xx), 0.1 * np.sin(0.6 * yy))


def _run(seed, **values):
    return InferenceRun("D", seed, P.with_values(**values), LossBreakdown(1e-5, 0.0, 0.0, 10.0), 1, 0.0, "epochs")


def test_parameter_sets():
    assert PARAMETER_SETS["A"] == ("d1", "d2")
    assert PARAMETER_SETS["B"] == ("alpha", "beta")
    assert PARAMETER_SETS["C"] == ("d1", "d2", "alpha", "beta")
    assert PARAMETER_SETS["D"] == ("d1", "alpha", "beta")
    assert PARAMETER_SETS["E"] == ("d1", "alpha", "beta", "r1")
    assert set_mask("e") == (True, False, True, True, True)
    with pytest.raises(KeyError):
        set_mask("F")


def test_trainables_start_at_zero_and_beta_at_one():
    start = initial_params(P, "C")
    assert (start.d1, start.d2, start.alpha, start.beta) == (0.0, 0.0, 0.0, 1.0)
    assert start.r1 == P.r1 and start.gamma == 0.0
    assert initial_params(P, "A").beta == P.beta


def test_percent_error_convention():
    assert percent_error(0.511, 0.516) == pytest.approx(0.969, abs=1e-3)
    assert percent_error(-0.915, -0.91) == pytest.approx(0.549, abs=1e-3)


def test_aggregate_of_identical_runs_has_zero_variance():
    agg = aggregate([_run(i, d1=0.5, alpha=0.9, beta=-0.9) for i in range(8)], P, "D")
    assert [s.variance for s in agg.summaries] == [0.0, 0.0, 0.0]
    assert agg.summary("d1").mean == 0.5
    assert agg.mean_data_loss == pytest.approx(1e-5)
    assert agg.alternative_seeds == []


def test_aggregate_matches_two_pass_arithmetic():
    vals = np.array([0.49, 0.5, 0.52, 0.47, 0.51])
    agg = aggregate([_run(i, d1=v) for i, v in enumerate(vals)], P, "D")
    s = agg.summary("d1")
    mean = sum(vals) / len(vals)
    assert s.mean == pytest.approx(mean, rel=1e-15)
    assert s.variance == pytest.approx(sum((v - mean) ** 2 for v in vals) / len(vals), rel=1e-12)
    assert s.error_pct == pytest.approx(100 * abs(mean - 0.516) / 0.516)


def test_failed_runs_are_excluded_and_reported():
    bad = _run(9, d1=5.0)
    bad.failed, bad.error = True, "non-finite mse_h"
    agg = aggregate([_run(0, d1=0.5), _run(1, d1=0.5), bad], P, "D")
    assert agg.summary("d1").mean == 0.5
    assert agg.as_dict()["failed"] == [{"restart_seed": 9, "error": "non-finite mse_h"}]


def test_outlier_restart_is_flagged():
    runs = [_run(i, d1=0.5 + 0.002 * i) for i in range(7)] + [_run(7, d1=0.62)]
    assert alternative_candidates(runs, ("d1",)) == [7]
    assert alternative_candidates(runs[:2], ("d1",)) == []


def test_restart_seeds_are_distinct():
    seeds = restart_seeds(3, 8)
    assert len(set(seeds)) == 8 and seeds[0] == 3000


def test_output_map_uses_field_statistics():
    pat = _small_pattern()
    centre, scale = output_map(pat)
    assert centre[0] == pytest.approx(pat.u.mean()) and scale[1] == pytest.approx(pat.v.std())
    flat = Pattern(pat.grid, np.ones(pat.grid.shape), np.zeros(pat.grid.shape))
    assert output_map(flat)[1].tolist() == [1.0, 1.0]


def test_train_config_validation_and_desk_preset():
    assert TrainConfig.desk().epochs == 1000
    d = TrainConfig()
    assert (d.batch_size, d.lr, d.w_f, d.n_bc, d.layer_sizes) == (25, 2.5e-4, 10.0, 200, (2, 64, 64, 64, 64, 2))
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(warmup_epochs=-1)


def test_training_is_reproducible_and_respects_the_mask():
    pat = _small_pattern()
    cfg = TrainConfig(epochs=3, layer_sizes=(2, 8, 8, 2), early_stop=False, n_bc=16)
    a = train_inverse(pat, "B", cfg, 11, P)
    b = train_inverse(pat, "B", cfg, 11, P)
    assert np.array_equal(a.theta, b.theta) and a.as_dict() == b.as_dict()
    c = train_inverse(pat, "B", cfg, 12, P)
    assert not np.array_equal(a.theta, c.theta)
    for name in ("d1", "d2", "r1", "r2"):
        assert getattr(a.inferred, name) == getattr(P, name)
    assert a.inferred.gamma == -a.inferred.alpha
    assert a.epochs == 3 and a.stop_reason == "epochs"
    assert "wall_time" not in a.as_dict() and "wall_time" in a.as_dict(timing=True)


def test_training_lowers_the_loss():
    pat = _small_pattern()
    cfg = TrainConfig(epochs=40, layer_sizes=(2, 16, 16, 2), early_stop=False, n_bc=16, batch_size=8,
                      history_every=10, lr=1e-3)
    run = train_inverse(pat, "A", cfg, 0, P)
    first, last = run.history[0], run.history[-1]
    assert last["total"] < first["total"]


def test_plateau_stops_early():
    # a vanishing learning rate cannot improve the data loss by 1%
    cfg = TrainConfig(epochs=50, layer_sizes=(2, 4, 2), patience_epochs=3, n_bc=4, batch_size=16, lr=1e-15)
    run = train_inverse(_small_pattern(), "A", cfg, 0, P)
    assert run.stop_reason == "plateau" and run.epochs == 4


def test_multi_restart_runs_distinct_seeds():
    pat = _small_pattern()
    cfg = TrainConfig(epochs=2, layer_sizes=(2, 4, 2), early_stop=False, n_bc=8)
    agg = multi_restart(pat, "A", cfg, P, n_runs=3, base_seed=1, workers=1)
    assert [r.restart_seed for r in agg.runs] == [1000, 1001, 1002]
    assert len({r.inferred.d1 for r in agg.runs}) == 3
    with pytest.raises(ValueError):
        multi_restart(pat, "A", cfg, P, n_runs=0)


def test_non_finite_loss_marks_run_failed(monkeypatch):
    import turingpinn.inference as inference
    from turingpinn.pinn import NonFiniteLossError

    def blow_up(*args, **kwargs):
        raise NonFiniteLossError("mse_f", float("inf"))

    monkeypatch.setattr(inference, "loss", blow_up)
    cfg = TrainConfig(epochs=2, layer_sizes=(2, 4, 2), n_bc=4)
    run = train_inverse(_small_pattern(), "D", cfg, 0, P)
    assert run.failed and run.stop_reason == "failed" and "mse_f" in run.error


def test_warmup_ignores_the_interior_residual():
    # without boundary points only the interior residual touches the model parameters
    pat = _small_pattern()
    cfg = TrainConfig(epochs=3, layer_sizes=(2, 4, 2), n_bc=0, warmup_epochs=3, early_stop=False)
    run = train_inverse(pat, "B", cfg, 0, P)
    start = initial_params(P, "B")
    assert (run.inferred.alpha, run.inferred.beta) == (start.alpha, start.beta)
    moved = train_inverse(pat, "B", TrainConfig(epochs=3, layer_sizes=(2, 4, 2), n_bc=0, warmup_epochs=2), 0, P)
    assert moved.inferred.alpha != start.alpha
