"""Controller updates and the full training loop."""

import math
from dataclasses import replace

import numpy as np
import pytest

from entroflow.autodiff import Tape, Tensor, backward
from entroflow.dynamics import EnergyConfig
from entroflow.errors import ConfigError, DivergenceError
from entroflow.models import (
    EncoderSpec,
    TaskSpec,
    forward,
    init_params,
    make_dataset,
    param_count,
    pred_loss,
)
from entroflow.rng import TAG_INIT, TAG_NOISE, derive_seed
from entroflow.surrogates import SurrogateConfig
from entroflow.thermostat import (
    SWEEP_HEADER,
    RunConfig,
    ThermostatConfig,
    reward_signal,
    run_training,
    sweep,
    update_beta,
    write_sweep_csv,
)

ENC = EncoderSpec(kind="mlp", input_dim=4, hidden_dims=(6,), rep_dim=4,
                  output_dim=1, activation="tanh")
TASK = TaskSpec(kind="regression_lowrank", n_train=48, n_test=48, input_dim=4,
                noise_std=0.3, seed=7)


def small_run(**kw):
    defaults = dict(encoder=ENC, task=TASK, steps=10, eta=0.05, seed=3)
    defaults.update(kw)
    return RunConfig(**defaults)


# ---------------------------------------------------------------------------
# config validation and mode masking


def test_fixed_mode_masks_both_gains():
    cfg = ThermostatConfig(mode="fixed", alpha_r=0.5, alpha_g=0.7)
    assert cfg.effective_alpha_r == 0.0 and cfg.effective_alpha_g == 0.0
    assert cfg.alpha_r == 0.5  # the stored value survives for re-moding


def test_thermostat_mode_masks_reward_gain_only():
    cfg = ThermostatConfig(mode="thermostat", alpha_r=0.5, alpha_g=0.7)
    assert cfg.effective_alpha_r == 0.0 and cfg.effective_alpha_g == 0.7


def test_rl_mode_keeps_both_gains():
    cfg = ThermostatConfig(mode="rl_thermostat", alpha_r=0.5, alpha_g=0.7)
    assert cfg.effective_alpha_r == 0.5 and cfg.effective_alpha_g == 0.7


def test_re_moding_a_fixed_config_keeps_its_gains():
    base = ThermostatConfig(mode="fixed", alpha_r=0.5, alpha_g=0.7)
    sw = replace(base, mode="thermostat")
    assert sw.effective_alpha_g == 0.7  # masking happens at use, not construction


@pytest.mark.parametrize(
    "kw",
    [
        dict(mode="annealed"),
        dict(beta0=3.0, beta_max=2.0),
        dict(beta0=-0.1),
        dict(beta_min=1.0, beta_max=0.5),
        dict(alpha_r=-0.01, mode="rl_thermostat"),
        dict(alpha_g=-0.01, mode="rl_thermostat"),
    ],
)
def test_thermostat_config_rejects(kw):
    with pytest.raises(ConfigError):
        ThermostatConfig(**kw)


@pytest.mark.parametrize(
    "kw",
    [
        dict(eta=0.0),
        dict(steps=0),
        dict(log_every=0),
        dict(task=TaskSpec(kind="regression_lowrank", input_dim=8)),
        dict(energy=EnergyConfig(beta=0.5)),  # disagrees with thermo.beta0
        dict(batch_size=1),
        dict(batch_size=10_000),
    ],
)
def test_run_config_rejects(kw):
    with pytest.raises(ConfigError):
        small_run(**kw)


def test_run_config_accepts_matching_beta():
    cfg = small_run(
        energy=EnergyConfig(beta=0.3),
        thermo=ThermostatConfig(mode="fixed", beta0=0.3),
    )
    assert cfg.thermo.beta0 == 0.3


# ---------------------------------------------------------------------------
# controller update


def test_update_beta_fixed_point():
    cfg = ThermostatConfig(mode="rl_thermostat", beta0=0.7, alpha_r=0.1,
                           alpha_g=0.2, r_star=-1.0, g_star=2.0)
    assert update_beta(0.7, -1.0, 2.0, cfg) == 0.7


def test_update_beta_reward_increment():
    cfg = ThermostatConfig(mode="rl_thermostat", beta0=1.0, beta_max=2.0,
                           alpha_r=0.1, alpha_g=0.0, r_star=0.0, g_star=0.0)
    assert math.isclose(update_beta(1.0, 1.0, 5.0, cfg), 1.1, rel_tol=0, abs_tol=1e-15)


def test_update_beta_clamps_above():
    cfg = ThermostatConfig(mode="rl_thermostat", beta0=1.0, beta_max=2.0,
                           alpha_r=1.0, alpha_g=0.0, r_star=0.0, g_star=0.0)
    assert update_beta(1.0, 5.0, 0.0, cfg) == 2.0


def test_update_beta_clamps_below():
    cfg = ThermostatConfig(mode="rl_thermostat", beta0=1.0, alpha_r=0.0,
                           alpha_g=1.0, r_star=0.0, g_star=0.0)
    assert update_beta(1.0, 0.0, 5.0, cfg) == 0.0


def test_update_beta_fixed_mode_inert():
    cfg = ThermostatConfig(mode="fixed", beta0=0.3)
    assert update_beta(0.3, 99.0, -99.0, cfg) == 0.3


def test_update_beta_requires_resolved_targets():
    cfg = ThermostatConfig(mode="rl_thermostat", beta0=0.5)
    with pytest.raises(ConfigError):
        update_beta(0.5, 0.0, 0.0, cfg)


# ---------------------------------------------------------------------------
# reward signal


def test_reward_is_negative_loss_at_uniform_classifier():
    enc = EncoderSpec(kind="mlp", input_dim=4, hidden_dims=(), rep_dim=3,
                      output_dim=4)
    task = TaskSpec(kind="classify_gaussians", n_train=32, n_test=32,
                    input_dim=4, n_classes=4, seed=1)
    ds = make_dataset(task)
    theta = np.zeros(param_count(enc))
    r = reward_signal(theta, ds.val, enc)
    assert math.isclose(r, -math.log(4.0), rel_tol=0, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# training loop


def test_single_step_yields_single_record():
    res = run_training(small_run(steps=1))
    assert len(res.trajectory) == 1
    rec = res.trajectory[0]
    assert rec.t == 0
    assert rec.beta_t == 0.0
    assert math.isfinite(rec.r_t)
    assert rec.gen_gap is not None


def test_log_every_subsamples_records():
    res = run_training(small_run(steps=10, log_every=3))
    assert [r.t for r in res.trajectory] == [0, 3, 6, 9]


def test_gen_gap_tracking_optional():
    res = run_training(small_run(steps=3, track_gen_gap=False))
    assert all(r.gen_gap is None for r in res.trajectory)


def test_zero_weight_fixed_run_is_bitwise_plain_gd():
    """With the entropy weight pinned at zero the loop is ordinary gradient
    descent on the predictive loss, to the last bit."""
    cfg = small_run(steps=12)
    res = run_training(cfg)

    ds = make_dataset(cfg.task)
    theta = init_params(cfg.encoder, derive_seed(cfg.seed, TAG_INIT)).data.copy()
    for _ in range(cfg.steps):
        th = Tensor(theta)
        with Tape() as tape:
            _, yhat = forward(th, ds.train.x, cfg.encoder)
            loss = pred_loss(yhat, ds.train.y, ds.train.kind)
        backward(tape, loss)
        theta = theta - cfg.eta * th.grad
    assert np.array_equal(res.theta_final, theta)


def test_training_reduces_loss():
    cfg = small_run(steps=60, eta=0.1)
    res = run_training(cfg)
    assert res.trajectory[-1].L_pred < res.trajectory[0].L_pred


def test_fixed_mode_keeps_beta_constant():
    cfg = small_run(
        steps=8,
        energy=EnergyConfig(beta=0.2),
        thermo=ThermostatConfig(mode="fixed", beta0=0.2),
    )
    res = run_training(cfg)
    assert all(r.beta_t == 0.2 for r in res.trajectory)
    assert res.g_star is None and res.r_star is None


def test_thermostat_mode_decreases_beta_toward_floor():
    """Force target zero and positive measured force push beta down every
    step until the floor clamps it."""
    cfg = small_run(
        steps=40,
        energy=EnergyConfig(beta=0.4),
        thermo=ThermostatConfig(mode="thermostat", beta0=0.4, beta_min=0.0,
                                beta_max=2.0, alpha_g=0.05, g_star=0.0),
    )
    res = run_training(cfg)
    betas = [r.beta_t for r in res.trajectory]
    assert res.trajectory[0].G > 0.0
    assert betas[0] == 0.4
    assert all(b2 <= b1 for b1, b2 in zip(betas, betas[1:]))
    assert betas[-1] < betas[0]
    assert all(0.0 <= b <= 2.0 for b in betas)
    # once the floor is hit the weight stays there
    if 0.0 in betas:
        first = betas.index(0.0)
        assert all(b == 0.0 for b in betas[first:])


def test_rl_mode_respects_bounds_under_large_gains():
    cfg = small_run(
        steps=12,
        energy=EnergyConfig(beta=0.1),
        thermo=ThermostatConfig(mode="rl_thermostat", beta0=0.1, beta_min=0.0,
                                beta_max=0.6, alpha_r=50.0, alpha_g=0.0,
                                r_star=-100.0, g_star=0.0),
    )
    res = run_training(cfg)
    betas = [r.beta_t for r in res.trajectory]
    assert all(0.0 <= b <= 0.6 for b in betas)
    assert max(betas) == 0.6  # reward far above target drives it to the cap


def test_force_target_self_calibrates_to_initial_force():
    cfg = small_run(
        steps=6,
        energy=EnergyConfig(beta=0.3),
        thermo=ThermostatConfig(mode="thermostat", beta0=0.3, alpha_g=0.02),
    )
    res = run_training(cfg)
    assert res.g_star == res.trajectory[0].G


def test_reward_target_self_calibrates_to_early_mean():
    cfg = small_run(
        steps=14,
        energy=EnergyConfig(beta=0.1),
        thermo=ThermostatConfig(mode="rl_thermostat", beta0=0.1,
                                alpha_r=0.01, alpha_g=0.0, g_star=0.0),
    )
    res = run_training(cfg)
    early = [r.r_t for r in res.trajectory[:10]]
    assert math.isclose(res.r_star, float(np.mean(early)), rel_tol=0, abs_tol=1e-15)


def test_run_is_deterministic():
    cfg = small_run(
        steps=9,
        energy=EnergyConfig(beta=0.2, surrogate=SurrogateConfig(kind="variance")),
        thermo=ThermostatConfig(mode="rl_thermostat", beta0=0.2),
    )
    a = run_training(cfg)
    b = run_training(cfg)
    assert np.array_equal(a.theta_final, b.theta_final)
    assert a.trajectory == b.trajectory


def test_minibatch_mode_runs_and_differs_from_full_batch():
    full = run_training(small_run(steps=8))
    mini = run_training(small_run(steps=8, batch_size=16))
    mini2 = run_training(small_run(steps=8, batch_size=16))
    assert np.array_equal(mini.theta_final, mini2.theta_final)
    assert not np.array_equal(mini.theta_final, full.theta_final)
    assert all(math.isfinite(r.F) for r in mini.trajectory)


def test_resampled_reward_changes_reward_not_dynamics():
    task = TaskSpec(kind="regression_lowrank", n_train=48, n_test=96,
                    input_dim=4, noise_std=0.3, seed=7)
    fixed = run_training(small_run(steps=6, task=task))
    moving = run_training(small_run(steps=6, task=task, resample_reward=True))
    assert np.array_equal(fixed.theta_final, moving.theta_final)
    assert any(
        a.r_t != b.r_t for a, b in zip(fixed.trajectory, moving.trajectory)
    )


def test_divergence_reports_step_and_partial_trajectory():
    cfg = small_run(steps=50, eta=1e6)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as err:
            run_training(cfg)
    assert err.value.step is not None and err.value.step < 50
    assert isinstance(err.value.trajectory, list)
    assert len(err.value.trajectory) == err.value.step


# ---------------------------------------------------------------------------
# sweeps


def sweep_base(**kw):
    defaults = dict(
        encoder=ENC, task=TASK, steps=6, eta=0.05, seed=11,
        energy=EnergyConfig(surrogate=SurrogateConfig(kind="variance")),
    )
    defaults.update(kw)
    return RunConfig(**defaults)


def test_sweep_grid_order_and_summary():
    result = sweep(sweep_base(), betas=[0.0, 0.25], surrogates=["variance"],
                   modes=["fixed", "thermostat"])
    keys = [(r.beta, r.surrogate, r.mode) for r in result.rows]
    assert keys == [
        (0.0, "variance", "fixed"),
        (0.0, "variance", "thermostat"),
        (0.25, "variance", "fixed"),
        (0.25, "variance", "thermostat"),
    ]
    assert not result.failures
    assert set(result.trajectories) == set(keys)
    for row in result.rows:
        if row.mode == "fixed":
            assert row.mean_beta_t == row.beta
        assert math.isfinite(row.final_test_loss)
        assert math.isfinite(row.mean_reward)


def test_sweep_cells_use_independent_seeds():
    result = sweep(sweep_base(), betas=[0.1], surrogates=["variance", "logdet"],
                   modes=["fixed"])
    a = result.trajectories[(0.1, "variance", "fixed")]
    b = result.trajectories[(0.1, "logdet", "fixed")]
    # different cell seed => different initialization => different losses
    assert a[0].L_pred != b[0].L_pred


def test_sweep_records_cell_failures_and_continues():
    base = sweep_base(thermo=ThermostatConfig(mode="fixed", beta_max=0.2))
    result = sweep(base, betas=[0.1, 0.5], surrogates=["variance"],
                   modes=["fixed", "thermostat"])
    assert len(result.rows) == 2
    assert len(result.failures) == 2
    for key, message in result.failures:
        assert key[0] == 0.5
        assert "ConfigError" in message


def test_sweep_parallel_matches_serial():
    base = sweep_base(steps=4)
    serial = sweep(base, betas=[0.0, 0.2], surrogates=["variance"], modes=["fixed"])
    parallel = sweep(base, betas=[0.0, 0.2], surrogates=["variance"], modes=["fixed"],
                     jobs=2)
    assert serial.rows == parallel.rows


def test_sweep_csv_round_trip(tmp_path):
    result = sweep(sweep_base(), betas=[0.0], surrogates=["variance"],
                   modes=["fixed", "rl_thermostat"])
    path = tmp_path / "summary.csv"
    write_sweep_csv(path, result)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert len(lines) == 1 + len(result.rows)
    for line, row in zip(lines[1:], result.rows):
        fields = line.split(",")
        assert fields[1] == row.surrogate
        assert fields[2] == row.mode
        assert float(fields[3]) == row.final_test_loss
        assert fields[8] in ("true", "false")
