"""The full training loop with an adaptive entropy-weight controller.

Three controller modes decide how the entropy weight beta evolves:

* ``fixed``         -- beta stays at beta0; both feedback gains are ignored.
* ``thermostat``    -- force feedback only: beta moves against the gap
  between the measured information force and its target (alpha_r ignored).
* ``rl_thermostat`` -- reward and force feedback combined.

The update is projected onto [beta_min, beta_max]:

    beta <- clip(beta + alpha_r*(r - r_star) - alpha_g*(G - G_star))

Targets left as ``None`` self-calibrate: G_star locks to the initial force,
r_star tracks the running mean of the first 10 rewards.  Each step runs:
sample batch -> forward -> noisy representation -> entropy + loss -> gradient
step -> observe reward (post-update, matching the loop order) -> update beta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from concurrent.futures import ProcessPoolExecutor
import csv
import math

import numpy as np

from .dynamics import (
    EffectivenessConfig,
    EnergyConfig,
    StepRecord,
    effectiveness,
    make_model_objective,
    step_eval,
)
from .errors import ConfigError, DivergenceError
from .models import (
    Batch,
    EncoderSpec,
    TaskSpec,
    eval_loss,
    init_params,
    make_dataset,
)
from .autodiff import Tensor
from .rng import TAG_BATCH, TAG_INIT, TAG_NOISE, TAG_SWEEP, derive_seed, make_rng

THERMOSTAT_MODES = ("fixed", "thermostat", "rl_thermostat")


@dataclass(frozen=True)
class ThermostatConfig:
    mode: str = "fixed"
    beta0: float = 0.0
    beta_min: float = 0.0
    beta_max: float = 10.0
    alpha_r: float = 0.01
    alpha_g: float = 0.01
    r_star: float | None = None  # None: running mean of first 10 rewards
    g_star: float | None = None  # None: initial force G_0

    def __post_init__(self):
        if self.mode not in THERMOSTAT_MODES:
            raise ConfigError(f"unknown thermostat mode {self.mode!r}")
        if not 0.0 <= self.beta_min <= self.beta_max:
            raise ConfigError(
                f"need 0 <= beta_min <= beta_max, got [{self.beta_min}, {self.beta_max}]"
            )
        if not self.beta_min <= self.beta0 <= self.beta_max:
            raise ConfigError(
                f"beta0 = {self.beta0} outside [{self.beta_min}, {self.beta_max}]"
            )
        if self.alpha_r < 0 or self.alpha_g < 0:
            raise ConfigError("controller gains must be >= 0")

    @property
    def effective_alpha_r(self) -> float:
        """Reward gain after mode masking (only rl_thermostat uses reward)."""
        return self.alpha_r if self.mode == "rl_thermostat" else 0.0

    @property
    def effective_alpha_g(self) -> float:
        """Force gain after mode masking (fixed mode uses no feedback)."""
        return 0.0 if self.mode == "fixed" else self.alpha_g


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderSpec = EncoderSpec()
    task: TaskSpec = TaskSpec(kind="regression_lowrank")
    energy: EnergyConfig = EnergyConfig()
    thermo: ThermostatConfig = ThermostatConfig()
    eta: float = 0.05
    steps: int = 200
    seed: int = 0
    log_every: int = 1
    batch_size: int | None = None  # None: full batch (deterministic dynamics)
    resample_reward: bool = False
    track_gen_gap: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
        if self.encoder.input_dim != self.task.input_dim:
            raise ConfigError(
                f"encoder.input_dim {self.encoder.input_dim} != "
                f"task.input_dim {self.task.input_dim}"
            )
        if self.encoder.output_dim != self.task.output_dim:
            raise ConfigError(
                f"encoder.output_dim {self.encoder.output_dim} != "
                f"task output_dim {self.task.output_dim}"
            )
        if self.energy.beta != self.thermo.beta0:
            raise ConfigError(
                f"energy.beta ({self.energy.beta}) must equal thermo.beta0 "
                f"({self.thermo.beta0}); the run takes its initial weight from beta0"
            )
        if self.batch_size is not None and not 2 <= self.batch_size <= self.task.n_train:
            raise ConfigError(
                f"batch_size must lie in [2, n_train], got {self.batch_size}"
            )


def update_beta(beta_t: float, r_t: float, g_t: float, cfg: ThermostatConfig) -> float:
    """Projected controller update; fixed mode returns beta_t unchanged.

    The stored gains are masked by mode here (not at construction), so a
    config can be re-moded with ``dataclasses.replace`` without losing them.
    """
    if cfg.mode == "fixed":
        return beta_t
    if cfg.r_star is None or cfg.g_star is None:
        raise ConfigError("update_beta needs resolved targets (r_star/g_star are None)")
    raw = (
        beta_t
        + cfg.effective_alpha_r * (r_t - cfg.r_star)
        - cfg.effective_alpha_g * (g_t - cfg.g_star)
    )
    return min(max(raw, cfg.beta_min), cfg.beta_max)


def reward_signal(theta_data: np.ndarray, val_batch: Batch, enc: EncoderSpec) -> float:
    """Negative predictive loss on a held-out batch (synthetic feedback)."""
    return -eval_loss(Tensor(theta_data), val_batch, enc)


@dataclass
class RunResult:
    trajectory: list[StepRecord]
    theta_final: np.ndarray
    final_train_loss: float
    final_test_loss: float
    final_gen_gap: float
    g_star: float | None  # resolved force target (None in fixed mode)
    r_star: float | None


def run_training(cfg: RunConfig) -> RunResult:
    """Execute the training loop; one StepRecord per logged step.

    Deterministic per config (counter-based noise streams keyed off the run
    seed).  Divergence aborts with the offending step index and the partial
    trajectory attached to the error.
    """
    ds = make_dataset(cfg.task)
    theta = init_params(cfg.encoder, derive_seed(cfg.seed, TAG_INIT)).data.copy()
    rng_batch = make_rng(cfg.seed, TAG_BATCH)
    n_train = cfg.task.n_train

    records: list[StepRecord] = []
    beta_t = cfg.thermo.beta0
    rewards: list[float] = []
    g_star = cfg.thermo.g_star
    adaptive = cfg.thermo.mode != "fixed"

    for t in range(cfg.steps):
        if not np.isfinite(theta).all():
            raise DivergenceError(
                f"non-finite parameters entering step {t}", step=t, trajectory=records
            )
        if cfg.batch_size is None:
            batch = ds.train
        else:
            idx = rng_batch.choice(n_train, size=cfg.batch_size, replace=False)
            batch = Batch(ds.train.x[idx], ds.train.y[idx], ds.train.kind)
        objective = make_model_objective(
            cfg.encoder, batch, replace(cfg.energy, beta=beta_t),
            noise_seed=derive_seed(cfg.seed, TAG_NOISE, t),
        )
        try:
            ev = step_eval(objective, theta, beta_t)
        except np.linalg.LinAlgError as exc:
            # overflow inside a finite parameter step (inf - inf products)
            raise DivergenceError(
                f"linear-algebra failure at step {t}: {exc}",
                step=t, trajectory=records,
            ) from exc
        if not (math.isfinite(ev.f) and np.isfinite(ev.grad_f).all()):
            raise DivergenceError(
                f"non-finite energy or gradient at step {t}", step=t, trajectory=records
            )
        if g_star is None:
            g_star = ev.g  # self-calibrated force target: the initial force

        theta_next = theta - cfg.eta * ev.grad_f

        if cfg.resample_reward:
            k = min(64, len(ds.val.x))
            ridx = rng_batch.choice(len(ds.val.x), size=k, replace=False)
            val_batch = Batch(ds.val.x[ridx], ds.val.y[ridx], ds.val.kind)
        else:
            val_batch = ds.val
        r_t = reward_signal(theta_next, val_batch, cfg.encoder)
        rewards.append(r_t)

        if t % cfg.log_every == 0:
            gap = None
            if cfg.track_gen_gap:
                tr = eval_loss(Tensor(theta), ds.train, cfg.encoder)
                te = eval_loss(Tensor(theta), ds.test, cfg.encoder)
                gap = te - tr
            records.append(
                StepRecord(
                    t=t,
                    L_pred=ev.l_pred,
                    H=ev.h,
                    F=ev.f,
                    G=ev.g,
                    I_inj=ev.i_inj,
                    D_diss=ev.d_diss,
                    beta_t=beta_t,
                    r_t=r_t,
                    gen_gap=gap,
                    grad_norm_L=float(np.linalg.norm(ev.grad_l)),
                )
            )

        if adaptive:
            r_star = (
                cfg.thermo.r_star
                if cfg.thermo.r_star is not None
                else float(np.mean(rewards[:10]))
            )
            resolved = replace(cfg.thermo, r_star=r_star, g_star=g_star)
            beta_t = update_beta(beta_t, r_t, ev.g, resolved)
        theta = theta_next

    train_loss = eval_loss(Tensor(theta), ds.train, cfg.encoder)
    test_loss = eval_loss(Tensor(theta), ds.test, cfg.encoder)
    return RunResult(
        trajectory=records,
        theta_final=theta,
        final_train_loss=train_loss,
        final_test_loss=test_loss,
        final_gen_gap=test_loss - train_loss,
        g_star=g_star if adaptive else None,
        r_star=(
            None
            if not adaptive
            else (cfg.thermo.r_star if cfg.thermo.r_star is not None
                  else float(np.mean(rewards[:10])))
        ),
    )


# ---------------------------------------------------------------------------
# grid sweeps

SWEEP_HEADER = "beta,surrogate,mode,final_test_loss,gen_gap,mean_G,mean_beta_t,mean_reward,effective"


@dataclass(frozen=True)
class SweepRow:
    beta: float
    surrogate: str
    mode: str
    final_test_loss: float
    gen_gap: float
    mean_G: float
    mean_beta_t: float
    mean_reward: float
    effective: bool


@dataclass
class SweepResult:
    rows: list[SweepRow]
    trajectories: dict[tuple[float, str, str], list[StepRecord]]
    failures: list[tuple[tuple[float, str, str], str]]


def cell_config(
    base: RunConfig, beta: float, surrogate: str, mode: str, cell_seed: int
) -> RunConfig:
    return replace(
        base,
        energy=replace(
            base.energy, beta=beta, surrogate=replace(base.energy.surrogate, kind=surrogate)
        ),
        thermo=replace(base.thermo, mode=mode, beta0=beta),
        seed=cell_seed,
    )


def sweep(
    base: RunConfig,
    betas: list[float],
    surrogates: list[str],
    modes: list[str],
    jobs: int = 1,
    ecfg: EffectivenessConfig = EffectivenessConfig(),
) -> SweepResult:
    """One run per (beta, surrogate, mode) cell with independent derived seeds.

    Cell failures are recorded and the rest of the grid continues.  With
    ``jobs > 1`` cells run in separate processes; results merge in grid order
    either way, so the summary is deterministic.
    """
    if not (betas and surrogates and modes):
        raise ConfigError("sweep needs nonempty betas, surrogates, and modes")
    cells: list[tuple[float, str, str]] = []
    cfgs: list[RunConfig | Exception] = []
    for ib, beta in enumerate(betas):
        for isur, surrogate in enumerate(surrogates):
            for imode, mode in enumerate(modes):
                cells.append((beta, surrogate, mode))
                try:
                    cfgs.append(
                        cell_config(
                            base, beta, surrogate, mode,
                            derive_seed(base.seed, TAG_SWEEP, ib, isur, imode),
                        )
                    )
                except Exception as exc:  # bad cell config: recorded, grid continues
                    cfgs.append(exc)

    outcomes: list[RunResult | Exception]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                None if isinstance(c, Exception) else pool.submit(run_training, c)
                for c in cfgs
            ]
            outcomes = []
            for fut, c in zip(futures, cfgs):
                if fut is None:
                    outcomes.append(c)
                    continue
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # recorded, grid continues
                    outcomes.append(exc)
    else:
        outcomes = []
        for c in cfgs:
            if isinstance(c, Exception):
                outcomes.append(c)
                continue
            try:
                outcomes.append(run_training(c))
            except Exception as exc:
                outcomes.append(exc)

    rows, trajectories, failures = [], {}, []
    for key, outcome in zip(cells, outcomes):
        if isinstance(outcome, Exception):
            failures.append((key, f"{type(outcome).__name__}: {outcome}"))
            continue
        traj = outcome.trajectory
        frac, effective_flag = effectiveness(traj, ecfg)
        rows.append(
            SweepRow(
                beta=key[0],
                surrogate=key[1],
                mode=key[2],
                final_test_loss=outcome.final_test_loss,
                gen_gap=outcome.final_gen_gap,
                mean_G=float(np.mean([r.G for r in traj])),
                mean_beta_t=float(np.mean([r.beta_t for r in traj])),
                mean_reward=float(np.mean([r.r_t for r in traj])),
                effective=effective_flag,
            )
        )
        trajectories[key] = traj
    return SweepResult(rows=rows, trajectories=trajectories, failures=failures)


def write_sweep_csv(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER.split(","))
        for r in result.rows:
            writer.writerow(
                [
                    f"{r.beta:.17g}",
                    r.surrogate,
                    r.mode,
                    f"{r.final_test_loss:.17g}",
                    f"{r.gen_gap:.17g}",
                    f"{r.mean_G:.17g}",
                    f"{r.mean_beta_t:.17g}",
                    f"{r.mean_reward:.17g}",
                    "true" if r.effective else "false",
                ]
            )
