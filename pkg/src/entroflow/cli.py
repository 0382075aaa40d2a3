"""Command-line harness.

Subcommands
-----------
train          one training run, trajectory CSV + plots
sweep          (beta, surrogate, mode) grid, summary CSV + per-cell trajectories
langevin       particle simulation, histogram density + variance estimate
fokker-planck  density-grid evolution, diagnostics CSV
scaling        power-law model samples + exponent fit
memory         storage-capacity sweep, recall statistics CSV
gradcheck      finite-difference audit of every gradient path
checks         all module invariant suites (CI entry point)

Every run writes its outputs plus a ``resolved_config.json`` into
``<output_dir>/<command>/<tag-or-timestamp>/``.  Exit codes: 0 success,
1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import finite_diff_grad
from .config import (
    ExperimentConfig,
    config_to_dict,
    dump_config,
    load_config,
)
from .dynamics import (
    EnergyConfig,
    descent_check,
    energy_value,
    run_flow,
    step_eval,
    toy_objective,
    make_model_objective,
    write_trajectory_csv,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateBatchError,
    DivergenceError,
    FactorizationError,
    FitError,
    ShapeError,
    StabilityError,
    UndefinedInformationError,
)
from .langevin import (
    density_from_values,
    double_well_potential,
    entropy_production_terms,
    fp_run,
    fp_stability_limit,
    free_energy,
    gaussian_density,
    init_ensemble,
    langevin_run,
    quadratic_potential,
    stationary_density,
    uniform_density,
    write_density_csv,
    write_fp_csv,
)
from .memory import capacity_sweep, energy as hopfield_energy, hebbian_store, run_dynamics, write_memory_csv
from .models import Batch, EncoderSpec, TaskSpec, init_params, make_dataset
from .plotting import Series, emit_plot, plot_density, plot_trajectory
from .rng import TAG_INIT, TAG_NOISE, derive_seed, make_rng
from .scaling import ScalingModel, fit_power_law, sample_excess, write_scaling_csv
from .surrogates import SURROGATE_KINDS, SurrogateConfig
from .thermostat import (
    RunConfig,
    ThermostatConfig,
    run_training,
    sweep as run_sweep,
    write_sweep_csv,
)

NUMERICAL_ERRORS = (
    DivergenceError,
    StabilityError,
    FactorizationError,
    FitError,
    DegenerateBatchError,
    UndefinedInformationError,
    np.linalg.LinAlgError,
)

VALIDATION_ERRORS = (ConfigError, ContractError, ShapeError, FileNotFoundError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _csv_names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser() -> _Parser:
    parser = _Parser(prog="entroflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--output-dir", type=str, default=None)
        p.add_argument("--tag", type=str, default=None,
                       help="output folder name (default: timestamp)")
        p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("train", help="one training run")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--beta", type=float, default=None,
                   help="entropy weight (sets the controller start too)")
    p.add_argument("--surrogate", choices=SURROGATE_KINDS, default=None)
    p.add_argument("--mode", choices=("fixed", "thermostat", "rl_thermostat"),
                   default=None)

    p = sub.add_parser("sweep", help="grid over beta x surrogate x mode")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--betas", type=str, default=None, help="comma-separated")
    p.add_argument("--surrogates", type=str, default=None)
    p.add_argument("--modes", type=str, default=None)
    p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("langevin", help="particle simulation")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--n-particles", type=int, default=None)
    p.add_argument("--potential", choices=("quadratic", "double_well"), default=None)

    p = sub.add_parser("fokker-planck", help="density-grid evolution")
    common(p)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--cells", type=int, default=None, help="grid resolution")
    p.add_argument("--potential", choices=("quadratic", "double_well"), default=None)

    p = sub.add_parser("scaling", help="power-law samples and exponent fit")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--svals", type=str, default=None, help="comma-separated scales")

    p = sub.add_parser("memory", help="storage-capacity sweep")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--n", type=int, default=None, help="units per network")
    p.add_argument("--seeds", type=int, default=None, help="seeds per load ratio")
    p.add_argument("--t-steps", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tol", type=float, default=1e-5)

    p = sub.add_parser("checks", help="all invariant suites")
    common(p)

    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.tag is not None:
        cfg = replace(cfg, tag=args.tag)
    if args.no_plots:
        cfg = replace(cfg, plots=False)
    return cfg


def _outdir(cfg: ExperimentConfig, command: str) -> Path:
    tag = cfg.tag if cfg.tag is not None else time.strftime("%Y%m%d-%H%M%S")
    out = Path(cfg.output_dir) / command / tag
    out.mkdir(parents=True, exist_ok=True)
    return out


def _override_run(run: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.steps is not None:
        run = replace(run, steps=args.steps)
    if getattr(args, "eta", None) is not None:
        run = replace(run, eta=args.eta)
    if getattr(args, "beta", None) is not None:
        run = replace(
            run,
            energy=replace(run.energy, beta=args.beta),
            thermo=replace(run.thermo, beta0=args.beta),
        )
    if getattr(args, "surrogate", None) is not None:
        run = replace(
            run,
            energy=replace(run.energy,
                           surrogate=replace(run.energy.surrogate, kind=args.surrogate)),
        )
    if getattr(args, "mode", None) is not None:
        run = replace(run, thermo=replace(run.thermo, mode=args.mode))
    return run


def _potential(name: str):
    return quadratic_potential() if name == "quadratic" else double_well_potential()


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = _load(args)
    cfg = replace(cfg, run=_override_run(cfg.run, args))
    out = _outdir(cfg, "train")
    dump_config(cfg, out / "resolved_config.json")
    result = run_training(cfg.run)
    write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    if cfg.plots:
        plot_trajectory(result.trajectory, out / "trajectory.svg")
    last = result.trajectory[-1]
    print(f"train: {cfg.run.steps} steps, final L_pred={last.L_pred:.6g}, "
          f"H={last.H:.6g}, beta_t={last.beta_t:.6g}")
    gap = "n/a" if result.final_gen_gap is None else f"{result.final_gen_gap:.6g}"
    print(f"train: test_loss={result.final_test_loss:.6g} gen_gap={gap}")
    print(f"train: outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    run = _override_run(cfg.run, args)
    sw = cfg.sweep
    if args.betas is not None:
        sw = replace(sw, betas=_csv_floats(args.betas))
    if args.surrogates is not None:
        sw = replace(sw, surrogates=_csv_names(args.surrogates))
    if args.modes is not None:
        sw = replace(sw, modes=_csv_names(args.modes))
    if args.jobs is not None:
        sw = replace(sw, jobs=args.jobs)
    cfg = replace(cfg, run=run, sweep=sw)
    out = _outdir(cfg, "sweep")
    dump_config(cfg, out / "resolved_config.json")

    result = run_sweep(run, list(sw.betas), list(sw.surrogates), list(sw.modes),
                       jobs=sw.jobs)
    write_sweep_csv(out / "summary.csv", result)
    for (beta, surrogate, mode), traj in result.trajectories.items():
        name = f"trajectory_b{beta:g}_{surrogate}_{mode}.csv"
        write_trajectory_csv(out / name, traj)
    if result.failures:
        (out / "failures.json").write_text(json.dumps(
            [{"beta": k[0], "surrogate": k[1], "mode": k[2], "error": msg}
             for k, msg in result.failures], indent=2) + "\n")
        for key, msg in result.failures:
            print(f"sweep: cell {key} failed: {msg}", file=sys.stderr)
    if cfg.plots and result.rows:
        metrics = ("final_test_loss", "gen_gap", "mean_G", "mean_beta_t", "mean_reward")
        combos = sorted({(r.surrogate, r.mode) for r in result.rows})
        for metric in metrics:
            series = []
            for surrogate, mode in combos:
                rows = [r for r in result.rows
                        if r.surrogate == surrogate and r.mode == mode]
                series.append(Series(
                    f"{surrogate}/{mode}",
                    np.array([r.beta for r in rows]),
                    np.array([getattr(r, metric) for r in rows]),
                ))
            emit_plot(series, out / f"plot_{metric}.svg", xlabel="beta",
                      ylabel=metric)
    print(f"sweep: {len(result.rows)} cells ok, {len(result.failures)} failed")
    print(f"sweep: outputs in {out}")
    return 0 if result.rows else 2


def cmd_langevin(args) -> int:
    cfg = _load(args)
    s = cfg.langevin
    for field, arg in (("seed", "seed"), ("beta", "beta"), ("dt", "dt"),
                       ("steps", "steps"), ("n_particles", "n_particles"),
                       ("potential", "potential")):
        v = getattr(args, arg, None)
        if v is not None:
            s = replace(s, **{field: v})
    cfg = replace(cfg, langevin=s)
    out = _outdir(cfg, "langevin")
    dump_config(cfg, out / "resolved_config.json")

    pot = _potential(s.potential)
    ens = init_ensemble(s.n_particles, beta=s.beta, seed=s.seed,
                        loc=s.init_loc, scale=s.init_scale)
    ens = langevin_run(ens, pot, dt=s.dt, nsteps=s.steps, seed=s.seed)
    var = float(np.var(ens.positions[:, 0]))
    bins = uniform_density(s.lo, s.hi, s.m)
    fe = free_energy(ens, pot, s.beta, grid=bins)
    counts, _ = np.histogram(ens.positions[:, 0], bins=s.m, range=(s.lo, s.hi))
    hist = density_from_values(s.lo, s.hi, s.m, counts.astype(float))
    write_density_csv(out / "density.csv", hist)
    if cfg.plots:
        plot_density(hist, out / "density.svg", name=f"t={s.steps * s.dt:g}")
    print(f"langevin: {s.steps} steps x {s.n_particles} particles "
          f"({kernels.BACKEND} backend)")
    print(f"langevin: position variance={var:.6g} (stationary target "
          f"{s.beta:.6g} for the quadratic well)")
    print(f"langevin: free energy estimate={fe:.6g}")
    print(f"langevin: outputs in {out}")
    return 0


def cmd_fokker_planck(args) -> int:
    cfg = _load(args)
    s = cfg.fokker_planck
    if args.beta is not None:
        s = replace(s, beta=args.beta)
    if args.steps is not None:
        s = replace(s, steps=args.steps)
    if args.cells is not None:
        s = replace(s, m=args.cells)
    if args.potential is not None:
        s = replace(s, potential=args.potential)
    cfg = replace(cfg, fokker_planck=s)
    out = _outdir(cfg, "fokker-planck")
    dump_config(cfg, out / "resolved_config.json")

    pot = _potential(s.potential)
    g0 = gaussian_density(s.lo, s.hi, s.m, mean=s.init_mean, var=s.init_var)
    dt = s.dt_fraction * fp_stability_limit(g0, pot, s.beta)
    run = fp_run(g0, pot, s.beta, dt, s.steps, record_every=s.record_every)
    write_fp_csv(out / "fp.csv", run)
    write_density_csv(out / "density_initial.csv", g0)
    write_density_csv(out / "density_final.csv", run.grid)
    if cfg.plots:
        ts = np.array([r.t for r in run.records])
        emit_plot(
            [Series("free_energy", ts, np.array([r.free_energy for r in run.records])),
             Series("entropy", ts, np.array([r.entropy for r in run.records]))],
            out / "fp_diagnostics.svg", xlabel="t", ylabel="value",
        )
        plot_density(run.grid, out / "density_final.svg", name=f"t={s.steps * dt:g}")
    values = [r.free_energy for r in run.records]
    max_uphill = max(b - a for a, b in zip(values, values[1:]))
    mass_err = max(abs(r.mass - 1.0) for r in run.records)
    print(f"fokker-planck: {s.steps} steps at dt={dt:.6g} "
          f"({s.dt_fraction:g} of the stability limit)")
    print(f"fokker-planck: max mass error={mass_err:.3g}, "
          f"clipped cells={run.clipped}, max free-energy uphill={max_uphill:.3g}")
    print(f"fokker-planck: outputs in {out}")
    return 0


def cmd_scaling(args) -> int:
    cfg = _load(args)
    s = cfg.scaling
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if args.noise is not None:
        s = replace(s, noise=args.noise)
    if args.svals is not None:
        s = replace(s, svals=_csv_floats(args.svals))
    cfg = replace(cfg, scaling=s)
    out = _outdir(cfg, "scaling")
    dump_config(cfg, out / "resolved_config.json")

    model = ScalingModel(a=s.a, b=s.b, alpha=s.alpha, gamma_exp=s.gamma_exp,
                         q=s.q, l_inf=s.l_inf)
    samples = sample_excess(model, s.svals, noise=s.noise, seed=s.seed)
    write_scaling_csv(out / "scaling.csv", samples)
    fit = fit_power_law(samples)
    if cfg.plots:
        emit_plot(
            [Series("log10 excess", np.log10(samples[:, 0]), np.log10(samples[:, 1]))],
            out / "scaling.svg", xlabel="log10 S", ylabel="log10 excess",
        )
    print(f"scaling: kappa_hat={fit.kappa_hat:.6g} (model kappa={model.kappa:.6g}), "
          f"r2={fit.r_squared:.6g}, excluded={fit.n_excluded}")
    print(f"scaling: outputs in {out}")
    return 0


def cmd_memory(args) -> int:
    cfg = _load(args)
    s = cfg.memory
    if args.seed is not None:
        s = replace(s, base_seed=args.seed)
    if args.n is not None:
        s = replace(s, n=args.n)
    if args.seeds is not None:
        s = replace(s, n_seeds=args.seeds)
    if args.t_steps is not None:
        s = replace(s, t_steps=args.t_steps)
    cfg = replace(cfg, memory=s)
    out = _outdir(cfg, "memory")
    dump_config(cfg, out / "resolved_config.json")

    rows = capacity_sweep(
        n=s.n, load_ratios=s.load_ratios, n_seeds=s.n_seeds, t_steps=s.t_steps,
        flip_fraction=s.flip_fraction, retrieval_threshold=s.retrieval_threshold,
        tau_r=s.tau_r, mode=s.mode, base_seed=s.base_seed,
    )
    write_memory_csv(out / "memory.csv", rows)
    loads = sorted({r.load_ratio for r in rows})
    recovered, final_means = [], []
    for load in loads:
        cells = [r for r in rows if r.load_ratio == load]
        rate = sum(r.recoverable for r in cells) / len(cells)
        transient = sum(r.m_max >= 0.8 and r.m_final < 0.3 for r in cells)
        recovered.append(rate)
        final_means.append(float(np.mean([r.m_final for r in cells])))
        print(f"memory: load={load:.3f} recoverable={rate:.2f} "
              f"transient_episodes={transient}/{len(cells)}")
    if cfg.plots:
        emit_plot(
            [Series("recoverable rate", np.array(loads), np.array(recovered)),
             Series("mean final overlap", np.array(loads), np.array(final_means))],
            out / "memory.svg", xlabel="load ratio P/N", ylabel="value",
        )
    print(f"memory: outputs in {out}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def _gradcheck_cases(seed: int):
    """Energy gradients for every surrogate and both encoder families."""
    task_r = TaskSpec(kind="regression_lowrank", n_train=12, n_test=12,
                      input_dim=4, noise_std=0.3, seed=seed)
    task_c = TaskSpec(kind="classify_gaussians", n_train=12, n_test=12,
                      input_dim=4, n_classes=3, seed=seed)
    enc_mlp = EncoderSpec(kind="mlp", input_dim=4, hidden_dims=(5,), rep_dim=3,
                          output_dim=1, activation="tanh")
    enc_relu = EncoderSpec(kind="mlp", input_dim=4, hidden_dims=(5,), rep_dim=3,
                           output_dim=3, activation="relu")
    enc_attn = EncoderSpec(kind="attn1", input_dim=4, hidden_dims=(2,), rep_dim=3,
                           output_dim=1, activation="tanh")
    pairs = [
        ("mlp-tanh/regression", enc_mlp, task_r),
        ("mlp-relu/classify", enc_relu, task_c),
        ("attn1/regression", enc_attn, task_r),
    ]
    for kind in SURROGATE_KINDS:
        for label, enc, task in pairs:
            yield f"{label}/{kind}", enc, task, kind


def run_gradcheck(seed: int = 7, tol: float = 1e-5):
    """Compare analytic and finite-difference gradients of the full energy."""
    results = []
    for label, enc, task, kind in _gradcheck_cases(seed):
        ds = make_dataset(task)
        batch = Batch(ds.train.x, ds.train.y, ds.train.kind)
        cfg = EnergyConfig(
            beta=0.3, gamma=0.1, lam=0.05,
            surrogate=SurrogateConfig(kind=kind, epsilon=1e-3, sigma_xi=0.1),
            omega_kind="l2", dec_kind="quadratic_penalty",
        )
        noise_seed = derive_seed(seed, TAG_NOISE, len(results))
        objective = make_model_objective(enc, batch, cfg, noise_seed)
        theta = init_params(enc, derive_seed(seed, TAG_INIT, len(results))).data
        analytic = step_eval(objective, theta, cfg.beta).grad_f
        fd = finite_diff_grad(lambda td: energy_value(objective, td.data, cfg), theta)
        rel = float(np.linalg.norm(fd - analytic) / max(1.0, np.linalg.norm(analytic)))
        results.append((label, rel))
    return results


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed, tol=args.tol)
    worst = 0.0
    for label, rel in results:
        print(f"gradcheck: {label}: rel_err={rel:.3e}")
        worst = max(worst, rel)
    ok = worst <= args.tol
    print(f"gradcheck: max rel_err={worst:.3e} tol={args.tol:g} "
          f"=> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# checks


def _check_descent() -> tuple[bool, str]:
    ok = True
    for seed in range(10):
        rng = make_rng(seed, TAG_INIT)
        target = rng.standard_normal(4)
        objective = toy_objective(
            lambda th, target=target: 0.5 * ((th - target) * (th - target)).sum(),
            lambda th: 0.5 * (th * th).sum(),
        )
        traj = run_flow(objective, rng.standard_normal(4), eta=0.25, steps=40, beta=0.2)
        report = descent_check(traj, eta=0.25, l_smooth=1.2)
        ok = ok and report.ok and report.guaranteed
    return ok, "monotone energy descent on 10 random quadratics"


def _check_zero_weight_reduction() -> tuple[bool, str]:
    from .autodiff import Tape, Tensor, backward
    from .models import forward, pred_loss

    cfg = RunConfig(
        encoder=EncoderSpec(input_dim=4, hidden_dims=(5,), rep_dim=3, output_dim=1),
        task=TaskSpec(kind="regression_lowrank", n_train=24, n_test=24, input_dim=4,
                      seed=3),
        steps=8, eta=0.1, seed=5,
    )
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
    return bool(np.array_equal(res.theta_final, theta)), \
        "zero entropy weight reduces to plain gradient descent bitwise"


def _check_fp_conservation() -> tuple[bool, str]:
    pot = quadratic_potential()
    g = gaussian_density(-6.0, 6.0, 200, mean=1.5, var=0.3)
    dt = 0.5 * fp_stability_limit(g, pot, 0.5)
    run = fp_run(g, pot, 0.5, dt, 2000, record_every=200)
    mass_ok = all(abs(r.mass - 1.0) <= 1e-9 for r in run.records)
    values = [r.free_energy for r in run.records]
    mono_ok = all(b <= a + 1e-8 + 1e-4 * dt for a, b in zip(values, values[1:]))
    return mass_ok and mono_ok, "density mass conserved and free energy nonincreasing"


def _check_entropy_production() -> tuple[bool, str]:
    pot = quadratic_potential()
    g = stationary_density(pot, 1.0, -8.0, 8.0, 400)
    drift, diffusion = entropy_production_terms(g, pot, 1.0)
    ok = abs(drift + 1.0) < 1e-2 and abs(diffusion - 1.0) < 1e-2
    return ok, "stationary entropy production splits into -1 and +1"


def _check_kernel_parity() -> tuple[bool, str]:
    if kernels.BACKEND != "compiled":
        return True, "single backend active (fallback); parity vacuous"
    from . import _corekernels, _refkernels

    rng = np.random.default_rng(0)
    noise = rng.standard_normal((10, 32))
    pos_a, pos_b = rng.standard_normal(32), None
    pos_b = pos_a.copy()
    _corekernels.langevin_chunk(noise, pos_a, 1, 0.01, 0.05)
    _refkernels.langevin_chunk(noise, pos_b, 1, 0.01, 0.05)
    ok = np.array_equal(pos_a, pos_b)

    c = -6.0 + (np.arange(64) + 0.5) * (12.0 / 64)
    rho = np.exp(-0.5 * c * c)
    rho /= rho.sum() * (12.0 / 64)
    faces = c[:-1] + 0.5 * (12.0 / 64)
    ra, rb = rho.copy(), rho.copy()
    ca = _corekernels.fp_chunk(ra, faces, 0.5, 12.0 / 64, 1e-3, 100)
    cb = _refkernels.fp_chunk(rb, faces, 0.5, 12.0 / 64, 1e-3, 100)
    ok = ok and ca == cb and np.array_equal(ra, rb)
    return ok, "compiled and fallback kernels agree bitwise"


def _check_memory_lyapunov() -> tuple[bool, str]:
    rng = np.random.default_rng(4)
    model = hebbian_store(rng.choice([-1.0, 1.0], size=(4, 100)))
    z0 = model.patterns[0].copy()
    z0[:25] *= -1.0
    traj = run_dynamics(model, z0, 12, mode="sequential_sign")
    energies = [hopfield_energy(model, z) for z in traj]
    ok = all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
    return ok, "sequential recall dynamics never increase the network energy"


def _check_scaling_fit() -> tuple[bool, str]:
    model = ScalingModel(alpha=1.0, gamma_exp=0.5, q=0.5)
    fit = fit_power_law(sample_excess(model, [4.0, 16.0, 64.0, 256.0]))
    return abs(fit.kappa_hat - model.kappa) < 1e-10, \
        "power-law fit recovers the model exponent to 1e-10"


def _check_controller_bounds() -> tuple[bool, str]:
    cfg = RunConfig(
        encoder=EncoderSpec(input_dim=4, hidden_dims=(5,), rep_dim=3, output_dim=1),
        task=TaskSpec(kind="regression_lowrank", n_train=24, n_test=24, input_dim=4,
                      seed=1),
        energy=EnergyConfig(beta=0.3, surrogate=SurrogateConfig(kind="variance")),
        thermo=ThermostatConfig(mode="rl_thermostat", beta0=0.3, beta_min=0.1,
                                beta_max=0.5, alpha_r=5.0, alpha_g=5.0),
        steps=15, eta=0.05, seed=2,
    )
    res = run_training(cfg)
    ok = all(0.1 <= r.beta_t <= 0.5 for r in res.trajectory)
    fixed = run_training(replace(
        cfg,
        thermo=ThermostatConfig(mode="fixed", beta0=0.3),
    ))
    ok = ok and all(r.beta_t == 0.3 for r in fixed.trajectory)
    return ok, "controller respects its bounds; fixed mode holds beta constant"


def _check_gradients() -> tuple[bool, str]:
    results = run_gradcheck(seed=11)
    worst = max(rel for _, rel in results)
    return worst <= 1e-5, f"all gradient paths match finite differences (max {worst:.2e})"


def cmd_checks(args) -> int:
    suites = [
        ("gradients", _check_gradients),
        ("descent", _check_descent),
        ("zero-weight-reduction", _check_zero_weight_reduction),
        ("fp-conservation", _check_fp_conservation),
        ("entropy-production", _check_entropy_production),
        ("kernel-parity", _check_kernel_parity),
        ("memory-lyapunov", _check_memory_lyapunov),
        ("scaling-fit", _check_scaling_fit),
        ("controller-bounds", _check_controller_bounds),
    ]
    failures = 0
    for name, fn in suites:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed suite is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"checks: [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    total = len(suites)
    print(f"checks: {total - failures}/{total} suites passed")
    return 0 if failures == 0 else 2


# ---------------------------------------------------------------------------


HANDLERS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "langevin": cmd_langevin,
    "fokker-planck": cmd_fokker_planck,
    "scaling": cmd_scaling,
    "memory": cmd_memory,
    "gradcheck": cmd_gradcheck,
    "checks": cmd_checks,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return HANDLERS[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
