"""Acceptance gate: twelve end-to-end behavioral criteria, one test each.

Run ``pytest -s tests/test_acceptance.py`` to see one [PASS]/[FAIL] line per
criterion.  The tolerances and runtime budgets are part of the contract;
tests must not be weakened to make them pass.
"""

import time

import numpy as np

from entroflow.autodiff import Tape, Tensor, backward, finite_diff_grad
from entroflow.dynamics import (
    EnergyConfig,
    descent_check,
    energy_value,
    entropy_flow_check,
    entropy_scaling_diag,
    force_stabilization_probe,
    gd_step,
    gen_bound,
    GenBoundConfig,
    make_model_objective,
    run_flow,
    step_eval,
    toy_objective,
)
from entroflow.langevin import (
    double_well_potential,
    entropy_production_terms,
    fp_run,
    fp_stability_limit,
    gaussian_density,
    quadratic_potential,
    stationary_density,
    stationary_variance_check,
)
from entroflow.memory import run_memory_cell
from entroflow.models import (
    Batch,
    EncoderSpec,
    TaskSpec,
    forward,
    init_params,
    make_dataset,
    pred_loss,
)
from entroflow.plotting import Series, emit_plot
from entroflow.rng import TAG_INIT, TAG_NOISE, derive_seed
from entroflow.scaling import ScalingModel, excess_loss, fit_power_law, sample_excess
from entroflow.surrogates import SurrogateConfig
from entroflow.thermostat import RunConfig, ThermostatConfig, run_training, sweep


def _verdict(num: int, ok: bool, detail: str, t0: float, budget: float):
    elapsed = time.perf_counter() - t0
    in_budget = elapsed < budget
    tag = "PASS" if ok and in_budget else "FAIL"
    print(f"[{tag}] criterion {num:02d}: {detail} ({elapsed:.1f}s / budget {budget:g}s)")
    assert ok, f"criterion {num:02d} failed: {detail}"
    assert in_budget, f"criterion {num:02d} overran: {elapsed:.1f}s >= {budget:g}s"


# shared quadratic toy: loss 1/2||theta - c||^2, entropy 1/2||theta||^2
_C = np.array([1.5, -2.0, 0.7, 1.0])
_THETA0 = np.array([0.3, 0.4, -0.2, 0.8])


def _quad_toy():
    return toy_objective(
        lambda th: 0.5 * ((th - _C) * (th - _C)).sum(),
        lambda th: 0.5 * (th * th).sum(),
    )


def _matrix_quad(mat, center=None):
    """1/2 (th-center)^T mat (th-center) as a tape expression (row-vector form)."""

    def fn(th):
        d = th - center if center is not None else th
        row = d.reshape((1, d.data.shape[0]))
        return 0.5 * (row * (row @ mat)).sum()

    return fn


# ---------------------------------------------------------------------------


def test_01_gradient_oracle():
    """Analytic gradients match central differences over 100 random setups."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    for i in range(100):
        surrogate = ("logdet", "variance", "softmax")[i % 3]
        enc_kind = ("mlp", "attn1")[(i // 3) % 2]
        d = int(rng.choice([4, 6]))
        rep = int(rng.integers(2, 5))
        if enc_kind == "mlp":
            depth = int(rng.integers(0, 3))
            hidden = tuple(int(h) for h in rng.integers(3, 7, size=depth))
        else:
            hidden = (2,)  # token width dividing both input sizes
        task_kind = ("regression_lowrank", "classify_gaussians")[int(rng.integers(0, 2))]
        n_classes = int(rng.integers(2, 5))
        out = 1 if task_kind == "regression_lowrank" else n_classes
        act = ("tanh", "relu")[int(rng.integers(0, 2))]
        enc = EncoderSpec(kind=enc_kind, input_dim=d, hidden_dims=hidden,
                          rep_dim=rep, output_dim=out, activation=act)
        task = TaskSpec(kind=task_kind, n_train=int(rng.integers(8, 17)), n_test=4,
                        input_dim=d, n_classes=n_classes, seed=int(rng.integers(1000)))
        ds = make_dataset(task)
        batch = Batch(ds.train.x, ds.train.y, ds.train.kind)
        cfg = EnergyConfig(
            beta=float(rng.uniform(0.0, 1.0)),
            gamma=float(rng.uniform(0.0, 0.5)),
            lam=float(rng.uniform(0.0, 0.5)),
            surrogate=SurrogateConfig(kind=surrogate, epsilon=1e-3,
                                      sigma_xi=float(rng.choice([0.0, 0.1]))),
            omega_kind="l2", dec_kind="quadratic_penalty",
        )
        objective = make_model_objective(enc, batch, cfg, derive_seed(7, TAG_NOISE, i))
        theta = init_params(enc, derive_seed(7, TAG_INIT, i)).data
        # jitter off the zero-bias init so relu probes a differentiable point
        theta = theta + 0.05 * rng.standard_normal(theta.shape)
        analytic = step_eval(objective, theta, cfg.beta).grad_f
        fd = finite_diff_grad(lambda td: energy_value(objective, td.data, cfg), theta)
        rel = float(np.linalg.norm(fd - analytic) / max(1.0, np.linalg.norm(analytic)))
        worst = max(worst, rel)
    _verdict(1, worst <= 1e-5,
             f"gradient audit over 100 random configs, max rel err {worst:.2e} <= 1e-5",
             t0, 30.0)


def test_02_descent_and_stationarity():
    """Sufficient decrease and the min-gradient bound on 50 known quadratics."""
    t0 = time.perf_counter()

    def spd(rng, dim, lo, hi):
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return q @ np.diag(rng.uniform(lo, hi, dim)) @ q.T

    failures = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        dim, beta = 6, 0.3
        a_mat, b_mat = spd(rng, dim, 0.5, 2.0), spd(rng, dim, 0.1, 1.0)
        c = rng.standard_normal(dim)
        hess = a_mat + beta * b_mat
        l_smooth = float(np.linalg.eigvalsh(hess).max())
        theta_star = np.linalg.solve(hess, a_mat @ c)
        d = theta_star - c
        f_star = 0.5 * float(d @ a_mat @ d) + beta * 0.5 * float(theta_star @ b_mat @ theta_star)
        objective = toy_objective(_matrix_quad(a_mat, c), _matrix_quad(b_mat))
        eta = 0.9 / (2.0 * l_smooth)  # inside the guaranteed-descent regime
        traj = run_flow(objective, rng.standard_normal(dim), eta=eta, steps=60, beta=beta)
        rep = descent_check(traj, eta=eta, l_smooth=l_smooth, f_star=f_star)
        if not (rep.ok and rep.guaranteed):
            failures += 1
    _verdict(2, failures == 0,
             f"descent + min-grad bound hold on 50/50 seeded quadratics "
             f"({failures} failures)", t0, 10.0)


def test_03_entropy_flow_second_order():
    """The per-step entropy budget residual shrinks ~4x when eta halves."""
    t0 = time.perf_counter()
    objective = _quad_toy()
    r1 = entropy_flow_check(run_flow(objective, _THETA0, eta=0.1, steps=40, beta=0.3), 0.1)
    r2 = entropy_flow_check(run_flow(objective, _THETA0, eta=0.05, steps=40, beta=0.3), 0.05)
    ratio = r1 / r2
    _verdict(3, 3.5 <= ratio <= 4.5,
             f"residual ratio under eta halving = {ratio:.3f} in [3.5, 4.5]",
             t0, 10.0)


def test_04_entropy_stationary_weight():
    """Running at the entropy-stationary weight freezes H to second order."""
    t0 = time.perf_counter()

    def beta_c(ev):
        return ev.i_inj / (ev.g * ev.g) if ev.g > 1e-12 else 0.0

    ok = True
    details = []
    for eta in (0.05, 0.02):
        traj = run_flow(_quad_toy(), _THETA0, eta=eta, steps=60, beta_fn=beta_c)
        dh = max(abs(b.H - a.H) for a, b in zip(traj[:-1], traj[1:]))
        ok = ok and dh <= 10.0 * eta * eta
        details.append(f"eta={eta}: max|dH|={dh:.1e} <= {10 * eta * eta:.1e}")
    _verdict(4, ok, "; ".join(details), t0, 5.0)


def test_05_degenerate_collapse():
    """beta=0 is bitwise plain GD; a constant surrogate is inert at any beta."""
    t0 = time.perf_counter()
    enc = EncoderSpec(input_dim=4, hidden_dims=(5,), rep_dim=3, output_dim=1)
    task = TaskSpec(kind="regression_lowrank", n_train=24, n_test=24, input_dim=4, seed=3)
    cfg = RunConfig(encoder=enc, task=task, steps=10, eta=0.1, seed=5)
    res = run_training(cfg)
    ds = make_dataset(task)
    theta = init_params(enc, derive_seed(cfg.seed, TAG_INIT)).data.copy()
    for _ in range(cfg.steps):
        th = Tensor(theta)
        with Tape() as tape:
            _, yhat = forward(th, ds.train.x, enc)
            loss = pred_loss(yhat, ds.train.y, ds.train.kind)
        backward(tape, loss)
        theta = theta - cfg.eta * th.grad
    bitwise = bool(np.array_equal(res.theta_final, theta))

    # constant-entropy surrogate: gradient contribution is exactly zero
    const_h = toy_objective(
        lambda th: 0.5 * ((th - _C) * (th - _C)).sum(),
        lambda th: (th * 0.0).sum() + 2.0,
    )
    theta_f = _THETA0.copy()
    theta_gd = _THETA0.copy()
    ecfg = EnergyConfig(beta=0.7)
    for t in range(40):
        theta_f, _ = gd_step(const_h, theta_f, ecfg, eta=0.1, step_index=t)
        ev = step_eval(const_h, theta_gd, 0.0)
        theta_gd = theta_gd - 0.1 * ev.grad_l
    drift = float(np.max(np.abs(theta_f - theta_gd)))
    _verdict(5, bitwise and drift <= 1e-12,
             f"beta=0 bitwise equal to plain GD: {bitwise}; constant-H drift "
             f"{drift:.1e} <= 1e-12", t0, 5.0)


def test_06_generalization_bound():
    """Bound matches its closed form; the planted growth exponent is recovered."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(1000):
        h = float(rng.uniform(-1.0, 5.0))
        g = GenBoundConfig(A=float(rng.uniform(0.1, 3.0)),
                           B_const=float(rng.uniform(0.0, 2.0)),
                           sigma_subg=float(rng.uniform(0.1, 2.0)),
                           n=int(rng.integers(1, 10_000)))
        out = gen_bound(h, g)
        arg = g.A * h + g.B_const
        expect = 0.0 if arg < 0 else float(np.sqrt(2.0 * g.sigma_subg**2 * arg / g.n))
        worst = max(worst, abs(out.value - expect))
        assert out.clamped == (arg < 0)
    alpha_errs = []
    for alpha in (0.3, 0.5, 1.0, 1.7):
        diag = entropy_scaling_diag([(n, 2.5 * n**alpha) for n in (4, 16, 64, 256)])
        alpha_errs.append(abs(diag.alpha_hat - alpha))
    _verdict(6, worst <= 1e-12 and max(alpha_errs) <= 1e-10,
             f"closed-form match over 1000 tuples (max err {worst:.1e} <= 1e-12); "
             f"planted exponent recovered (max err {max(alpha_errs):.1e})",
             t0, 5.0)


def test_07_density_flow_dissipation():
    """Mass conservation, monotone free energy, and the stationary entropy split."""
    t0 = time.perf_counter()
    quad, dwell = quadratic_potential(), double_well_potential()

    g0 = gaussian_density(-6.0, 6.0, 200, mean=1.5, var=0.3)
    dt = 0.5 * fp_stability_limit(g0, quad, 0.5)
    run = fp_run(g0, quad, 0.5, dt, 10_000, record_every=500)
    mass_err = max(abs(r.mass - 1.0) for r in run.records)

    mono_ok = True
    for pot in (quad, dwell):
        for mean in (-2.0, -1.0, 0.0, 1.0, 2.0):
            g = gaussian_density(-6.0, 6.0, 200, mean=mean, var=0.25)
            dt_p = 0.5 * fp_stability_limit(g, pot, 0.5)
            rec = fp_run(g, pot, 0.5, dt_p, 2000, record_every=100).records
            slack = 1e-8 + 1e-4 * dt_p
            vals = [r.free_energy for r in rec]
            mono_ok = mono_ok and all(b <= a + slack for a, b in zip(vals, vals[1:]))

    g_st = stationary_density(quad, 1.0, -8.0, 8.0, 400)
    drift, diffusion = entropy_production_terms(g_st, quad, 1.0)
    split_ok = abs(drift + 1.0) < 1e-2 and abs(diffusion - 1.0) < 1e-2
    _verdict(7, mass_err <= 1e-9 and mono_ok and split_ok,
             f"mass err {mass_err:.1e} <= 1e-9 over 1e4 steps; free energy "
             f"nonincreasing from 10 starts; stationary split ({drift:.3f}, "
             f"{diffusion:.3f}) ~ (-1, +1)", t0, 60.0)


def test_08_particle_stationarity():
    """Sampled stationary variance matches beta for the quadratic well."""
    t0 = time.perf_counter()
    var = stationary_variance_check(quadratic_potential(), beta=0.5, steps=10_000,
                                    n_particles=100_000, seed=0, dt=1e-3)
    _verdict(8, abs(var - 0.5) <= 0.01,
             f"variance {var:.4f} within 0.5 +/- 0.01 (N=1e5, dt=1e-3)", t0, 60.0)


def test_09_scaling_exponent():
    """Exponent recovery, noise robustness, and the monotonicity flip."""
    t0 = time.perf_counter()
    svals = [4.0, 16.0, 64.0, 256.0, 1024.0]
    clean_errs = []
    for alpha, gamma_exp, q in ((1.0, 0.5, 0.5), (1.4, 0.2, 0.8), (0.9, 0.3, 1.5)):
        model = ScalingModel(a=2.0, b=1.0, alpha=alpha, gamma_exp=gamma_exp, q=q)
        fit = fit_power_law(sample_excess(model, svals))
        clean_errs.append(abs(fit.kappa_hat - model.kappa))
    model = ScalingModel(a=2.0, b=1.0, alpha=1.0, gamma_exp=0.5, q=0.5)
    noisy_errs = [
        abs(fit_power_law(sample_excess(model, svals, noise=0.01, seed=s)).kappa_hat
            - model.kappa)
        for s in range(100)
    ]
    # monotone direction flips exactly where the exponents cross
    grow = ScalingModel(alpha=0.8, gamma_exp=0.5, q=0.5)
    shrink = ScalingModel(alpha=0.2, gamma_exp=0.5, q=0.5)
    flat = ScalingModel(alpha=0.5, gamma_exp=0.5, q=0.5)
    e_grow = [excess_loss(s, grow) for s in svals]
    e_shrink = [excess_loss(s, shrink) for s in svals]
    e_flat = [excess_loss(s, flat) for s in svals]
    flip_ok = (
        all(b < a for a, b in zip(e_grow, e_grow[1:]))
        and all(b > a for a, b in zip(e_shrink, e_shrink[1:]))
        and max(e_flat) - min(e_flat) == 0.0
    )
    _verdict(9, max(clean_errs) <= 1e-10 and max(noisy_errs) <= 0.02 and flip_ok,
             f"noiseless max err {max(clean_errs):.1e} <= 1e-10; 1% noise max err "
             f"{max(noisy_errs):.4f} <= 0.02 over 100 seeds; monotonicity flips at "
             f"matched exponents", t0, 10.0)


def test_10_memory_capacity_regimes():
    """Reliable recall below capacity; transient-only recall above it."""
    t0 = time.perf_counter()
    n = 200
    retrieved = sum(
        run_memory_cell(n, round(0.05 * n), 30, 0.1, seed)[0].m_final >= 0.95
        for seed in range(50)
    )
    cells_above = [run_memory_cell(n, round(0.3 * n), 30, 0.1, seed)[0]
                   for seed in range(50)]
    transient = sum(c.m_max >= 0.8 and c.m_final < 0.3 for c in cells_above)
    _verdict(10, retrieved >= 48 and transient >= 1,
             f"below capacity: {retrieved}/50 runs reach overlap 0.95 (need >= 48); "
             f"above capacity: {transient}/50 transient episodes (need >= 1)",
             t0, 60.0)


def test_11_qualitative_regime_sweep(tmp_path):
    """The full grid reproduces the headline regimes, with plots emitted."""
    t0 = time.perf_counter()
    base = RunConfig(
        encoder=EncoderSpec(kind="mlp", input_dim=8, hidden_dims=(16,), rep_dim=8,
                            output_dim=4, activation="tanh"),
        task=TaskSpec(kind="classify_gaussians", n_train=512, n_test=512,
                      input_dim=8, n_classes=4, seed=11),
        energy=EnergyConfig(beta=0.0, surrogate=SurrogateConfig(kind="logdet")),
        thermo=ThermostatConfig(mode="fixed", beta0=0.0, beta_min=0.0, beta_max=2.0,
                                alpha_r=0.05, alpha_g=0.02),
        eta=0.1, steps=120, seed=11,
    )
    betas = [0.0, 0.05, 0.1, 0.5, 1.0]
    surrogates = ["logdet", "variance", "softmax"]
    modes = ["fixed", "thermostat", "rl_thermostat"]
    result = sweep(base, betas, surrogates, modes, jobs=1)
    assert not result.failures, f"sweep cells failed: {result.failures}"
    rows = {(r.beta, r.surrogate, r.mode): r for r in result.rows}

    # (a) the log-det force dominates the softmax force at every matched cell
    force_ok = all(
        rows[(beta, "logdet", mode)].mean_G > rows[(beta, "softmax", mode)].mean_G
        for beta in betas for mode in modes
    )
    # (b) adaptive controllers stay inside their bounds and actually move
    controller_ok = True
    for (beta, kind, mode), traj in result.trajectories.items():
        bs = np.array([r.beta_t for r in traj])
        if mode == "fixed":
            controller_ok = controller_ok and bool((bs == beta).all())
        else:
            controller_ok = controller_ok and bool(
                (bs >= 0.0).all() and (bs <= 2.0).all() and len(np.unique(bs)) > 1
            )
    # (c) every beta>0 log-det run clears the default effectiveness bar
    effective_ok = all(
        rows[(beta, "logdet", mode)].effective
        for beta in betas if beta > 0 for mode in modes
    )

    for metric in ("final_test_loss", "gen_gap", "mean_G", "mean_beta_t",
                   "mean_reward"):
        series = [
            Series(
                f"{kind}/{mode}",
                np.array([r.beta for r in result.rows
                          if r.surrogate == kind and r.mode == mode]),
                np.array([getattr(r, metric) for r in result.rows
                          if r.surrogate == kind and r.mode == mode]),
            )
            for kind in surrogates for mode in modes
        ]
        emit_plot(series, tmp_path / f"sweep_{metric}.svg", xlabel="beta",
                  ylabel=metric)
    n_plots = len(list(tmp_path.glob("sweep_*.svg")))

    _verdict(11, force_ok and controller_ok and effective_ok and n_plots == 5,
             f"45-cell grid: force ordering {force_ok}, controller traces "
             f"{controller_ok}, log-det effectiveness {effective_ok}; "
             f"{n_plots} plots in {tmp_path}", t0, 600.0)


def test_12_force_stabilization():
    """The squared force settles into its detection band for each beta."""
    t0 = time.perf_counter()
    ok = True
    sups = []
    for beta in (0.1, 0.5, 1.0):
        traj = run_flow(_quad_toy(), _THETA0, eta=0.1, steps=100, beta=beta)
        probe = force_stabilization_probe(traj)
        # unit-curvature surrogate: G^2 converges to ||c||^2 / (1+beta)^2
        theory = float(_C @ _C) / (1.0 + beta) ** 2
        ok = ok and probe.entered_band and abs(probe.sup_last_half - theory) < 1e-3
        sups.append(f"beta={beta}: G^2->{probe.sup_last_half:.3f} (theory {theory:.3f})")
    _verdict(12, ok, "; ".join(sups), t0, 5.0)
