"""Energy assembly, gradient-flow stepping, and the associated diagnostics.

The composite objective is

    F(theta) = L_pred + beta * H(noisy Z) + gamma * Omega + lambda * R_dec

where H is one of the entropy surrogates.  A step evaluation runs one forward
pass and two backward passes (entropy seed, then full non-entropy loss seed),
yielding the gradient pair (grad_L, grad_H) that every diagnostic here is
built from:

* information force  G = ||grad_H||  (optionally metric-adjusted),
* injection/dissipation  I = -grad_H . grad_L,  D = beta * G**2,
* the entropy-balance residual  H_{t+1}-H_t ~ eta*(I_t - D_t),
* per-step descent and the min-gradient stationarity bound,
* force-effectiveness fractions and stabilization-band probes,
* the noisy-representation generalization bound and its sample-size scaling.

Objectives are represented as a callable ``theta -> ObjectiveParts`` so toy
functionals (for closed-form tests) and real encoder/task batches share every
code path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, ContractError, DivergenceError, FactorizationError, FitError
from .models import Batch, EncoderSpec, forward, pred_loss
from .surrogates import SurrogateConfig, noisy_rep, surrogate_entropy

OMEGA_KINDS = ("none", "l2")
DEC_KINDS = ("none", "quadratic_penalty")


@dataclass(frozen=True)
class EnergyConfig:
    """Weights and plug-ins of the composite energy."""

    beta: float = 0.0
    gamma: float = 0.0
    lam: float = 0.0  # serialized as "lambda"
    surrogate: SurrogateConfig = SurrogateConfig()
    omega_kind: str = "l2"
    dec_kind: str = "none"

    def __post_init__(self):
        for name in ("beta", "gamma", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.omega_kind not in OMEGA_KINDS:
            raise ConfigError(f"unknown omega_kind {self.omega_kind!r}")
        if self.dec_kind not in DEC_KINDS:
            raise ConfigError(f"unknown dec_kind {self.dec_kind!r}")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics logged at one step; scalars only, cheap to merge/serialize."""

    t: int
    L_pred: float
    H: float
    F: float
    G: float
    I_inj: float
    D_diss: float
    beta_t: float
    r_t: float
    gen_gap: float | None
    grad_norm_L: float


@dataclass(frozen=True)
class EffectivenessConfig:
    c: float = 0.05
    tau: float = 0.5
    c_mode: str = "relative_to_initial_loss_grad"

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"effectiveness threshold c must be > 0, got {self.c}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.c_mode not in ("absolute", "relative_to_initial_loss_grad"):
            raise ConfigError(f"unknown c_mode {self.c_mode!r}")


@dataclass(frozen=True)
class GenBoundConfig:
    A: float = 1.0
    B_const: float = 0.0
    sigma_subg: float = 1.0
    n: int = 256

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigError(f"A must be > 0, got {self.A}")
        if self.B_const < 0:
            raise ConfigError(f"B_const must be >= 0, got {self.B_const}")
        if not self.sigma_subg > 0:
            raise ConfigError(f"sigma_subg must be > 0, got {self.sigma_subg}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")


# ---------------------------------------------------------------------------
# objectives


@dataclass
class ObjectiveParts:
    """The three energy ingredients, all recorded on the caller's tape."""

    pred: Tensor
    entropy: Tensor
    penalty: Tensor | None = None


ObjectiveFn = Callable[[Tensor], ObjectiveParts]


def toy_objective(loss_fn: Callable, entropy_fn: Callable) -> ObjectiveFn:
    """Wrap injected test functionals (each ``Tensor -> Tensor``)."""

    def fn(theta: Tensor) -> ObjectiveParts:
        return ObjectiveParts(loss_fn(theta), entropy_fn(theta))

    return fn


def make_model_objective(
    enc: EncoderSpec, batch: Batch, cfg: EnergyConfig, noise_seed: int
) -> ObjectiveFn:
    """Bundle an encoder forward pass, the noisy-representation entropy, and
    the optional parameter/prediction penalties into one objective."""

    def fn(theta: Tensor) -> ObjectiveParts:
        z, yhat = forward(theta, batch.x, enc)
        z_noisy = noisy_rep(z, cfg.surrogate.sigma_xi, noise_seed)
        h = surrogate_entropy(z_noisy, cfg.surrogate)
        lp = pred_loss(yhat, batch.y, batch.kind)
        penalty = None
        if cfg.gamma > 0.0 and cfg.omega_kind == "l2":
            penalty = cfg.gamma * 0.5 * (theta * theta).sum()
        if cfg.lam > 0.0 and cfg.dec_kind == "quadratic_penalty":
            dec = cfg.lam * 0.5 * (yhat * yhat).sum(axis=1).mean()
            penalty = dec if penalty is None else penalty + dec
        return ObjectiveParts(lp, h, penalty)

    return fn


def total_energy(objective: ObjectiveFn, theta: Tensor, cfg: EnergyConfig) -> Tensor:
    """The full differentiable energy on the active tape."""
    parts = objective(theta)
    out = parts.pred
    if cfg.beta != 0.0:
        out = out + cfg.beta * parts.entropy
    if parts.penalty is not None:
        out = out + parts.penalty
    return out


# ---------------------------------------------------------------------------
# step evaluation: one forward, two backwards


@dataclass
class StepEval:
    l_pred: float
    h: float
    penalty: float
    l_full: float  # non-entropy part: L_pred + penalties
    f: float
    grad_l: np.ndarray  # gradient of l_full
    grad_h: np.ndarray
    grad_f: np.ndarray
    g: float
    i_inj: float
    d_diss: float
    beta: float


def step_eval(objective: ObjectiveFn, theta_data: np.ndarray, beta: float) -> StepEval:
    """Evaluate energy pieces and both gradients at ``theta_data``."""
    theta = Tensor(theta_data)
    with Tape() as tape:
        parts = objective(theta)
        l_node = parts.pred if parts.penalty is None else parts.pred + parts.penalty
    tape.backward(parts.entropy)
    grad_h = theta.grad.copy() if theta.grad is not None else np.zeros_like(theta.data)
    theta.grad = None
    tape.backward(l_node)
    grad_l = theta.grad.copy() if theta.grad is not None else np.zeros_like(theta.data)
    if beta == 0.0:
        grad_f = grad_l  # exact reduction: no entropy contribution at all
    else:
        grad_f = grad_l + beta * grad_h
    g = float(np.linalg.norm(grad_h))
    l_pred = parts.pred.item()
    pen = parts.penalty.item() if parts.penalty is not None else 0.0
    h = parts.entropy.item()
    return StepEval(
        l_pred=l_pred,
        h=h,
        penalty=pen,
        l_full=l_pred + pen,
        f=l_pred + pen + beta * h,
        grad_l=grad_l,
        grad_h=grad_h,
        grad_f=grad_f,
        g=g,
        i_inj=float(-grad_h @ grad_l),
        d_diss=beta * g * g,
        beta=beta,
    )


def energy_value(objective: ObjectiveFn, theta_data: np.ndarray, cfg: EnergyConfig) -> float:
    with Tape():
        return total_energy(objective, Tensor(theta_data), cfg).item()


def info_force(objective: ObjectiveFn, theta_data: np.ndarray) -> tuple[float, np.ndarray]:
    """Euclidean information-force magnitude and the raw entropy gradient."""
    ev = step_eval(objective, theta_data, beta=0.0)
    return ev.g, ev.grad_h


def injection_dissipation(
    objective: ObjectiveFn, theta_data: np.ndarray, cfg: EnergyConfig
) -> tuple[float, float]:
    """I = -grad_H . grad_L (non-entropy part), D = beta * ||grad_H||^2."""
    ev = step_eval(objective, theta_data, cfg.beta)
    return ev.i_inj, ev.d_diss


def critical_beta(
    objective: ObjectiveFn, theta_data: np.ndarray, tol: float = 1e-12
) -> float | None:
    """Entropy-stationary weight I / ||grad_H||^2; None when the force vanishes.

    May be negative (negative injection); it is an identity, never clamped.
    """
    ev = step_eval(objective, theta_data, beta=0.0)
    if ev.g <= tol:
        return None
    return ev.i_inj / (ev.g * ev.g)


def degeneracy_ratio(
    objective: ObjectiveFn, theta_data: np.ndarray, tol: float = 1e-12
) -> float | None:
    """||grad_H|| / ||grad_L_pred||; None when the loss gradient vanishes.

    Uses the predictive-loss gradient only (penalties excluded), since the
    question is whether entropy shaping survives next to the fit term.
    """
    theta = Tensor(theta_data)
    with Tape() as tape:
        parts = objective(theta)
    tape.backward(parts.entropy)
    grad_h = theta.grad.copy() if theta.grad is not None else np.zeros_like(theta.data)
    theta.grad = None
    tape.backward(parts.pred)
    grad_lp = theta.grad.copy() if theta.grad is not None else np.zeros_like(theta.data)
    denom = float(np.linalg.norm(grad_lp))
    if denom <= tol:
        return None
    return float(np.linalg.norm(grad_h)) / denom


# ---------------------------------------------------------------------------
# metric-adjusted force


def metric_force_norm(grad_h: np.ndarray, jacobian: np.ndarray, delta: float) -> float:
    """sqrt(grad_H^T (J^T J + delta I)^{-1} grad_H), solved via factorization."""
    if not delta > 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    n = grad_h.shape[0]
    m = jacobian.T @ jacobian + delta * np.eye(n)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"metric factorization failed: {exc}") from None
    # two triangular solves instead of forming an inverse
    y = np.linalg.solve(chol, grad_h)
    return float(np.sqrt(y @ y))


def prediction_jacobian(theta_data: np.ndarray, x: np.ndarray, enc: EncoderSpec) -> np.ndarray:
    """Jacobian of the flattened head output w.r.t. the parameters: (B*o, n)."""
    theta = Tensor(theta_data)
    with Tape() as tape:
        _, yhat = forward(theta, x, enc)
        b, o = yhat.data.shape
        seeds = []
        for i in range(b):
            for j in range(o):
                mask = np.zeros((b, o))
                mask[i, j] = 1.0
                seeds.append((yhat * mask).sum())
    rows = np.empty((b * o, theta.data.shape[0]))
    for idx, seed in enumerate(seeds):
        theta.grad = None
        tape.backward(seed)
        rows[idx] = theta.grad if theta.grad is not None else 0.0
    return rows


def info_force_metric(
    theta_data: np.ndarray,
    batch: Batch,
    enc: EncoderSpec,
    surrogate: SurrogateConfig,
    delta: float = 1e-3,
    noise_seed: int = 0,
) -> float:
    """Metric-adjusted information force with a damped Gauss-Newton metric."""
    cfg = EnergyConfig(surrogate=surrogate)
    _, grad_h = info_force(make_model_objective(enc, batch, cfg, noise_seed), theta_data)
    jac = prediction_jacobian(theta_data, batch.x, enc)
    return metric_force_norm(grad_h, jac, delta)


# ---------------------------------------------------------------------------
# stepping


def gd_step(
    objective: ObjectiveFn,
    theta_data: np.ndarray,
    cfg: EnergyConfig,
    eta: float,
    step_index: int = 0,
) -> tuple[np.ndarray, StepEval]:
    """One explicit gradient step on the energy; raises on non-finite values."""
    if not eta > 0:
        raise ConfigError(f"eta must be > 0, got {eta}")
    ev = step_eval(objective, theta_data, cfg.beta)
    if not (math.isfinite(ev.f) and np.isfinite(ev.grad_f).all()):
        raise DivergenceError(
            f"non-finite energy or gradient at step {step_index}", step=step_index
        )
    return theta_data - eta * ev.grad_f, ev


def run_flow(
    objective: ObjectiveFn,
    theta0: np.ndarray,
    eta: float,
    steps: int,
    beta: float = 0.0,
    beta_fn: Callable[[StepEval], float] | None = None,
    log_every: int = 1,
) -> list[StepRecord]:
    """Fixed-objective gradient flow producing ``steps + 1`` step records.

    ``beta_fn`` (evaluated on a beta=0 probe of the current point) overrides
    the constant ``beta`` — used e.g. to track the entropy-stationary weight.
    Records are written every ``log_every`` steps plus the final point.
    """
    theta = np.array(theta0, dtype=np.float64)
    records: list[StepRecord] = []
    for t in range(steps + 1):
        if beta_fn is not None:
            beta_t = beta_fn(step_eval(objective, theta, beta=0.0))
        else:
            beta_t = beta
        ev = step_eval(objective, theta, beta_t)
        if not (math.isfinite(ev.f) and np.isfinite(ev.grad_f).all()):
            raise DivergenceError(
                f"non-finite energy or gradient at step {t}", step=t, trajectory=records
            )
        if t % log_every == 0 or t == steps:
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
                    r_t=float("nan"),
                    gen_gap=None,
                    grad_norm_L=float(np.linalg.norm(ev.grad_l)),
                )
            )
        if t < steps:
            theta = theta - eta * ev.grad_f
    return records


# ---------------------------------------------------------------------------
# trajectory diagnostics


def grad_f_norm_sq(rec: StepRecord) -> float:
    """||grad_F||^2 reconstructed exactly from logged scalars."""
    return rec.grad_norm_L**2 - 2.0 * rec.beta_t * rec.I_inj + rec.beta_t**2 * rec.G**2


def entropy_flow_check(trajectory: Sequence[StepRecord], eta: float) -> float:
    """max_t |H_{t+1} - H_t - eta*(I_t - D_t)| over consecutive records."""
    if len(trajectory) < 2:
        raise ContractError("entropy_flow_check needs at least two records")
    worst = 0.0
    for a, b in zip(trajectory[:-1], trajectory[1:]):
        worst = max(worst, abs(b.H - a.H - eta * (a.I_inj - a.D_diss)))
    return worst


@dataclass(frozen=True)
class DescentReport:
    ok: bool
    first_violation: int | None
    min_grad_sq: float
    bound: float  # 2*(F0 - f_star) / (eta * T)
    max_violation: float
    guaranteed: bool  # eta < 1/L, i.e. the theory actually promises descent


def descent_check(
    trajectory: Sequence[StepRecord],
    eta: float,
    l_smooth: float,
    f_star: float = 0.0,
) -> DescentReport:
    """Per-step sufficient-decrease check plus the min-gradient bound.

    Verifies F_{t+1} <= F_t - (eta/2)*||grad_F_t||^2 at every consecutive
    pair and reports min_t ||grad_F_t||^2 against 2*(F_0 - f_star)/(eta*T).
    ``l_smooth`` is the caller-known curvature bound; the guarantee only
    applies when eta < 1/l_smooth.
    """
    if not eta > 0:
        raise ConfigError(f"eta must be > 0, got {eta}")
    if len(trajectory) < 2:
        raise ContractError("descent_check needs at least two records")
    first_violation = None
    max_violation = 0.0
    for k, (a, b) in enumerate(zip(trajectory[:-1], trajectory[1:])):
        slack = b.F - (a.F - 0.5 * eta * grad_f_norm_sq(a))
        tol = 1e-12 * (1.0 + abs(a.F))
        if slack > tol:
            max_violation = max(max_violation, slack)
            if first_violation is None:
                first_violation = k
    t_count = trajectory[-1].t - trajectory[0].t
    bound = 2.0 * (trajectory[0].F - f_star) / (eta * max(t_count, 1))
    min_grad_sq = min(grad_f_norm_sq(r) for r in trajectory[:-1])
    return DescentReport(
        ok=first_violation is None and min_grad_sq <= bound + 1e-12,
        first_violation=first_violation,
        min_grad_sq=min_grad_sq,
        bound=bound,
        max_violation=max_violation,
        guaranteed=eta < 1.0 / l_smooth,
    )


def effectiveness(
    trajectory: Sequence[StepRecord], ecfg: EffectivenessConfig
) -> tuple[float, bool]:
    """Fraction of steps whose force clears the threshold, and the verdict."""
    if not trajectory:
        raise ContractError("effectiveness needs a nonempty trajectory")
    if ecfg.c_mode == "absolute":
        threshold = ecfg.c
    else:
        threshold = ecfg.c * trajectory[0].grad_norm_L
    hits = sum(1 for r in trajectory if r.G >= threshold)
    fraction = hits / len(trajectory)
    return fraction, fraction >= ecfg.tau


@dataclass(frozen=True)
class GenBound:
    value: float
    clamped: bool


def gen_bound(h_logdet: float, g: GenBoundConfig) -> GenBound:
    """sqrt(2*sigma^2*(A*H + B)/n); negative arguments clamp to 0 with a flag."""
    arg = g.A * h_logdet + g.B_const
    if arg < 0.0:
        return GenBound(0.0, True)
    return GenBound(math.sqrt(2.0 * g.sigma_subg**2 * arg / g.n), False)


@dataclass(frozen=True)
class ScalingDiag:
    alpha_hat: float
    gap_exponent: float  # (alpha - 1) / 2
    n_excluded: int
    non_vanishing_gap: bool  # alpha >= 1: the bound no longer shrinks with n


def entropy_scaling_diag(samples: Sequence[tuple[float, float]]) -> ScalingDiag:
    """Fit H(n) = C * n^alpha in log-log space over (n, H) samples."""
    usable = [(n, h) for n, h in samples if h > 0.0 and n >= 2]
    n_excluded = len(samples) - len(usable)
    if len(usable) < 3:
        raise FitError(
            f"entropy_scaling_diag needs >= 3 usable samples, got {len(usable)} "
            f"({n_excluded} excluded as nonpositive)"
        )
    logn = np.log([n for n, _ in usable])
    logh = np.log([h for _, h in usable])
    design = np.stack([logn, np.ones_like(logn)], axis=1)
    (alpha, _), *_ = np.linalg.lstsq(design, logh, rcond=None)
    alpha = float(alpha)
    return ScalingDiag(
        alpha_hat=alpha,
        gap_exponent=(alpha - 1.0) / 2.0,
        n_excluded=n_excluded,
        non_vanishing_gap=alpha >= 1.0,
    )


@dataclass(frozen=True)
class ForceProbe:
    sup_last_half: float
    entered_band: bool
    band_top: float
    entry_time: int | None


def force_stabilization_probe(trajectory: Sequence[StepRecord]) -> ForceProbe:
    """Check that G^2 enters a band and stays there.

    The band top is the 90th percentile of G^2 over the last quarter of the
    trajectory; "stays" tolerates excursions up to 10% above the band.
    """
    if len(trajectory) < 20:
        raise ContractError(
            f"force_stabilization_probe needs >= 20 records, got {len(trajectory)}"
        )
    gsq = np.array([r.G**2 for r in trajectory])
    band_top = float(np.percentile(gsq[-(len(gsq) // 4):], 90.0))
    inside = gsq <= band_top
    entry = int(np.argmax(inside)) if inside.any() else None
    stays = entry is not None and bool((gsq[entry:] <= 1.1 * band_top + 1e-300).all())
    return ForceProbe(
        sup_last_half=float(gsq[len(gsq) // 2 :].max()),
        entered_band=stays,
        band_top=band_top,
        entry_time=entry,
    )


# ---------------------------------------------------------------------------
# trajectory CSV

TRAJECTORY_HEADER = "t,L_pred,H,F,G,I_inj,D_diss,beta_t,r_t,gen_gap,grad_norm_L"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_trajectory_csv(path, records: Sequence[StepRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER.split(","))
        for r in records:
            writer.writerow(
                [
                    r.t,
                    _fmt(r.L_pred),
                    _fmt(r.H),
                    _fmt(r.F),
                    _fmt(r.G),
                    _fmt(r.I_inj),
                    _fmt(r.D_diss),
                    _fmt(r.beta_t),
                    _fmt(r.r_t),
                    "" if r.gen_gap is None else _fmt(r.gen_gap),
                    _fmt(r.grad_norm_L),
                ]
            )


def read_trajectory_csv(path) -> list[StepRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER.split(","):
            raise ConfigError(f"unexpected trajectory header: {header}")
        for row in reader:
            records.append(
                StepRecord(
                    t=int(row[0]),
                    L_pred=float(row[1]),
                    H=float(row[2]),
                    F=float(row[3]),
                    G=float(row[4]),
                    I_inj=float(row[5]),
                    D_diss=float(row[6]),
                    beta_t=float(row[7]),
                    r_t=float(row[8]),
                    gen_gap=None if row[9] == "" else float(row[9]),
                    grad_norm_L=float(row[10]),
                )
            )
    return records
