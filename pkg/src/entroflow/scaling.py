"""Power-law model of how excess loss depends on a scale variable.

The model: injection grows like ``a * S**alpha`` and dissipation like
``b * S**gamma_exp`` in some scale variable S (sample count by default, width
optionally).  Their ratio ``R(S) = (a/b) S**(alpha-gamma_exp)`` drives excess
loss through a response law ``excess = R**(-q)``, so on log-log axes excess
falls with slope ``-kappa`` where ``kappa = q*(alpha - gamma_exp)``.  The
module evaluates the model, fits ``kappa`` back out of (S, excess) samples,
and extracts empirical injection/dissipation ratios from training logs.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import logging
import math

import numpy as np

from .dynamics import StepRecord
from .errors import ContractError, FitError
from .rng import TAG_NOISE, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalingModel:
    a: float = 1.0
    b: float = 1.0
    alpha: float = 1.0
    gamma_exp: float = 0.5
    q: float = 0.5
    l_inf: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ContractError(f"amplitudes must be positive, got a={self.a}, b={self.b}")
        if not self.q > 0:
            raise ContractError(f"response exponent q must be positive, got {self.q}")
        if self.alpha < 0 or self.gamma_exp < 0:
            raise ContractError("growth exponents must be >= 0")

    @property
    def kappa(self) -> float:
        """Predicted log-log decay rate of the excess loss."""
        return self.q * (self.alpha - self.gamma_exp)


def ratio(s: float, m: ScalingModel) -> float:
    """Injection-to-dissipation ratio at scale ``s``."""
    if not s > 0:
        raise ContractError(f"scale must be positive, got {s}")
    return (m.a / m.b) * s ** (m.alpha - m.gamma_exp)


def excess_loss(s: float, m: ScalingModel) -> float:
    """Excess over the asymptote: ratio(s) ** (-q)."""
    return ratio(s, m) ** (-m.q)


def total_loss(s: float, m: ScalingModel) -> float:
    return m.l_inf + excess_loss(s, m)


def sample_excess(
    m: ScalingModel, svals, noise: float = 0.0, seed: int = 0
) -> np.ndarray:
    """(S, excess) pairs from the model, optionally with multiplicative noise."""
    svals = np.asarray(svals, dtype=float)
    excess = np.array([excess_loss(s, m) for s in svals])
    if noise > 0.0:
        excess = excess * (1.0 + noise * make_rng(seed, TAG_NOISE).standard_normal(len(svals)))
    return np.column_stack([svals, excess])


@dataclass(frozen=True)
class PowerLawFit:
    kappa_hat: float
    amplitude: float
    r_squared: float
    n_excluded: int


def fit_power_law(samples) -> PowerLawFit:
    """Least-squares line in log-log coordinates; kappa_hat is minus the slope.

    Nonpositive excess values are excluded with a warning (they occur under
    measurement noise near the asymptote); fewer than three usable points is
    an error.
    """
    pairs = np.asarray(samples, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ContractError(f"samples must be (n, 2) pairs, got shape {pairs.shape}")
    if (pairs[:, 0] <= 0).any():
        raise ContractError("all scale values must be positive")
    usable = pairs[:, 1] > 0
    n_excluded = int((~usable).sum())
    if n_excluded:
        logger.warning("excluded %d nonpositive excess values from the fit", n_excluded)
    pts = pairs[usable]
    if len(pts) < 3:
        raise FitError(f"power-law fit needs >= 3 usable points, got {len(pts)}")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    pred = design @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(
        kappa_hat=-slope,
        amplitude=math.exp(intercept),
        r_squared=r_squared,
        n_excluded=n_excluded,
    )


@dataclass(frozen=True)
class RatioTrace:
    mean_injection: float
    mean_dissipation: float
    ratio: float
    undefined: bool


def empirical_ratio_trace(trajectory: list[StepRecord]) -> RatioTrace:
    """Time-averaged injection/dissipation over the last half of a run.

    Dissipation that never turns positive (e.g. a run with the entropy weight
    pinned at zero) leaves the ratio undefined; flagged rather than raised.
    """
    if not trajectory:
        raise ContractError("empirical ratio needs a nonempty trajectory")
    tail = trajectory[len(trajectory) // 2:]
    mean_i = float(np.mean([r.I_inj for r in tail]))
    mean_d = float(np.mean([r.D_diss for r in tail]))
    if mean_d <= 0.0:
        return RatioTrace(mean_i, mean_d, math.nan, undefined=True)
    return RatioTrace(mean_i, mean_d, mean_i / mean_d, undefined=False)


SCALING_HEADER = "S,excess,kappa_hat_running"


def write_scaling_csv(path, samples) -> None:
    """Samples plus a running fit over the points seen so far (blank until
    three usable points exist)."""
    pairs = np.asarray(samples, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCALING_HEADER.split(","))
        for i in range(len(pairs)):
            try:
                running = f"{fit_power_law(pairs[: i + 1]).kappa_hat:.17g}"
            except FitError:
                running = ""
            writer.writerow([f"{pairs[i, 0]:.17g}", f"{pairs[i, 1]:.17g}", running])
