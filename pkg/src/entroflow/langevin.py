"""Particle simulator and 1-D density-grid solver for noisy gradient flow.

The continuum picture behind the training loop: parameters follow
``dtheta = -grad U dt + sqrt(2 beta) dW`` and their density obeys
``d rho/dt = div(rho grad U) + beta laplace(rho)``.  This module provides both
views on analytic test potentials, plus the free-energy, dissipation, and
entropy-production estimators used to check the continuum statements
quantitatively.

Grid solver: explicit finite-volume scheme, reflecting (no-flux) walls, an
enforced stability bound, and exact mass conservation by construction.  The
hot stepping loops live in the compiled kernels with a bit-identical NumPy
fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable
import csv
import logging
import math

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DivergenceError, StabilityError
from .rng import TAG_PARTICLE, make_rng

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    """Analytic landscape: value, gradient, Laplacian, dimensionality.

    ``kernel_id`` selects a compiled stepping kernel for the builtin 1-D
    potentials; custom potentials (``kernel_id=None``) run through the
    callables.
    """

    name: str
    u: Callable[[np.ndarray], float]
    grad_u: Callable[[np.ndarray], np.ndarray]
    lap_u: Callable[[np.ndarray], float]
    dim: int = 1
    kernel_id: int | None = None


def quadratic_potential(dim: int = 1) -> Potential:
    return Potential(
        name="quadratic",
        u=lambda x: 0.5 * float(np.sum(np.square(x))),
        grad_u=lambda x: np.asarray(x, dtype=float),
        lap_u=lambda x: float(dim),
        dim=dim,
        kernel_id=0 if dim == 1 else None,
    )


def double_well_potential() -> Potential:
    return Potential(
        name="double_well",
        u=lambda x: float(0.25 * np.sum(x**4) - 0.5 * np.sum(x**2)),
        grad_u=lambda x: np.asarray(x, dtype=float) ** 3 - np.asarray(x, dtype=float),
        lap_u=lambda x: float(np.sum(3.0 * np.asarray(x, dtype=float) ** 2 - 1.0)),
        dim=1,
        kernel_id=1,
    )


def validate_potential(pot: Potential, points: np.ndarray, rel: float = 1e-6) -> None:
    """Check grad_u and lap_u against finite differences of u at ``points``."""
    h = 1e-5
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        g = np.asarray(pot.grad_u(x), dtype=float).reshape(-1)
        fd_g = np.empty_like(g)
        trace = 0.0
        for i in range(pot.dim):
            e = np.zeros(pot.dim)
            e[i] = h
            up, down = pot.u(x + e), pot.u(x - e)
            fd_g[i] = (up - down) / (2 * h)
            trace += (up - 2.0 * pot.u(x) + down) / (h * h)
        scale = max(1.0, float(np.linalg.norm(g)))
        if np.linalg.norm(fd_g - g) > rel * scale * 1e2:
            raise ContractError(
                f"grad_u of {pot.name!r} disagrees with finite differences at {x}"
            )
        lap = pot.lap_u(x)
        if abs(trace - lap) > rel * max(1.0, abs(lap)) * 1e2:
            raise ContractError(
                f"lap_u of {pot.name!r} disagrees with finite differences at {x}"
            )


# ---------------------------------------------------------------------------
# particles


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions (n, dim), diffusion strength, elapsed time."""

    positions: np.ndarray
    beta: float
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]  # a flat vector means n particles in one dimension
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ContractError(f"positions must be (n, dim) with n >= 1, got {pos.shape}")
        if not np.isfinite(pos).all():
            raise ContractError("particle positions must be finite")
        if self.beta < 0:
            raise ContractError(f"beta must be >= 0, got {self.beta}")
        if self.time < 0:
            raise ContractError(f"time must be >= 0, got {self.time}")
        pos = np.ascontiguousarray(pos)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


def init_ensemble(
    n: int, beta: float, seed: int, dim: int = 1, loc: float = 0.0, scale: float = 0.0
) -> ParticleEnsemble:
    """Particles at ``loc`` plus optional Gaussian spread ``scale``."""
    pos = np.full((n, dim), float(loc))
    if scale > 0.0:
        pos = pos + scale * make_rng(seed, TAG_PARTICLE, 0).standard_normal((n, dim))
    return ParticleEnsemble(pos, beta=beta, time=0.0)


def _check_blowup(pos: np.ndarray, dt: float, t: float) -> None:
    if not np.isfinite(pos).all():
        raise DivergenceError(
            f"non-finite particle position at time {t:.6g}; "
            f"reduce dt (currently {dt:.3g})"
        )


def langevin_step(ens: ParticleEnsemble, pot: Potential, dt: float, seed: int) -> ParticleEnsemble:
    """One Euler step of the noisy gradient flow; same seed, same result."""
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    noise = make_rng(seed, TAG_PARTICLE).standard_normal(ens.positions.shape)
    amp = math.sqrt(2.0 * ens.beta * dt)
    if ens.dim == 1:
        grad = np.asarray(pot.grad_u(ens.positions[:, 0]), dtype=float)[:, None]
    else:
        grad = np.asarray(
            [pot.grad_u(p) for p in ens.positions], dtype=float
        ).reshape(ens.positions.shape)
    pos = ens.positions - dt * grad + amp * noise
    _check_blowup(pos, dt, ens.time + dt)
    return ParticleEnsemble(pos, beta=ens.beta, time=ens.time + dt)


def langevin_run(
    ens: ParticleEnsemble,
    pot: Potential,
    dt: float,
    nsteps: int,
    seed: int,
    chunk: int = 256,
) -> ParticleEnsemble:
    """Run ``nsteps`` Euler steps with chunked pregenerated noise.

    Builtin 1-D potentials go through the compiled kernel; everything else
    uses the same update expression in NumPy.
    """
    if dt <= 0 or nsteps < 0:
        raise ConfigError(f"need dt > 0 and nsteps >= 0, got dt={dt}, nsteps={nsteps}")
    rng = make_rng(seed, TAG_PARTICLE)
    amp = math.sqrt(2.0 * ens.beta * dt)
    pos = np.array(ens.positions, dtype=float)
    use_kernel = pot.kernel_id is not None and ens.dim == 1
    done = 0
    while done < nsteps:
        k = min(chunk, nsteps - done)
        noise = rng.standard_normal((k, ens.n)) if ens.dim == 1 else rng.standard_normal(
            (k, ens.n, ens.dim)
        )
        if use_kernel:
            flat = np.ascontiguousarray(pos[:, 0])
            kernels.langevin_chunk(noise, flat, pot.kernel_id, dt, amp)
            pos = flat[:, None]
        else:
            for row in noise:
                if ens.dim == 1:
                    g = np.asarray(pot.grad_u(pos[:, 0]), dtype=float)[:, None]
                    pos = pos - dt * g + amp * row[:, None]
                else:
                    g = np.asarray(
                        [pot.grad_u(p) for p in pos], dtype=float
                    ).reshape(pos.shape)
                    pos = pos - dt * g + amp * row
        done += k
        _check_blowup(pos, dt, ens.time + done * dt)
    return ParticleEnsemble(pos, beta=ens.beta, time=ens.time + nsteps * dt)


def stationary_variance_check(
    pot: Potential, beta: float, steps: int, n_particles: int, seed: int, dt: float = 1e-3
) -> float:
    """Equilibrate from a point mass and return the ensemble position variance."""
    ens = init_ensemble(n_particles, beta=beta, seed=seed, dim=pot.dim)
    ens = langevin_run(ens, pot, dt=dt, nsteps=steps, seed=seed)
    return float(np.var(ens.positions[:, 0]))


# ---------------------------------------------------------------------------
# density grids


@dataclass(frozen=True)
class DensityGrid:
    """Cell-averaged density on [lo, hi] with m uniform cells."""

    lo: float
    hi: float
    m: int
    rho: np.ndarray

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ContractError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.m < 2:
            raise ContractError(f"need at least 2 cells, got {self.m}")
        rho = np.ascontiguousarray(np.asarray(self.rho, dtype=float))
        if rho.shape != (self.m,):
            raise ContractError(f"rho must have shape ({self.m},), got {rho.shape}")
        if (rho < 0).any():
            raise ContractError("rho must be nonnegative")
        mass = float(np.sum(rho) * self.dx)
        if abs(mass - 1.0) > 1e-8:
            raise ContractError(f"density mass {mass} deviates from 1 by more than 1e-8")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.m) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        """Interior cell interfaces, shape (m-1,)."""
        return self.lo + np.arange(1, self.m) * self.dx


def density_from_values(lo: float, hi: float, m: int, values: np.ndarray) -> DensityGrid:
    """Normalize nonnegative cell values into a unit-mass grid."""
    v = np.asarray(values, dtype=float)
    if (v < 0).any():
        raise ContractError("density values must be nonnegative")
    total = float(np.sum(v)) * ((hi - lo) / m)
    if not total > 0:
        raise ContractError("density values must have positive mass")
    return DensityGrid(lo, hi, m, v / total)


def uniform_density(lo: float, hi: float, m: int) -> DensityGrid:
    return density_from_values(lo, hi, m, np.ones(m))


def gaussian_density(lo: float, hi: float, m: int, mean: float = 0.0, var: float = 1.0) -> DensityGrid:
    c = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    return density_from_values(lo, hi, m, np.exp(-0.5 * (c - mean) ** 2 / var))


def stationary_density(pot: Potential, beta: float, lo: float, hi: float, m: int) -> DensityGrid:
    """Grid restriction of exp(-U/beta), normalized."""
    if beta <= 0:
        raise ConfigError(f"stationary density needs beta > 0, got {beta}")
    c = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    u = np.array([pot.u(np.array([x])) for x in c])
    return density_from_values(lo, hi, m, np.exp(-(u - u.min()) / beta))


def fp_stability_limit(g: DensityGrid, pot: Potential, beta: float) -> float:
    """Largest explicit time step: dx^2 / (2 beta + dx max|U'|) over the faces."""
    drift = np.array([abs(float(np.asarray(pot.grad_u(np.array([x]))).reshape(-1)[0]))
                      for x in g.faces])
    denom = 2.0 * beta + g.dx * float(drift.max()) if len(drift) else 2.0 * beta
    if denom <= 0.0:
        return math.inf
    return g.dx * g.dx / denom


def _face_drift(g: DensityGrid, pot: Potential) -> np.ndarray:
    return np.array(
        [float(np.asarray(pot.grad_u(np.array([x]))).reshape(-1)[0]) for x in g.faces]
    )


def fp_step(g: DensityGrid, pot: Potential, beta: float, dt: float) -> DensityGrid:
    """One explicit conservative step of the density evolution."""
    new, clipped = _fp_advance(g, pot, beta, dt, 1)
    if clipped:
        logger.warning("density clipped at 0 in %d cells (renormalized)", clipped)
    return new


def _fp_advance(
    g: DensityGrid, pot: Potential, beta: float, dt: float, nsteps: int
) -> tuple[DensityGrid, int]:
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}")
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    limit = fp_stability_limit(g, pot, beta)
    if dt > limit:
        raise StabilityError(
            f"dt = {dt:.6g} exceeds the explicit stability limit {limit:.6g} "
            f"(dx^2 / (2 beta + dx max|U'|))"
        )
    rho = np.array(g.rho, dtype=float)
    drift = _face_drift(g, pot)
    clipped = kernels.fp_chunk(rho, drift, beta, g.dx, dt, nsteps)
    return DensityGrid(g.lo, g.hi, g.m, rho), int(clipped)


@dataclass(frozen=True)
class FPRecord:
    t: float
    free_energy: float
    entropy: float
    drift_term: float
    diffusion_term: float
    mass: float


@dataclass
class FPRun:
    records: list[FPRecord]
    grid: DensityGrid
    clipped: int


FP_HEADER = "t,free_energy,entropy,drift_term,diffusion_term,mass"


def fp_run(
    g: DensityGrid,
    pot: Potential,
    beta: float,
    dt: float,
    nsteps: int,
    record_every: int = 100,
) -> FPRun:
    """Evolve the density and log the continuum diagnostics along the way."""
    if record_every < 1:
        raise ConfigError(f"record_every must be >= 1, got {record_every}")

    def snapshot(grid: DensityGrid, step: int) -> FPRecord:
        drift, diff = entropy_production_terms(grid, pot, beta)
        return FPRecord(
            t=step * dt,
            free_energy=free_energy(grid, pot, beta),
            entropy=entropy(grid),
            drift_term=drift,
            diffusion_term=diff,
            mass=float(np.sum(grid.rho) * grid.dx),
        )

    records = [snapshot(g, 0)]
    clipped_total = 0
    done = 0
    while done < nsteps:
        k = min(record_every, nsteps - done)
        g, clipped = _fp_advance(g, pot, beta, dt, k)
        clipped_total += clipped
        done += k
        records.append(snapshot(g, done))
    if clipped_total:
        logger.warning(
            "density clipped at 0 in %d cell updates over the run", clipped_total
        )
    return FPRun(records=records, grid=g, clipped=clipped_total)


# ---------------------------------------------------------------------------
# functionals


def _grid_density(state, grid: DensityGrid | None) -> DensityGrid:
    if isinstance(state, DensityGrid):
        return state
    if not isinstance(state, ParticleEnsemble):
        raise ContractError(f"expected DensityGrid or ParticleEnsemble, got {type(state)}")
    if grid is None:
        raise ContractError("particle functionals need a binning grid")
    if state.dim != 1:
        raise ContractError("histogram functionals support 1-D ensembles only")
    if state.n < 100:
        raise ContractError(f"histogram estimator needs >= 100 particles, got {state.n}")
    counts, _ = np.histogram(state.positions[:, 0], bins=grid.m, range=(grid.lo, grid.hi))
    return density_from_values(grid.lo, grid.hi, grid.m, counts.astype(float))


def free_energy(state, pot: Potential, beta: float, grid: DensityGrid | None = None) -> float:
    """Energy plus beta-weighted negentropy: sum U rho dx + beta sum rho log rho dx."""
    g = _grid_density(state, grid)
    u = np.array([pot.u(np.array([x])) for x in g.centers])
    energy = float(np.sum(u * g.rho) * g.dx)
    mask = g.rho > 0
    neg_entropy = float(np.sum(g.rho[mask] * np.log(g.rho[mask])) * g.dx)
    return energy + beta * neg_entropy


def entropy(state, grid: DensityGrid | None = None) -> float:
    """Differential entropy of the cell-averaged density."""
    g = _grid_density(state, grid)
    mask = g.rho > 0
    return float(-np.sum(g.rho[mask] * np.log(g.rho[mask])) * g.dx)


@dataclass(frozen=True)
class DissipationReport:
    max_uphill: float
    slack: float
    ok: bool


def dissipation_check(
    history: list[DensityGrid], pot: Potential, beta: float, dt: float
) -> DissipationReport:
    """Largest free-energy increase between consecutive states.

    Passes when no step climbs by more than a fixed slack plus an
    O(dt) discretization allowance.
    """
    if len(history) < 2:
        raise ContractError("dissipation check needs at least two states")
    values = [free_energy(g, pot, beta) for g in history]
    max_uphill = max(b - a for a, b in zip(values, values[1:]))
    slack = 1e-8 + 1e-4 * dt
    return DissipationReport(max_uphill=max_uphill, slack=slack, ok=max_uphill <= slack)


def entropy_production_terms(g: DensityGrid, pot: Potential, beta: float) -> tuple[float, float]:
    """Drift and diffusion contributions to the entropy rate.

    drift = -sum rho lapU dx; diffusion = beta sum rho (d log rho)^2 dx with
    centered differences on interior cells where the density (and both
    neighbors) exceed 1e-300.
    """
    lap = np.array([pot.lap_u(np.array([x])) for x in g.centers])
    drift = float(-np.sum(g.rho * lap) * g.dx)
    if beta == 0.0:
        return drift, 0.0
    rho = g.rho
    ok = rho > 1e-300
    interior = ok[1:-1] & ok[:-2] & ok[2:]
    idx = np.where(interior)[0] + 1
    dlog = (np.log(rho[idx + 1]) - np.log(rho[idx - 1])) / (2.0 * g.dx)
    diffusion = float(beta * np.sum(rho[idx] * dlog * dlog) * g.dx)
    return drift, diffusion


# ---------------------------------------------------------------------------
# export


def write_fp_csv(path, run: FPRun) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FP_HEADER.split(","))
        for r in run.records:
            writer.writerow(
                [f"{v:.17g}" for v in (r.t, r.free_energy, r.entropy,
                                       r.drift_term, r.diffusion_term, r.mass)]
            )


def write_density_csv(path, g: DensityGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "rho"])
        for x, r in zip(g.centers, g.rho):
            writer.writerow([f"{x:.17g}", f"{r:.17g}"])
