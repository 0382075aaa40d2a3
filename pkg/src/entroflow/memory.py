"""Binary attractor-network diagnostics: storage, overlaps, transient recall.

Patterns are ±1 vectors stored through the outer-product rule with a zeroed
diagonal.  Recall quality is the normalized overlap between the running state
and a stored pattern; the diagnostics here quantify *finite-horizon* recall —
the peak overlap within a time budget, how long the peak lasts, and whether
the trajectory merely visits the pattern before drifting off (characteristic
just above the storage capacity).
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import math

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError
from .rng import TAG_MEMORY, make_rng

DYNAMICS_MODES = ("sync_sign", "sequential_sign", "tanh_ode")


@dataclass(frozen=True)
class HopfieldModel:
    """Stored patterns (p, n) in {-1,+1} and the symmetric coupling matrix."""

    n: int
    patterns: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        pats = np.ascontiguousarray(np.asarray(self.patterns, dtype=float))
        w = np.ascontiguousarray(np.asarray(self.w, dtype=float))
        if pats.ndim != 2 or pats.shape[1] != self.n:
            raise ContractError(f"patterns must be (p, {self.n}), got {pats.shape}")
        if not np.all(np.abs(pats) == 1.0):
            raise ContractError("pattern entries must be ±1")
        if w.shape != (self.n, self.n):
            raise ContractError(f"coupling matrix must be ({self.n}, {self.n}), got {w.shape}")
        if not np.array_equal(w, w.T):
            raise ContractError("coupling matrix must be symmetric")
        if np.any(np.diagonal(w) != 0.0):
            raise ContractError("coupling matrix must have a zero diagonal")
        pats.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "patterns", pats)
        object.__setattr__(self, "w", w)

    @property
    def p(self) -> int:
        return self.patterns.shape[0]

    @property
    def load_ratio(self) -> float:
        return self.p / self.n


def hebbian_store(patterns) -> HopfieldModel:
    """Outer-product storage: w = patterns^T patterns / n, zero diagonal."""
    pats = np.asarray(patterns, dtype=float)
    if pats.ndim != 2 or pats.shape[0] < 1:
        raise ContractError(f"need at least one pattern, got shape {pats.shape}")
    n = pats.shape[1]
    w = (pats.T @ pats) / n
    np.fill_diagonal(w, 0.0)
    return HopfieldModel(n=n, patterns=pats, w=w)


def overlap(z, xi) -> float:
    """Normalized dot product; in [-1, 1] for ±1 vectors."""
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if z.shape != xi.shape:
        raise ShapeError(f"state {z.shape} and pattern {xi.shape} lengths differ")
    return float(z @ xi) / len(xi)


def energy(model: HopfieldModel, z) -> float:
    z = np.asarray(z, dtype=float)
    return -0.5 * float(z @ (model.w @ z))


def run_dynamics(
    model: HopfieldModel,
    z0,
    t_steps: int,
    mode: str = "sync_sign",
    gain: float = 1.0,
    dt: float = 0.1,
) -> np.ndarray:
    """State trajectory of shape (t_steps + 1, n), row 0 the initial state.

    sync_sign updates all units at once (can 2-cycle); sequential_sign runs
    one full in-order sweep per recorded step (energy never increases);
    tanh_ode integrates dz/dt = -z + tanh(gain * w z) by explicit Euler.
    """
    if mode not in DYNAMICS_MODES:
        raise ContractError(f"unknown dynamics mode {mode!r}")
    if t_steps < 1:
        raise ContractError(f"t_steps must be >= 1, got {t_steps}")
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (model.n,):
        raise ShapeError(f"state must have shape ({model.n},), got {z.shape}")
    traj = np.empty((t_steps + 1, model.n))
    traj[0] = z
    if mode == "sync_sign":
        for t in range(1, t_steps + 1):
            h = model.w @ z
            z = np.where(h >= 0, 1.0, -1.0)
            traj[t] = z
    elif mode == "sequential_sign":
        if not np.all(np.abs(z) == 1.0):
            raise ContractError("sequential_sign needs a ±1 initial state")
        h = model.w @ z
        e = -0.5 * float(z @ h)
        for t in range(1, t_steps + 1):
            out = np.empty(1)
            kernels.hopfield_seq_sweep(model.w, z, h, 1, out, e)
            e = float(out[0])
            traj[t] = z
    else:
        for t in range(1, t_steps + 1):
            z = z + dt * (-z + np.tanh(gain * (model.w @ z)))
            traj[t] = z
    return traj


@dataclass(frozen=True)
class TransientRecovery:
    m_max: float
    t_argmax: int
    m_final: float
    recoverable: bool


def _overlap_series(traj: np.ndarray, xi, t_steps: int) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    if t_steps < 0 or t_steps > len(traj) - 1:
        raise ContractError(
            f"horizon {t_steps} outside the trajectory (length {len(traj)})"
        )
    xi = np.asarray(xi, dtype=float)
    return traj[: t_steps + 1] @ xi / len(xi)


def transient_recovery(
    traj: np.ndarray, xi, t_steps: int, retrieval_threshold: float = 0.9
) -> TransientRecovery:
    """Peak overlap within the horizon, when it occurred, and where it ended."""
    m = _overlap_series(traj, xi, t_steps)
    t_argmax = int(np.argmax(m))
    return TransientRecovery(
        m_max=float(m[t_argmax]),
        t_argmax=t_argmax,
        m_final=float(m[t_steps]),
        recoverable=bool(m[t_argmax] >= retrieval_threshold),
    )


def memory_effectiveness(traj: np.ndarray, xi, t_steps: int, tau_r: float) -> float:
    """Fraction of the first t_steps steps with overlap at or above tau_r."""
    m = _overlap_series(traj, xi, t_steps)
    return float(np.mean(m[:t_steps] >= tau_r))


def memory_force(traj: np.ndarray, xi, t_steps: int, grad_fn=None) -> float:
    """Time-averaged norm of the overlap gradient along the trajectory.

    For the linear overlap the gradient is xi/n everywhere, so the average is
    exactly 1/sqrt(n) — constant by construction, which makes this diagnostic
    degenerate until a nonlinear recall score is plugged in via ``grad_fn``.
    """
    traj = np.asarray(traj, dtype=float)
    if t_steps < 1 or t_steps > len(traj) - 1:
        raise ContractError(
            f"horizon {t_steps} outside the trajectory (length {len(traj)})"
        )
    if grad_fn is None:
        n = traj.shape[1]
        return 1.0 / math.sqrt(n)
    norms = [float(np.linalg.norm(grad_fn(traj[t]))) for t in range(t_steps)]
    return float(np.mean(norms))


# ---------------------------------------------------------------------------
# capacity sweep

CAPACITY_LOADS = (0.05, 0.1, 0.138, 0.2, 0.3)

MEMORY_HEADER = "load_ratio,seed,m_max,t_argmax,m_final,E_mem,recoverable"


@dataclass(frozen=True)
class MemoryCell:
    load_ratio: float
    seed: int
    m_max: float
    t_argmax: int
    m_final: float
    e_mem: float
    recoverable: bool


def run_memory_cell(
    n: int,
    n_patterns: int,
    t_steps: int,
    flip_fraction: float,
    seed: int,
    stream: int = 0,
    retrieval_threshold: float = 0.9,
    tau_r: float = 0.9,
    mode: str = "sync_sign",
) -> tuple[MemoryCell, np.ndarray]:
    """One storage/recall experiment: store random patterns, cue the first
    one with a fraction of its bits flipped, and run the dynamics."""
    rng = make_rng(seed, TAG_MEMORY, stream)
    pats = rng.choice([-1.0, 1.0], size=(n_patterns, n))
    model = hebbian_store(pats)
    z0 = pats[0].copy()
    nflip = int(round(flip_fraction * n))
    if nflip:
        idx = rng.choice(n, size=nflip, replace=False)
        z0[idx] *= -1.0
    traj = run_dynamics(model, z0, t_steps, mode=mode)
    rec = transient_recovery(traj, pats[0], t_steps, retrieval_threshold)
    e_mem = memory_effectiveness(traj, pats[0], t_steps, tau_r)
    cell = MemoryCell(
        load_ratio=n_patterns / n,
        seed=seed,
        m_max=rec.m_max,
        t_argmax=rec.t_argmax,
        m_final=rec.m_final,
        e_mem=e_mem,
        recoverable=rec.recoverable,
    )
    return cell, traj


def capacity_sweep(
    n: int = 200,
    load_ratios=CAPACITY_LOADS,
    n_seeds: int = 50,
    t_steps: int = 30,
    flip_fraction: float = 0.1,
    retrieval_threshold: float = 0.9,
    tau_r: float = 0.9,
    mode: str = "sync_sign",
    base_seed: int = 0,
) -> list[MemoryCell]:
    """Recall statistics across storage loads; rows in grid-then-seed order."""
    rows = []
    for li, load in enumerate(load_ratios):
        n_patterns = max(1, int(round(load * n)))
        for s in range(n_seeds):
            cell, _ = run_memory_cell(
                n, n_patterns, t_steps, flip_fraction,
                seed=base_seed + s, stream=li,
                retrieval_threshold=retrieval_threshold, tau_r=tau_r, mode=mode,
            )
            rows.append(cell)
    return rows


def write_memory_csv(path, rows: list[MemoryCell]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEMORY_HEADER.split(","))
        for r in rows:
            writer.writerow(
                [
                    f"{r.load_ratio:.17g}",
                    str(r.seed),
                    f"{r.m_max:.17g}",
                    str(r.t_argmax),
                    f"{r.m_final:.17g}",
                    f"{r.e_mem:.17g}",
                    "true" if r.recoverable else "false",
                ]
            )
