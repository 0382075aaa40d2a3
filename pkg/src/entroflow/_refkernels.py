"""Pure-NumPy fallback for the compiled kernels.

Signatures and arithmetic mirror ``_corekernels`` exactly (same expression
shapes, same association order), so the two backends agree bitwise wherever
no clipping/renormalization occurs.
"""

from __future__ import annotations

import numpy as np


def langevin_chunk(noise: np.ndarray, pos: np.ndarray, pot: int, dt: float, amp: float):
    """Advance positions in place: pos <- pos - dt*U'(pos) + amp*xi, per noise row."""
    for k in range(noise.shape[0]):
        if pot == 0:
            g = pos
        else:
            g = pos * pos * pos - pos
        pos[...] = pos - dt * g + amp * noise[k]


def fp_chunk(rho: np.ndarray, drift_face: np.ndarray, beta: float, dx: float,
             dt: float, nsteps: int) -> int:
    """Advance the finite-volume density ``nsteps`` explicit steps in place."""
    r = dt / dx
    dcoef = beta / dx
    clipped = 0
    for _ in range(nsteps):
        flux = drift_face * (0.5 * (rho[:-1] + rho[1:])) + dcoef * (rho[1:] - rho[:-1])
        rho[0] = rho[0] + r * flux[0]
        rho[1:-1] = rho[1:-1] + r * (flux[1:] - flux[:-1])
        rho[-1] = rho[-1] - r * flux[-1]
        neg = rho < 0.0
        if neg.any():
            clipped += int(neg.sum())
            rho[neg] = 0.0
            mass = float(rho.sum()) * dx
            rho /= mass
    return clipped


def hopfield_seq_sweep(w: np.ndarray, z: np.ndarray, h: np.ndarray,
                       nsweeps: int, energy_out: np.ndarray, e0: float):
    """Run sequential sign-update sweeps in place; see the compiled twin."""
    n = z.shape[0]
    e = e0
    flips = 0
    for s in range(nsweeps):
        for i in range(n):
            hi = h[i]
            target = 1.0 if hi >= 0.0 else -1.0
            if target != z[i]:
                delta = target - z[i]
                z[i] = target
                e = e - delta * hi
                h += w[i] * delta
                flips += 1
        energy_out[s] = e
    return flips, e
