# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: overdamped-Langevin stepping, finite-volume density
updates, and sequential sign-network sweeps.

Arithmetic here is kept expression-for-expression identical to the pure-NumPy
fallback in ``_refkernels``; in clip-free regimes the two backends agree
bitwise.  Potentials are addressed by id: 0 = quadratic, 1 = double well.
"""

import numpy as np


def langevin_chunk(const double[:, ::1] noise, double[::1] pos, int pot, double dt, double amp):
    """Advance positions in place: pos <- pos - dt*U'(pos) + amp*xi, per noise row."""
    cdef Py_ssize_t nsteps = noise.shape[0]
    cdef Py_ssize_t n = noise.shape[1]
    cdef Py_ssize_t k, i
    cdef double x, g
    for k in range(nsteps):
        for i in range(n):
            x = pos[i]
            if pot == 0:
                g = x
            else:
                g = x * x * x - x
            pos[i] = x - dt * g + amp * noise[k, i]


def fp_chunk(double[::1] rho, const double[::1] drift_face, double beta, double dx,
             double dt, int nsteps):
    """Advance the finite-volume density ``nsteps`` explicit steps in place.

    ``drift_face`` holds U' at the m-1 interior faces; boundary fluxes are
    zero (reflecting walls).  Negative cells are clipped to zero with mass
    renormalization.  Returns the total number of clipped cells.
    """
    cdef Py_ssize_t m = rho.shape[0]
    cdef Py_ssize_t k, i
    cdef double r = dt / dx
    cdef double dcoef = beta / dx
    cdef double mass
    cdef int clipped = 0
    cdef int step_clip
    flux_arr = np.empty(m - 1, dtype=np.float64)
    cdef double[::1] flux = flux_arr
    for k in range(nsteps):
        for i in range(m - 1):
            flux[i] = drift_face[i] * (0.5 * (rho[i] + rho[i + 1])) \
                + dcoef * (rho[i + 1] - rho[i])
        rho[0] = rho[0] + r * flux[0]
        for i in range(1, m - 1):
            rho[i] = rho[i] + r * (flux[i] - flux[i - 1])
        rho[m - 1] = rho[m - 1] - r * flux[m - 2]
        step_clip = 0
        for i in range(m):
            if rho[i] < 0.0:
                rho[i] = 0.0
                step_clip += 1
        if step_clip > 0:
            clipped += step_clip
            mass = 0.0
            for i in range(m):
                mass += rho[i]
            mass *= dx
            for i in range(m):
                rho[i] = rho[i] / mass
    return clipped


def hopfield_seq_sweep(const double[:, ::1] w, double[::1] z, double[::1] h,
                       int nsweeps, double[::1] energy_out, double e0):
    """Run sequential sign-update sweeps in place.

    ``h`` must equal ``w @ z`` on entry and is maintained incrementally.
    ``energy_out`` (length nsweeps) receives -z^T W z / 2 after each sweep.
    Returns ``(total_flips, final_energy)``.
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t s, i, j
    cdef double hi, target, delta
    cdef double e = e0
    cdef int flips = 0
    for s in range(nsweeps):
        for i in range(n):
            hi = h[i]
            if hi >= 0.0:
                target = 1.0
            else:
                target = -1.0
            if target != z[i]:
                delta = target - z[i]
                z[i] = target
                e = e - delta * hi
                for j in range(n):
                    h[j] = h[j] + w[i, j] * delta
                flips += 1
        energy_out[s] = e
    return flips, e
