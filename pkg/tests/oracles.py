"""Independent oracles used by the test suite.

Everything here deliberately avoids the package's FFT/lattice machinery:
direct DFT sums, radial finite-difference self-consistent field, brute-force
pair sums. Slow but trustworthy.
"""

import numpy as np

from polaron_lab.radial_oracle import radial_ground_state as _radial_ground_state
from polaron_lab.radial_oracle import (  # noqa: F401  (re-exported for direct validation)
    radial_newton_potential,
    radial_truncated_potential,
)


def dft_direct(values, grid):
    """O(N^2) direct evaluation of the continuum-normalized forward transform."""
    pts = np.stack(
        np.meshgrid(*([grid.x_axis] * grid.dim), indexing="ij"), axis=-1
    ).reshape(-1, grid.dim)
    ks = np.stack(
        np.meshgrid(*([grid.k_axis] * grid.dim), indexing="ij"), axis=-1
    ).reshape(-1, grid.dim)
    phases = np.exp(-1j * ks @ pts.T)
    out = phases @ values.ravel() * grid.cell_volume
    return out.reshape(grid.shape)


def _cell_averaged_inverse_r(n, dx, sub=4):
    """Table of cell-averaged 1/|r| over all (2n-1)^3 integer offsets."""
    offs = dx * np.arange(-(n - 1), n)
    # subcell quadrature nodes (midpoint rule inside each cell)
    u = dx * ((np.arange(sub) + 0.5) / sub - 0.5)
    table = np.zeros((2 * n - 1,) * 3)
    ox, oy, oz = np.meshgrid(offs, offs, offs, indexing="ij")
    for ux in u:
        for uy in u:
            for uz in u:
                table += 1.0 / np.sqrt(
                    (ox + ux) ** 2 + (oy + uy) ** 2 + (oz + uz) ** 2
                )
    return table / sub**3


def brute_force_coulomb_free(rho, grid, refine=1):
    """Free-space V = -sum_y rho(y) <1/|x-y|>_cell dx^3: padded direct convolution.

    The kernel is tabulated by real-space subcell averaging (no spectral
    machinery involved), and the convolution is zero-padded, so there are no
    periodic images. ``refine`` > 1 evaluates the sum on a finer grid (pass a
    callable rho(x, y, z) in that case) and restricts back.
    """
    from scipy.signal import fftconvolve

    n = grid.points_per_axis * refine
    dx = grid.dx / refine
    if callable(rho):
        idx = np.arange(n)
        idx = np.where(idx < n // 2, idx, idx - n)
        ax = dx * idx
        mesh = np.meshgrid(ax, ax, ax, indexing="ij")
        rho_arr = rho(*mesh)
    else:
        rho_arr = rho
    kernel = _cell_averaged_inverse_r(n, dx)
    rho_c = np.roll(rho_arr, (n // 2,) * 3, axis=(0, 1, 2))
    v = -fftconvolve(rho_c, kernel, mode="same") * dx**3
    v = np.roll(v, (-(n // 2),) * 3, axis=(0, 1, 2))
    return v[::refine, ::refine, ::refine]


def radial_ground_state(g, r_cut=None, **kwargs):
    """Radial reference solver (package implementation, validated below)."""
    return _radial_ground_state(g, r_cut=r_cut, **kwargs)


def displaced_oscillator_ground_energy(omega, coupling):
    """Ground energy of omega*n + coupling*(a + a^dagger): -coupling^2/omega."""
    return -(coupling**2) / omega
