"""Periodic-grid fields, Fourier transforms, and Coulomb-type kernels.

Conventions (used consistently across the whole package):

* forward transform of a field ``f`` on the box ``[0, L)^d``::

      fhat(k) = sum_x exp(-i k.x) f(x) dx^d        (= fftn(f) * dx^d)

  so that convolutions become products, and the inverse carries the
  ``(2pi)^-d`` of the continuum convention,

* momentum sums approximate integrals with the flat weight
  ``w_k = (2pi/L)^d``, which makes Parseval read
  ``<f, g> = (2pi)^-d * sum_k w_k conj(fhat) ghat`` exactly on the lattice,

* an interaction form factor ``v(k) >= 0`` induces the scalar kernel
  multiplier ``M(k) = 2 (2pi)^d v(k)^2``; for the three-dimensional Coulomb
  factor ``v(k) = 1/(2pi|k|)`` this gives the familiar ``4pi/k^2``.

All field/grid values are immutable after construction; operations are pure
functions and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DivergenceError,
    GridMismatchError,
    MeasureConsistencyError,
    UnsupportedKernelError,
)

__all__ = [
    "Grid",
    "WaveField",
    "FormFactor",
    "fft_field",
    "ifft_field",
    "field_inner",
    "mode_inner",
    "mode_norm_sq",
    "coulomb_potential",
    "hartree_energy",
    "HartreeEnergy",
    "cutoff_filter",
    "cv_constant",
    "kinetic_energy",
    "apply_kinetic",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, box_length)^dim``.

    The momentum lattice is ``(2pi/L) * Z^dim`` folded into the first
    Brillouin zone by the usual FFT ordering; it is closed under ``k -> -k``
    up to that folding.
    """

    dim: int
    points_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridMismatchError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.points_per_axis):
            raise GridMismatchError(
                f"points_per_axis must be a power of two >= 2, got {self.points_per_axis}"
            )
        if not (self.box_length > 0):
            raise GridMismatchError(f"box_length must be positive, got {self.box_length}")

    @property
    def dx(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def mode_weight(self) -> float:
        """Quadrature weight w_k = (2pi/L)^dim of one momentum-lattice cell."""
        return (2.0 * np.pi / self.box_length) ** self.dim

    @cached_property
    def k_axis(self) -> np.ndarray:
        """1d momentum values in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.dx)

    @cached_property
    def x_axis(self) -> np.ndarray:
        return self.dx * np.arange(self.points_per_axis)

    @cached_property
    def x_axis_centered(self) -> np.ndarray:
        """Signed minimum-image coordinates relative to the grid origin."""
        n = self.points_per_axis
        idx = np.arange(n)
        idx = np.where(idx < n // 2, idx, idx - n)
        return self.dx * idx

    @cached_property
    def k_mesh(self) -> tuple:
        return np.meshgrid(*([self.k_axis] * self.dim), indexing="ij")

    @cached_property
    def k_sq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for comp in self.k_mesh:
            out = out + comp**2
        out.flags.writeable = False
        return out

    @cached_property
    def k_abs(self) -> np.ndarray:
        out = np.sqrt(self.k_sq)
        out.flags.writeable = False
        return out

    def compatible(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.points_per_axis == other.points_per_axis
            and np.isclose(self.box_length, other.box_length, rtol=1e-14, atol=0.0)
        )

    def require_same(self, other: "Grid"):
        if not self.compatible(other):
            raise GridMismatchError(f"incompatible grids: {self} vs {other}")


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.array(values)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class WaveField:
    """Complex field on a periodic grid (units L^{-dim/2}, so norms are pure numbers)."""

    grid: Grid
    values: np.ndarray
    # Spectrum cache: filled lazily; also set directly by spectral constructors so
    # that projections like cutoff_filter are exactly idempotent.
    _spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", _freeze(vals))
        if self._spectrum is not None:
            object.__setattr__(self, "_spectrum", _freeze(np.asarray(self._spectrum)))

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray) -> "WaveField":
        spectrum = np.asarray(spectrum, dtype=np.complex128)
        if spectrum.shape != grid.shape:
            raise GridMismatchError(
                f"spectrum shape {spectrum.shape} does not match grid shape {grid.shape}"
            )
        values = np.fft.ifftn(spectrum) / grid.cell_volume
        return cls(grid, values, _spectrum=spectrum)

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            spec = _freeze(np.fft.fftn(self.values) * self.grid.cell_volume)
            object.__setattr__(self, "_spectrum", spec)
        return self._spectrum

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2).real * self.grid.cell_volume))

    def normalized(self) -> "WaveField":
        n = self.norm()
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero field")
        return WaveField(self.grid, self.values / n)

    def density(self) -> np.ndarray:
        """Pointwise |phi|^2 as a real array."""
        return np.abs(self.values) ** 2

    def is_real(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.values.imag))) < tol


def fft_field(psi: WaveField) -> np.ndarray:
    """Continuum-normalized forward transform: fhat(k) = sum_x e^{-ikx} psi(x) dx^d."""
    return psi.spectrum().copy()


def ifft_field(grid: Grid, spectrum: np.ndarray) -> WaveField:
    """Inverse of :func:`fft_field`."""
    return WaveField.from_spectrum(grid, spectrum)


def field_inner(a: WaveField, b: WaveField) -> complex:
    a.grid.require_same(b.grid)
    return complex(np.vdot(a.values, b.values) * a.grid.cell_volume)


def mode_inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> complex:
    """Momentum-space inner product sum_k w_k conj(f) g."""
    return complex(np.vdot(f, g) * grid.mode_weight)


def mode_norm_sq(grid: Grid, f: np.ndarray) -> float:
    return float(np.sum(np.abs(f) ** 2) * grid.mode_weight)


def mode_sum_field(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Position-space values of sum_k w_k coeffs(k) e^{ikx} (a plain dk-integral)."""
    return np.fft.ifftn(coeffs) * (grid.mode_weight * grid.size)


@dataclass(frozen=True)
class FormFactor:
    """Electron-phonon coupling profile v(k) >= 0 on the momentum lattice.

    ``kernel_multiplier`` is the scalar-potential kernel the factor induces,
    M(k) = 2 (2pi)^dim v(k)^2, i.e. the Fourier multiplier of the static
    interaction the phonons mediate.
    """

    grid: Grid
    values: np.ndarray
    cutoff: float
    variant: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"form factor shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if np.any(vals < 0):
            raise ValueError("form factor values must be nonnegative")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def coulomb_d3(cls, grid: Grid, cutoff: float = np.inf) -> "FormFactor":
        """Bare periodic Coulomb factor v(k) = 1/(2pi|k|), v(0) = 0."""
        if grid.dim != 3:
            raise UnsupportedKernelError("coulomb_d3 requires a 3d grid")
        kabs = grid.k_abs
        with np.errstate(divide="ignore"):
            vals = np.where(kabs > 0, 1.0 / (2.0 * np.pi * np.maximum(kabs, 1e-300)), 0.0)
        vals = np.where(kabs <= cutoff, vals, 0.0)
        return cls(grid, vals, cutoff=cutoff, variant="coulomb_d3")

    @classmethod
    def coulomb_d3_isolated(
        cls, grid: Grid, r_cut: float | None = None, cutoff: float = np.inf
    ) -> "FormFactor":
        """Sphere-truncated Coulomb factor for isolated (image-free) systems.

        The induced kernel is exactly 1/r for r < r_cut and zero beyond, so a
        charge distribution that fits inside a ball of radius r_cut/2 feels no
        periodic images at all. Default r_cut is half the box, the largest
        wrap-free choice.
        """
        if grid.dim != 3:
            raise UnsupportedKernelError("coulomb_d3_isolated requires a 3d grid")
        if r_cut is None:
            r_cut = grid.box_length / 2.0
        kabs = grid.k_abs
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.sqrt(2.0) * np.abs(np.sin(kabs * r_cut / 2.0)) / (
                2.0 * np.pi * np.maximum(kabs, 1e-300)
            )
        # k -> 0 limit of sqrt(2)|sin(k r/2)|/(2 pi k)
        vals = np.where(kabs > 0, vals, np.sqrt(2.0) * r_cut / (4.0 * np.pi))
        vals = np.where(kabs <= cutoff, vals, 0.0)
        return cls(grid, vals, cutoff=cutoff, variant="coulomb_d3_isolated")

    @classmethod
    def toy(
        cls, grid: Grid, v0: float, exponent: float = 0.0, cutoff: float = np.inf
    ) -> "FormFactor":
        """Toy factor v(k) = v0 |k|^{-exponent} for low-dimensional experiments."""
        kabs = grid.k_abs
        if exponent == 0.0:
            vals = np.full(grid.shape, float(v0))
        else:
            with np.errstate(divide="ignore"):
                vals = np.where(kabs > 0, v0 * np.maximum(kabs, 1e-300) ** (-exponent), 0.0)
        vals = np.where(kabs <= cutoff, vals, 0.0)
        return cls(grid, vals, cutoff=cutoff, variant=f"toy(v0={v0},p={exponent})")

    @cached_property
    def kernel_multiplier(self) -> np.ndarray:
        """M(k) = 2 (2pi)^dim v(k)^2 (equals 4pi/k^2 for the bare d=3 factor)."""
        out = 2.0 * (2.0 * np.pi) ** self.grid.dim * self.values**2
        out.flags.writeable = False
        return out


_KERNELS = ("periodic", "isolated")


def _coulomb_form(grid: Grid, kernel: str) -> FormFactor:
    if kernel == "periodic":
        return FormFactor.coulomb_d3(grid)
    if kernel == "isolated":
        return FormFactor.coulomb_d3_isolated(grid)
    raise UnsupportedKernelError(f"unknown kernel {kernel!r}; choose from {_KERNELS}")


def kernel_potential(rho: WaveField, form: FormFactor) -> WaveField:
    """Attractive potential V = -(K * rho) for the kernel induced by ``form``."""
    rho.grid.require_same(form.grid)
    vhat = -form.kernel_multiplier * rho.spectrum()
    out = WaveField.from_spectrum(rho.grid, vhat)
    return WaveField(rho.grid, out.values.real)


def coulomb_potential(rho: WaveField, kernel: str = "periodic") -> WaveField:
    """Solve V = -|.|^{-1} * rho on the grid (d=3 only).

    kernel="periodic" applies the bare multiplier -4pi/k^2 with the k=0 mode
    zeroed (neutralizing background); kernel="isolated" uses the
    sphere-truncated 1/r so that localized charges see no images.
    """
    if rho.grid.dim != 3:
        raise UnsupportedKernelError(
            f"coulomb_potential is defined for dim=3 only, got dim={rho.grid.dim}"
        )
    if not rho.is_real(1e-10 * max(1.0, float(np.max(np.abs(rho.values))))):
        raise ValueError("coulomb_potential expects a real density")
    return kernel_potential(rho, _coulomb_form(rho.grid, kernel))


@dataclass(frozen=True)
class HartreeEnergy:
    """Dual evaluation of D(rho) = integral rho(x) rho(y) / |x-y|."""

    momentum: float
    real_space: float

    @property
    def value(self) -> float:
        return self.momentum

    def __float__(self) -> float:
        return self.momentum


def hartree_energy(
    rho: WaveField,
    kernel: str = "periodic",
    form: FormFactor | None = None,
    rtol: float = 1e-10,
) -> HartreeEnergy:
    """Compute D(rho) both as 2 sum_k w_k v^2 |rhohat|^2 and as -<rho, V rho>.

    The two evaluations must agree to ``rtol`` (relative); any discrepancy
    means the lattice measure weights are inconsistent somewhere, so this
    doubles as the package-wide measure self-test.
    """
    if form is None:
        if rho.grid.dim != 3:
            raise UnsupportedKernelError("hartree_energy without a form factor requires dim=3")
        form = _coulomb_form(rho.grid, kernel)
    rho.grid.require_same(form.grid)
    rhohat = rho.spectrum()
    d_momentum = 2.0 * float(
        np.sum(form.values**2 * np.abs(rhohat) ** 2) * rho.grid.mode_weight
    )
    v = kernel_potential(rho, form)
    d_real = -float(np.sum(rho.values.real * v.values.real) * rho.grid.cell_volume)
    scale = max(abs(d_momentum), abs(d_real), 1e-30)
    if abs(d_momentum - d_real) > rtol * scale:
        raise MeasureConsistencyError(
            f"Hartree dual evaluation mismatch: momentum={d_momentum!r}, "
            f"real_space={d_real!r}"
        )
    return HartreeEnergy(momentum=d_momentum, real_space=d_real)


def cutoff_filter(psi: WaveField, lam: float) -> WaveField:
    """Zero all modes with |k| > lam. Idempotent exactly (spectrum is cached)."""
    if not (lam > 0):
        raise ValueError(f"cutoff must be positive, got {lam}")
    mask = psi.grid.k_abs <= lam
    return WaveField.from_spectrum(psi.grid, psi.spectrum() * mask)


def cv_constant(form: FormFactor, q_samples: np.ndarray) -> float:
    """sup_q of the Lorentzian-weighted lattice sum sum_k w_k v(k)^2 / (1 + (q-k)^2).

    ``q_samples`` is an array of shape (m, dim) (or (m,) for dim=1). The
    estimate is monotone nondecreasing under refinement of the sample set.
    """
    grid = form.grid
    q = np.atleast_2d(np.asarray(q_samples, dtype=float))
    if grid.dim == 1 and q.shape[0] == 1 and q.shape[1] > 1:
        q = q.T
    if q.shape[1] != grid.dim:
        raise GridMismatchError(
            f"q_samples must have {grid.dim} components, got shape {q.shape}"
        )
    v2 = form.values**2
    if not np.all(np.isfinite(v2)):
        raise DivergenceError("form factor contains non-finite values")
    best = 0.0
    kcomps = [comp.ravel() for comp in grid.k_mesh]
    v2flat = v2.ravel()
    for qvec in q:
        dist_sq = np.zeros_like(v2flat)
        for qi, kc in zip(qvec, kcomps):
            dist_sq = dist_sq + (qi - kc) ** 2
        total = float(np.sum(v2flat / (1.0 + dist_sq)) * grid.mode_weight)
        if not np.isfinite(total):
            raise DivergenceError("Lorentzian-weighted sum diverged")
        best = max(best, total)
    return best


def kinetic_energy(psi: WaveField) -> float:
    """<psi, -Laplacian psi> evaluated spectrally."""
    spec = psi.spectrum()
    g = psi.grid
    return float(
        np.sum(g.k_sq * np.abs(spec) ** 2) * g.mode_weight / (2.0 * np.pi) ** g.dim
    )


def apply_kinetic(psi: WaveField) -> WaveField:
    """-Laplacian psi via the spectral multiplier k^2."""
    return WaveField.from_spectrum(psi.grid, psi.grid.k_sq * psi.spectrum())
