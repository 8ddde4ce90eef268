"""Ground states of the polaron energy functional (Choquard minimization).

The functional minimized here is

    E(phi) = int |grad phi|^2  -  g * int int rho(x) rho(y) / |x-y|,   rho = |phi|^2

on the sphere ||phi|| = 1. Its Euler-Lagrange equation is

    (-Lap + 2 g V) phi = lambda phi,      V = -|.|^{-1} * rho,

and the stationary phonon data attached to a minimizer is the displacement
f(k) = v(k) rhohat(k) with mu = -2g ||f||^2 and E_P = lambda - mu.  The
rescaled strong-coupling units used by the dynamics and Fock modules
correspond to g = 1/2 (where mu = -||f||^2).

Minimization is normalized imaginary-time propagation (split-step) with an
energy-monotonicity safeguard and multiplicative step adaptation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from . import io as snapshot_io
from .errors import ConvergenceError, ProjectionError
from .spectral_core import (
    FormFactor,
    Grid,
    WaveField,
    hartree_energy,
    kernel_potential,
    kinetic_energy,
    mode_norm_sq,
)

__all__ = [
    "PekarEnergy",
    "PekarSolution",
    "pekar_energy",
    "energy_gradient",
    "minimize_pekar",
    "coherent_displacement",
    "scaling_check",
    "save_solution",
    "load_solution",
]


def _default_form(grid: Grid, kernel: str) -> FormFactor:
    if kernel == "isolated":
        return FormFactor.coulomb_d3_isolated(grid)
    if kernel == "periodic":
        return FormFactor.coulomb_d3(grid)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass(frozen=True)
class PekarEnergy:
    total: float
    kinetic: float
    hartree: float
    g: float

    @property
    def interaction(self) -> float:
        """Magnitude g*D of the attractive term actually entering the energy."""
        return self.g * self.hartree


def pekar_energy(phi: WaveField, g: float, form: FormFactor | None = None) -> PekarEnergy:
    """Evaluate E(phi) = T - g*D together with its (T, D) decomposition."""
    if form is None:
        form = _default_form(phi.grid, "isolated")
    t = kinetic_energy(phi)
    rho = WaveField(phi.grid, phi.density())
    d = hartree_energy(rho, form=form).value
    return PekarEnergy(total=t - g * d, kinetic=t, hartree=d, g=g)


def _mean_field_potential(phi: WaveField, form: FormFactor) -> np.ndarray:
    rho = WaveField(phi.grid, phi.density())
    return kernel_potential(rho, form).values.real


def energy_gradient(phi: WaveField, g: float, form: FormFactor | None = None) -> np.ndarray:
    """H_mf phi with H_mf = -Lap + 2 g V[rho]; pairs with variations via 2 Re<., .>."""
    if form is None:
        form = _default_form(phi.grid, "isolated")
    v = _mean_field_potential(phi, form)
    lap = WaveField.from_spectrum(phi.grid, phi.grid.k_sq * phi.spectrum()).values
    return lap + 2.0 * g * v * phi.values


def coherent_displacement(phi: WaveField, form: FormFactor | None = None) -> np.ndarray:
    """Stationary phonon displacement profile f(k) = v(k) rhohat(k)."""
    if form is None:
        form = _default_form(phi.grid, "isolated")
    rho = WaveField(phi.grid, phi.density())
    return form.values * rho.spectrum()


@dataclass(frozen=True)
class PekarSolution:
    phi0: WaveField
    lam: float
    mu: float
    e_p: float
    g: float
    residual: float
    f: np.ndarray
    form: FormFactor
    gap: float | None
    energy_history: tuple
    flags: tuple = ()

    @property
    def kernel(self) -> str:
        return self.form.variant

    def mean_field_hamiltonian(self) -> "LinearOperator":
        """The converged operator -Lap + 2 g V as a matrix-free LinearOperator."""
        grid = self.phi0.grid
        v = _mean_field_potential(self.phi0, self.form)
        ksq = grid.k_sq

        def matvec(x):
            arr = x.reshape(grid.shape)
            out = np.fft.ifftn(ksq * np.fft.fftn(arr)) + 2.0 * self.g * v * arr
            return out.ravel()

        return LinearOperator(
            (grid.size, grid.size), matvec=matvec, dtype=np.complex128
        )


def _gaussian_seed(grid: Grid, g: float, rng=None) -> WaveField:
    sigma = max(1.5 / max(g, 1e-3), 2.5 * grid.dx)
    mesh = np.meshgrid(*([grid.x_axis_centered] * grid.dim), indexing="ij")
    r2 = sum(c**2 for c in mesh)
    vals = np.exp(-r2 / (4.0 * sigma**2))
    if rng is not None:
        vals = vals * (1.0 + 0.01 * rng.standard_normal(grid.shape))
    return WaveField(grid, vals).normalized()


def _recenter(phi: WaveField) -> WaveField:
    """Integer-shift the density centroid to the grid origin (periodic centroid)."""
    grid = phi.grid
    rho = phi.density()
    vals = phi.values
    shifts = []
    for axis in range(grid.dim):
        phase = np.exp(-2j * np.pi * grid.x_axis / grid.box_length)
        shape = [1] * grid.dim
        shape[axis] = grid.points_per_axis
        m = complex(np.sum(rho * phase.reshape(shape)))
        theta = np.angle(m)  # in (-pi, pi], centroid = theta/(2 pi) * L
        shift = int(np.round(theta / (2.0 * np.pi) * grid.points_per_axis))
        shifts.append(-shift % grid.points_per_axis)
    vals = np.roll(vals, shifts, axis=tuple(range(grid.dim)))
    return WaveField(grid, vals)


def _residual(phi: WaveField, g: float, form: FormFactor) -> tuple:
    hphi = energy_gradient(phi, g, form)
    lam = float(np.real(np.vdot(phi.values, hphi)) * phi.grid.cell_volume)
    r = hphi - lam * phi.values
    return float(np.sqrt(np.sum(np.abs(r) ** 2) * phi.grid.cell_volume)), lam


def _spectral_gap(phi: WaveField, g: float, form: FormFactor, rng) -> tuple:
    """Two lowest eigenvalues of -Lap + 2gV (matrix-free, kinetic-preconditioned)."""
    grid = phi.grid
    v = _mean_field_potential(phi, form)
    ksq = grid.k_sq

    def matvec(x):
        arr = x.reshape(grid.shape)
        out = np.fft.ifftn(ksq * np.fft.fftn(arr)) + 2.0 * g * v * arr
        return out.ravel().real

    def precond(x):
        return np.fft.ifftn(np.fft.fftn(x.reshape(grid.shape)) / (ksq + 0.3)).ravel().real

    op = LinearOperator((grid.size, grid.size), matvec=matvec, dtype=float)
    m = LinearOperator((grid.size, grid.size), matvec=precond, dtype=float)
    block = np.stack(
        [phi.values.ravel().real, rng.standard_normal(grid.size)], axis=1
    )
    vals, _ = lobpcg(op, block, M=m, tol=1e-8, maxiter=400, largest=False)
    vals = np.sort(vals)
    return float(vals[0]), float(vals[1] - vals[0])


def minimize_pekar(
    grid: Grid,
    g: float,
    tol: float = 1e-6,
    max_iter: int = 2000,
    seed_profile: WaveField | None = None,
    kernel: str = "isolated",
    form: FormFactor | None = None,
    rng=None,
    compute_gap: bool = True,
) -> PekarSolution:
    """Minimize the polaron functional on the grid; see module docstring.

    Raises ConvergenceError if the Euler-Lagrange residual does not reach
    ``tol`` within ``max_iter`` sweeps, and ProjectionError if the iterate
    develops genuine sign changes that the positivity projection cannot heal.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if form is None:
        form = _default_form(grid, kernel)

    if g <= 0:
        # Non-binding limit: the infimum 0 is attained only by the constant mode.
        phi = WaveField(grid, np.full(grid.shape, 1.0)).normalized()
        f = coherent_displacement(phi, form)
        return PekarSolution(
            phi0=phi,
            lam=0.0 if g == 0 else _residual(phi, g, form)[1],
            mu=-2.0 * g * mode_norm_sq(grid, f),
            e_p=pekar_energy(phi, g, form).total,
            g=g,
            residual=_residual(phi, g, form)[0],
            f=f,
            form=form,
            gap=None,
            energy_history=(pekar_energy(phi, g, form).total,),
            flags=("free case",),
        )

    phi0 = seed_profile.normalized() if seed_profile is not None else _gaussian_seed(grid, g, rng)
    phi = phi0.values.astype(np.complex128)
    ksq = grid.k_sq
    dv = grid.cell_volume
    mom_w = grid.mode_weight
    mult = form.kernel_multiplier
    twopi_d = (2.0 * np.pi) ** grid.dim

    def evaluate(values):
        spec = np.fft.fftn(values) * dv
        rho_hat = np.fft.fftn(np.abs(values) ** 2) * dv
        v = (np.fft.ifftn(-mult * rho_hat) / dv).real
        t = float(np.sum(ksq * np.abs(spec) ** 2) * mom_w / twopi_d)
        d = float(-np.sum(np.abs(values) ** 2 * v) * dv)
        hphi = np.fft.ifftn(ksq * spec) / dv + 2.0 * g * v * values
        return t - g * d, hphi

    def precondition(vec, shift):
        return np.fft.ifftn(np.fft.fftn(vec) / (ksq + shift))

    energy, hphi = evaluate(phi)
    history = [energy]
    tau = 0.5 / max(g, 1.0)
    prev_step = prev_dgrad = None
    residual = np.inf
    lam = 0.0

    # Projected gradient flow on the sphere: imaginary-time direction,
    # kinetic-preconditioned, Barzilai-Borwein step with a monotone safeguard.
    for it in range(max_iter):
        lam = float(np.real(np.vdot(phi, hphi)) * dv)
        grad = hphi - lam * phi
        residual = float(np.sqrt(np.sum(np.abs(grad) ** 2) * dv))
        if residual < tol:
            break
        shift = max(abs(lam), 0.05)
        direction = precondition(grad, shift)
        if prev_step is not None:
            sy = float(np.real(np.vdot(prev_step, prev_dgrad)) * dv)
            ss = float(np.real(np.vdot(prev_step, prev_step)) * dv)
            if sy > 1e-300:
                tau = min(max(ss / sy, 1e-4), 100.0)
        accepted = False
        for _ in range(40):
            cand = phi - tau * direction
            neg_mass = float(np.sqrt(np.sum(np.clip(cand.real, None, 0.0) ** 2)))
            if it > 30 and neg_mass > 0.05 * float(np.sqrt(np.sum(np.abs(cand) ** 2))):
                raise ProjectionError(
                    "iterate developed persistent sign changes under positivity projection"
                )
            cand = np.abs(cand)  # ground state is positive; removes phase drift
            cand /= np.sqrt(np.sum(cand**2) * dv)
            e_new, h_new = evaluate(cand)
            if e_new <= energy + 1e-15 * max(1.0, abs(energy)):
                prev_step = cand - phi
                phi = cand.astype(np.complex128)
                lam_new = float(np.real(np.vdot(phi, h_new)) * dv)
                prev_dgrad = precondition((h_new - lam_new * phi) - grad, shift)
                energy, hphi = e_new, h_new
                history.append(energy)
                accepted = True
                break
            tau *= 0.4
        if not accepted:
            raise ConvergenceError(
                "line search collapsed without reaching tolerance", residual=residual
            )
    else:
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations (residual {residual:.3e})",
            residual=residual,
        )
    phi = WaveField(grid, phi)

    phi = _recenter(phi)
    residual, lam = _residual(phi, g, form)
    f = coherent_displacement(phi, form)
    fsq = mode_norm_sq(grid, f)
    mu = -2.0 * g * fsq
    energy_parts = pekar_energy(phi, g, form)
    e_p = energy_parts.total
    flags = ()
    if energy_parts.kinetic < 1e-6 * max(abs(e_p), 1e-12):
        # uniform torus state: on small boxes it can undercut the polaron branch
        flags = ("delocalized",)
    gap = None
    if compute_gap:
        lam_lanczos, gap = _spectral_gap(phi, g, form, rng)
        if abs(lam_lanczos - lam) > 1e-5 * max(1.0, abs(lam)):
            raise ConvergenceError(
                f"converged state is not the lowest mean-field eigenvector "
                f"(lambda={lam:.8e}, lanczos={lam_lanczos:.8e})",
                residual=residual,
            )
    return PekarSolution(
        phi0=phi,
        lam=lam,
        mu=mu,
        e_p=e_p,
        g=g,
        residual=residual,
        f=f,
        form=form,
        gap=gap,
        energy_history=tuple(history),
        flags=flags,
    )


@dataclass(frozen=True)
class ScalingReport:
    g1: float
    g2: float
    e1: float
    e2: float
    ratio: float
    expected_ratio: float
    ratio_defect: float
    length1: float
    length2: float
    length_ratio_defect: float


def _rms_radius(phi: WaveField) -> float:
    grid = phi.grid
    mesh = np.meshgrid(*([grid.x_axis_centered] * grid.dim), indexing="ij")
    r2 = sum(c**2 for c in mesh)
    rho = phi.density()
    return float(np.sqrt(np.sum(r2 * rho) * grid.cell_volume))


def scaling_check(
    sol1: PekarSolution,
    sol2: PekarSolution,
    ratio_tol: float = 1e-3,
    length_tol: float = 1e-2,
) -> ScalingReport:
    """Verify the dilation law E_P(g2)/E_P(g1) = (g2/g1)^2 and the 1/g length scale."""
    expected = (sol2.g / sol1.g) ** 2
    ratio = sol2.e_p / sol1.e_p
    ratio_defect = abs(ratio - expected) / expected
    r1, r2 = _rms_radius(sol1.phi0), _rms_radius(sol2.phi0)
    length_defect = abs(r1 / r2 - sol2.g / sol1.g) / (sol2.g / sol1.g)
    report = ScalingReport(
        g1=sol1.g,
        g2=sol2.g,
        e1=sol1.e_p,
        e2=sol2.e_p,
        ratio=ratio,
        expected_ratio=expected,
        ratio_defect=ratio_defect,
        length1=r1,
        length2=r2,
        length_ratio_defect=length_defect,
    )
    if ratio_defect > ratio_tol:
        raise ConvergenceError(
            f"energy scaling ratio {ratio} deviates from {expected} beyond {ratio_tol}",
            residual=ratio_defect,
        )
    if length_defect > length_tol:
        raise ConvergenceError(
            f"length-scale contraction defect {length_defect} exceeds {length_tol}",
            residual=length_defect,
        )
    return report


def save_solution(directory, sol: PekarSolution, tag: str = "pekar") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    snapshot_io.save_field(directory / f"{tag}_phi0.plfb", sol.phi0, extra={"g": sol.g})
    meta = {
        "lambda": sol.lam,
        "mu": sol.mu,
        "E_P": sol.e_p,
        "g": sol.g,
        "residual": sol.residual,
        "gap": sol.gap,
        "kernel": sol.kernel,
        "flags": list(sol.flags),
    }
    out = directory / f"{tag}.json"
    out.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_solution(directory, tag: str = "pekar") -> PekarSolution:
    directory = Path(directory)
    meta = json.loads((directory / f"{tag}.json").read_text())
    phi0 = snapshot_io.load_field(directory / f"{tag}_phi0.plfb").normalized()
    kernel = meta.get("kernel", "coulomb_d3_isolated")
    if "isolated" in kernel:
        form = FormFactor.coulomb_d3_isolated(phi0.grid)
    else:
        form = FormFactor.coulomb_d3(phi0.grid)
    f = coherent_displacement(phi0, form)
    return PekarSolution(
        phi0=phi0,
        lam=meta["lambda"],
        mu=meta["mu"],
        e_p=meta["E_P"],
        g=meta["g"],
        residual=meta["residual"],
        f=f,
        form=form,
        gap=meta.get("gap"),
        energy_history=(meta["E_P"],),
        flags=tuple(meta.get("flags", ())),
    )
