"""Multi-electron polaron ground states and dynamics (rescaled units).

The energy functional for N electrons with repulsion strength U is

    E_N(phi) = <phi, (sum_j -Lap_j + sum_{i<j} U K(x_i - x_j)) phi> - 1/2 D(rho),

with K the same lattice Coulomb kernel as the attraction, rho the one-body
density (integrating to N) and D the Hartree pairing. Under the symmetric
product ansatz phi = u^(xN) this reduces to

    E_N(u) = N [ T(u) - g_eff D(|u|^2) ],    g_eff = (N - (N-1) U) / 2,

so the product path delegates to the single-orbital minimizer; the product
ansatz binds (E_N < N E_1) exactly for U < 1. The full two-body path (N = 2)
minimizes over the pair wavefunction directly and provides the variational
oracle E_full <= E_product on the shared grid.

Identities carried by a solution: f(k) = v(k) rhohat(k), mu = -||f||^2 =
-D(rho)/2, E_N = lambda - mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConvergenceError, SizingError
from .pekar import minimize_pekar
from .spectral_core import FormFactor, Grid, WaveField

__all__ = [
    "PTConfig",
    "PTSolution",
    "PTEnergy",
    "pt_energy",
    "minimize_pt",
    "binding_scan",
    "dfn_evolve",
    "PairState",
]

_STATISTICS = ("boson_product", "full_two_body")
_PAIR_BUDGET_SITES = 4096  # 16^3-equivalent single-particle grid


@dataclass(frozen=True)
class PTConfig:
    n_particles: int
    repulsion: float
    grid: Grid
    statistics: str = "boson_product"
    form: FormFactor | None = None

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if self.repulsion < 0:
            raise ValueError("repulsion U must be nonnegative")
        if self.statistics not in _STATISTICS:
            raise ValueError(f"statistics must be one of {_STATISTICS}")
        if self.statistics == "full_two_body":
            if self.n_particles != 2:
                raise SizingError("the full wavefunction path exists only for N = 2")
            if self.grid.size > _PAIR_BUDGET_SITES:
                raise SizingError(
                    f"pair grid {self.grid.size} sites exceeds the {_PAIR_BUDGET_SITES}-site budget"
                )
        if self.form is None:
            default = (
                FormFactor.coulomb_d3_isolated(self.grid)
                if self.grid.dim == 3
                else FormFactor.toy(self.grid, 0.1)
            )
            object.__setattr__(self, "form", default)
        self.grid.require_same(self.form.grid)

    @property
    def effective_orbital_coupling(self) -> float:
        n, u = self.n_particles, self.repulsion
        return (n - (n - 1) * u) / 2.0


@dataclass(frozen=True)
class PTEnergy:
    total: float
    kinetic: float
    repulsion: float
    hartree: float  # the full D(rho); the functional carries -D/2

    @property
    def attraction(self) -> float:
        return -0.5 * self.hartree


def _pair_axes(grid: Grid):
    return tuple(range(2 * grid.dim))


def _pair_kinetic_multiplier(grid: Grid) -> np.ndarray:
    d = grid.dim
    k1 = grid.k_sq.reshape(grid.shape + (1,) * d)
    k2 = grid.k_sq.reshape((1,) * d + grid.shape)
    return k1 + k2


def _pair_kernel(grid: Grid, form: FormFactor) -> np.ndarray:
    """K(x1 - x2) on the pair lattice (periodic difference indexing)."""
    k_real = (np.fft.ifftn(form.kernel_multiplier) / grid.cell_volume).real
    n = grid.points_per_axis
    idx = np.arange(n)
    diff = [
        (np.subtract.outer(idx, idx)) % n for _ in range(grid.dim)
    ]
    # build index arrays of shape grid.shape * 2
    d = grid.dim
    index = []
    for axis in range(d):
        a = diff[axis].reshape(
            tuple(n if i == axis else 1 for i in range(d))
            + tuple(n if i == axis else 1 for i in range(d))
        )
        index.append(np.broadcast_to(a, grid.shape + grid.shape))
    return k_real[tuple(index)]


def _one_body_density(grid: Grid, pair: np.ndarray) -> np.ndarray:
    """rho(x) = 2 sum_y |phi(x, y)|^2 dv for an exchange-symmetric pair state."""
    d = grid.dim
    return 2.0 * np.sum(np.abs(pair) ** 2, axis=tuple(range(d, 2 * d))) * grid.cell_volume


def _pair_norm(grid: Grid, pair: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(pair) ** 2) * grid.cell_volume**2))


def _mean_field(grid: Grid, form: FormFactor, rho: np.ndarray) -> np.ndarray:
    vhat = -form.kernel_multiplier * (np.fft.fftn(rho) * grid.cell_volume)
    return (np.fft.ifftn(vhat) / grid.cell_volume).real


def pt_energy(candidate, cfg: PTConfig) -> PTEnergy:
    """Energy of a normalized candidate: product orbital or N=2 pair array.

    The product branch evaluates the N-body expectation term by term (kinetic,
    pair repulsion, Hartree attraction); the reduced closed form
    N (T - g_eff D_u) is checked against it in the test suite.
    """
    grid, form = cfg.grid, cfg.form
    n, u = cfg.n_particles, cfg.repulsion
    if isinstance(candidate, WaveField):
        orbital = candidate.normalized()
        spec = orbital.spectrum()
        t_orb = float(
            np.sum(grid.k_sq * np.abs(spec) ** 2) * grid.mode_weight / (2 * np.pi) ** grid.dim
        )
        rho_orb = orbital.density()
        v_orb = _mean_field(grid, form, rho_orb)
        d_orb = float(-np.sum(rho_orb * v_orb) * grid.cell_volume)
        kinetic = n * t_orb
        repulsion = 0.5 * n * (n - 1) * u * d_orb
        hartree = n**2 * d_orb  # D(rho) with rho = N |u|^2
        return PTEnergy(
            total=kinetic + repulsion - 0.5 * hartree,
            kinetic=kinetic,
            repulsion=repulsion,
            hartree=hartree,
        )
    pair = np.asarray(candidate, dtype=complex)
    if pair.shape != grid.shape + grid.shape:
        raise SizingError(f"pair state must have shape {grid.shape + grid.shape}")
    nrm = _pair_norm(grid, pair)
    pair = pair / nrm
    dv2 = grid.cell_volume**2
    spec = np.fft.fftn(pair)
    ksq2 = _pair_kinetic_multiplier(grid)
    kinetic = float(np.sum(ksq2 * np.abs(spec) ** 2) / np.sum(np.abs(spec) ** 2))
    kernel = _pair_kernel(grid, cfg.form)
    repulsion = float(u * np.sum(kernel * np.abs(pair) ** 2) * dv2)
    rho = _one_body_density(grid, pair)
    v = _mean_field(grid, form, rho)
    hartree = float(-np.sum(rho * v) * grid.cell_volume)
    return PTEnergy(
        total=kinetic + repulsion - 0.5 * hartree,
        kinetic=kinetic,
        repulsion=repulsion,
        hartree=hartree,
    )


@dataclass(frozen=True)
class PTSolution:
    cfg: PTConfig
    orbital: WaveField | None
    pair: np.ndarray | None
    rho: np.ndarray
    e_n: float
    lam: float
    mu: float
    f: np.ndarray
    residual: float
    binding: dict

    @property
    def statistics(self) -> str:
        return self.cfg.statistics


def _binding_diagnostic(cfg: PTConfig, e_n: float, rho: np.ndarray, tol: float) -> dict:
    grid = cfg.grid
    single = minimize_pekar(grid, g=0.5, tol=tol, form=cfg.form, compute_gap=False)
    n_single = cfg.n_particles * single.e_p
    mesh = np.meshgrid(*([grid.x_axis_centered] * grid.dim), indexing="ij")
    r2 = sum(c**2 for c in mesh)
    total = float(np.sum(rho) * grid.cell_volume)
    rms = float(np.sqrt(np.sum(r2 * rho) * grid.cell_volume / total))
    delocalized = rms > grid.box_length / 4.0
    bound = (e_n < n_single - 1e-12) and not delocalized
    return {
        "bound": bound,
        "e_n": e_n,
        "n_times_single": n_single,
        "rms_radius": rms,
        "message": None
        if bound
        else f"no binding at this U (product ansatz): E_N = {e_n:.6g} vs N E_1 = {n_single:.6g}",
    }


def _minimize_product(cfg: PTConfig, tol: float, rng) -> PTSolution:
    grid, form = cfg.grid, cfg.form
    n = cfg.n_particles
    g_eff = cfg.effective_orbital_coupling
    sol = minimize_pekar(grid, g=g_eff, tol=tol, form=form, rng=rng, compute_gap=False)
    orbital = sol.phi0
    rho = n * orbital.density()
    en = pt_energy(orbital, cfg)
    f = form.values * (np.fft.fftn(rho) * grid.cell_volume)
    fsq = float(np.sum(np.abs(f) ** 2) * grid.mode_weight)
    mu = -fsq
    lam = en.total + mu
    # residual of the N-body stationarity through the orbital equation
    residual = sol.residual * n
    return PTSolution(
        cfg=cfg,
        orbital=orbital,
        pair=None,
        rho=rho,
        e_n=en.total,
        lam=lam,
        mu=mu,
        f=f,
        residual=residual,
        binding=_binding_diagnostic(cfg, en.total, rho, tol),
    )


def _minimize_pair(cfg: PTConfig, tol: float, max_iter: int, rng) -> PTSolution:
    """Imaginary-time (preconditioned, monotone BB) minimization over the pair state."""
    grid, form = cfg.grid, cfg.form
    u_rep = cfg.repulsion
    d = grid.dim
    dv = grid.cell_volume
    ksq2 = _pair_kinetic_multiplier(grid)
    kernel = u_rep * _pair_kernel(grid, form)
    axes = _pair_axes(grid)

    mesh = np.meshgrid(*([grid.x_axis_centered] * d), indexing="ij")
    r2 = sum(c**2 for c in mesh)
    sigma = max(1.5, 3 * grid.dx)
    seed = np.exp(-r2 / (4 * sigma**2))
    pair = np.multiply.outer(seed, seed).astype(complex)
    pair /= _pair_norm(grid, pair)

    def evaluate(p):
        rho = _one_body_density(grid, p)
        v = _mean_field(grid, form, rho)
        v_sum = v.reshape(grid.shape + (1,) * d) + v.reshape((1,) * d + grid.shape)
        spec = np.fft.fftn(p)
        kin = float(np.sum(ksq2 * np.abs(spec) ** 2)) * dv**2 / grid.size**2
        rep = float(np.sum(kernel * np.abs(p) ** 2) * dv**2)
        dval = float(-np.sum(rho * v) * dv)
        energy = kin + rep - 0.5 * dval
        hpsi = np.fft.ifftn(ksq2 * spec) + (kernel + v_sum) * p
        return energy, hpsi

    energy, hpsi = evaluate(pair)
    tau = 0.4
    prev_s = prev_y = None
    residual = np.inf
    shift0 = 0.5
    for _ in range(max_iter):
        lam2 = float(np.real(np.sum(np.conj(pair) * hpsi)) * dv**2)
        grad = hpsi - lam2 * pair
        residual = float(np.sqrt(np.sum(np.abs(grad) ** 2) * dv**2))
        if residual < tol:
            break
        shift = max(abs(lam2), shift0)
        direction = np.fft.ifftn(np.fft.fftn(grad) / (ksq2 + shift))
        if prev_s is not None:
            sy = float(np.real(np.sum(np.conj(prev_s) * prev_y)) * dv**2)
            ss = float(np.real(np.sum(np.conj(prev_s) * prev_s)) * dv**2)
            if sy > 1e-300:
                tau = min(max(ss / sy, 1e-4), 50.0)
        accepted = False
        for _bt in range(40):
            cand = np.abs(pair - tau * direction)
            cand = 0.5 * (cand + _exchange(cand, d))  # enforce symmetry
            cand /= _pair_norm(grid, cand)
            e_new, h_new = evaluate(cand)
            if e_new <= energy + 1e-15 * max(1.0, abs(energy)):
                prev_s = cand - pair
                pair = cand.astype(complex)
                lam_new = float(np.real(np.sum(np.conj(pair) * h_new)) * dv**2)
                prev_y = np.fft.ifftn(np.fft.fftn((h_new - lam_new * pair) - grad) / (ksq2 + shift))
                energy, hpsi = e_new, h_new
                accepted = True
                break
            tau *= 0.4
        if not accepted:
            raise ConvergenceError("pair line search collapsed", residual=residual)
    else:
        raise ConvergenceError(
            f"pair minimization did not reach {tol} in {max_iter} iterations",
            residual=residual,
        )

    rho = _one_body_density(grid, pair)
    f = form.values * (np.fft.fftn(rho) * dv)
    fsq = float(np.sum(np.abs(f) ** 2) * grid.mode_weight)
    mu = -fsq
    lam2 = energy + mu
    return PTSolution(
        cfg=cfg,
        orbital=None,
        pair=pair,
        rho=rho,
        e_n=energy,
        lam=lam2,
        mu=mu,
        f=f,
        residual=residual,
        binding=_binding_diagnostic(cfg, energy, rho, tol),
    )


def _exchange(pair: np.ndarray, d: int) -> np.ndarray:
    return np.transpose(pair, axes=tuple(range(d, 2 * d)) + tuple(range(d)))


def minimize_pt(cfg: PTConfig, tol: float = 1e-7, max_iter: int = 2000, rng=None) -> PTSolution:
    """Minimize the N-electron functional under the configured statistics."""
    if rng is None:
        rng = np.random.default_rng(0)
    if cfg.statistics == "boson_product":
        return _minimize_product(cfg, tol, rng)
    return _minimize_pair(cfg, tol, max_iter, rng)


def binding_scan(grid: Grid, u_values, n_particles: int = 2, tol: float = 1e-7, form=None):
    """E_N over a repulsion grid plus the binding diagnostic per point."""
    rows = []
    for u in u_values:
        cfg = PTConfig(n_particles, float(u), grid, form=form)
        sol = minimize_pt(cfg, tol=tol)
        rows.append(
            {
                "U": float(u),
                "E_N": sol.e_n,
                "N_E_single": sol.binding["n_times_single"],
                "bound": sol.binding["bound"],
                "rms_radius": sol.binding["rms_radius"],
            }
        )
    return rows


@dataclass(frozen=True)
class PairState:
    """Two-electron state coupled to the phonon label (strong-coupling units)."""

    cfg: PTConfig
    alpha: float
    t: float
    pair: np.ndarray
    z: np.ndarray
    a_phase: complex = 1.0 + 0.0j

    @property
    def coupling(self) -> float:
        return 1.0 / self.alpha

    @property
    def frequency(self) -> float:
        return self.alpha**-2


def _pair_step(state: PairState, dt: float) -> PairState:
    """Strang step for the pair NLS coupled to the exact phonon-mode rotation."""
    cfg = state.cfg
    grid = cfg.grid
    d = grid.dim
    dv = grid.cell_volume
    lam_c, om = state.coupling, state.frequency
    form = cfg.form
    ksq2 = _pair_kinetic_multiplier(grid)
    kernel = cfg.repulsion * _pair_kernel(grid, form)

    def displacement(pair):
        rho = _one_body_density(grid, pair)
        return form.values * (np.fft.fftn(rho) * dv)

    def z_step(z, f, h):
        z_p = -(lam_c / om) * f
        return z_p + np.exp(-1j * om * h) * (z - z_p)

    f0 = displacement(state.pair)
    z_mid = z_step(state.z, f0, dt / 2)
    v = 2.0 * lam_c * (np.fft.ifftn(form.values * z_mid) * grid.mode_weight * grid.size).real
    v_sum = v.reshape(grid.shape + (1,) * d) + v.reshape((1,) * d + grid.shape)
    kick = np.exp(-0.5j * dt * (v_sum + kernel))
    new_pair = kick * state.pair
    new_pair = np.fft.ifftn(np.exp(-1j * dt * ksq2) * np.fft.fftn(new_pair))
    new_pair = kick * new_pair
    if not np.all(np.isfinite(new_pair)):
        raise BlowUpError("pair state became non-finite", last_valid_time=state.t)
    f1 = displacement(new_pair)
    z_new = z_step(z_mid, f1, dt / 2)
    f_mid = 0.5 * (f0 + f1)
    expectation = 2.0 * float(
        np.real(np.vdot(z_mid, f_mid)) * grid.mode_weight
    )
    a_new = state.a_phase * np.exp(1j * dt * lam_c * expectation)
    return PairState(
        cfg=cfg, alpha=state.alpha, t=state.t + dt, pair=new_pair, z=z_new, a_phase=complex(a_new)
    )


def dfn_evolve(
    cfg: PTConfig,
    pair0: np.ndarray,
    alpha: float,
    t_final: float,
    dt: float,
    z0: np.ndarray | None = None,
    sample_interval: float | None = None,
):
    """Evolve the two-electron product-state dynamics; returns sampled PairStates.

    Defaults to the stationary phonon data z = -alpha f(pair0) when z0 is not
    given, so a converged minimizer is a fixed point up to integrator error.
    """
    if cfg.statistics != "full_two_body":
        raise SizingError("dfn_evolve runs on the full_two_body configuration")
    grid = cfg.grid
    pair0 = np.asarray(pair0, dtype=complex)
    pair0 = pair0 / _pair_norm(grid, pair0)
    if z0 is None:
        rho = _one_body_density(grid, pair0)
        f = cfg.form.values * (np.fft.fftn(rho) * grid.cell_volume)
        z0 = -alpha * f
    state = PairState(cfg=cfg, alpha=alpha, t=0.0, pair=pair0, z=np.asarray(z0, dtype=complex))
    n_steps = int(round(t_final / dt))
    stride = max(1, int(round((sample_interval or t_final) / dt)))
    samples = [state]
    for i in range(1, n_steps + 1):
        state = _pair_step(state, dt)
        if i % stride == 0 or i == n_steps:
            samples.append(state)
    return samples
