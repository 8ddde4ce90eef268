"""Coupled electron/phonon effective dynamics (nonlinear Schroedinger + memory).

The evolved system, in the units selected by ``LPConfig.units``:

    i dphi/dt = (-Lap + V_z) phi
    dz/dt     = -i omega z - i lam_c f,      f(k) = v(k) rhohat(k)
    a(t)      = exp( i lam_c int_0^t 2 Re <z, f>_w ds )

with the potential generated by the phonon labels

    V_z(x) = 2 lam_c Re sum_k w_k v(k) z(k) e^{ikx}.

``strong_coupling`` units set (lam_c, omega) = (1/alpha, 1/alpha^2);
``froehlich`` units set (sqrt(alpha), omega0). The stationary polaron data is
z = -(lam_c/omega) f, which in strong-coupling units is z = -alpha f.

Two interchangeable phonon representations are provided: OscillatorRep keeps
the potential field and its velocity and rotates each Fourier mode exactly
around the instantaneous driven fixed point; QuadratureRep keeps the initial
label plus the running memory integral J and phase accumulator F,

    z(t) = e^{-i omega t} (z0 + J_t),
    J_t  = -i lam_c int_0^t e^{i omega s} f_s ds,
    F_t  = lam_c int_0^t Re[ e^{-i omega s} <f_s, J_s>_w ] ds,

with both integrals accumulated exactly for drive held constant over each
substep (never re-integrated from zero). States are immutable snapshots; a
step returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BlowUpError, GridMismatchError
from .spectral_core import FormFactor, Grid, WaveField

__all__ = [
    "LPConfig",
    "PhononDisplacement",
    "OscillatorRep",
    "QuadratureRep",
    "LPState",
    "initial_state",
    "stationary_label",
    "step",
    "evolve",
    "df_energy",
    "potential_from_phonons",
    "phase_update",
    "df_error_integral",
]

_UNITS = ("strong_coupling", "froehlich")


@dataclass(frozen=True)
class LPConfig:
    grid: Grid
    form: FormFactor
    alpha: float
    omega0: float = 1.0
    units: str = "strong_coupling"

    def __post_init__(self):
        if self.units not in _UNITS:
            raise ValueError(f"units must be one of {_UNITS}")
        self.grid.require_same(self.form.grid)
        if self.alpha <= 0 or self.omega0 <= 0:
            raise ValueError("alpha and omega0 must be positive")

    @property
    def coupling(self) -> float:
        """Prefactor of the interaction term (lam_c)."""
        if self.units == "strong_coupling":
            return 1.0 / self.alpha
        return float(np.sqrt(self.alpha))

    @property
    def frequency(self) -> float:
        """Phonon frequency (omega)."""
        if self.units == "strong_coupling":
            return self.alpha**-2
        return self.omega0

    @cached_property
    def _mode_phase(self) -> np.ndarray:
        """e^{ikx} tables are not stored; this caches w_k for inner products."""
        return np.full(self.grid.shape, self.grid.mode_weight)

    def mode_inner(self, f, g) -> complex:
        return complex(np.vdot(f, g) * self.grid.mode_weight)

    def mode_norm_sq(self, f) -> float:
        return float(np.sum(np.abs(f) ** 2) * self.grid.mode_weight)

    def displacement_profile(self, phi_values: np.ndarray) -> np.ndarray:
        """f(k) = v(k) rhohat(k) for the given orbital values."""
        rho_hat = np.fft.fftn(np.abs(phi_values) ** 2) * self.grid.cell_volume
        return self.form.values * rho_hat

    def potential_of_label(self, z: np.ndarray) -> np.ndarray:
        """V(x) = 2 lam_c Re sum_k w_k v(k) z(k) e^{ikx} (real array)."""
        coeffs = self.form.values * z
        summed = np.fft.ifftn(coeffs) * (self.grid.mode_weight * self.grid.size)
        return 2.0 * self.coupling * summed.real


@dataclass(frozen=True)
class PhononDisplacement:
    """Per-mode complex label z(k) = <eta, a(k) eta> on the momentum lattice."""

    grid: Grid
    z: np.ndarray
    units: str = "strong_coupling"

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.complex128)
        if z.shape != self.grid.shape:
            raise GridMismatchError(
                f"label shape {z.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "z", z)
        if self.units not in _UNITS:
            raise ValueError(f"units must be one of {_UNITS}")

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.z) ** 2) * self.grid.mode_weight)


def stationary_label(cfg: LPConfig, f: np.ndarray) -> np.ndarray:
    """Fixed point of the label equation: z = -(lam_c/omega) f."""
    return -(cfg.coupling / cfg.frequency) * np.asarray(f, dtype=complex)


@dataclass(frozen=True)
class OscillatorRep:
    """Phonon state as the potential field and its velocity (spectra cached)."""

    v_hat: np.ndarray
    vdot_hat: np.ndarray

    @classmethod
    def from_fields(cls, cfg: LPConfig, v: np.ndarray, vdot: np.ndarray):
        dv = cfg.grid.cell_volume
        return cls(np.fft.fftn(v) * dv, np.fft.fftn(vdot) * dv)

    @classmethod
    def from_label(cls, cfg: LPConfig, z: np.ndarray):
        scale = (2.0 * np.pi) ** cfg.grid.dim * cfg.coupling * cfg.form.values
        zc = np.conj(_negate_modes(z))
        v_hat = scale * (z + zc)
        vdot_hat = scale * (-1j * cfg.frequency) * (z - zc)
        return cls(v_hat, vdot_hat)

    def label(self, cfg: LPConfig) -> np.ndarray:
        scale = (2.0 * np.pi) ** cfg.grid.dim * cfg.coupling * cfg.form.values
        c_hat = self.v_hat + 1j * self.vdot_hat / cfg.frequency
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(scale > 0, c_hat / np.where(scale > 0, 2.0 * scale, 1.0), 0.0)
        return z

    def potential(self, cfg: LPConfig, t: float) -> np.ndarray:
        return (np.fft.ifftn(self.v_hat) / cfg.grid.cell_volume).real

    def vdot_field(self, cfg: LPConfig) -> np.ndarray:
        return (np.fft.ifftn(self.vdot_hat) / cfg.grid.cell_volume).real

    def stepped(self, cfg: LPConfig, t: float, h: float, f_drive: np.ndarray):
        """Exact mode rotation around the driven fixed point, drive frozen."""
        om = cfg.frequency
        # fixed point: V_p = -(lam^2/om) M rho_hat with M = 2 (2pi)^d v^2 and f = v rho_hat
        v_p = (
            -(cfg.coupling**2 / om)
            * 2.0
            * (2.0 * np.pi) ** cfg.grid.dim
            * cfg.form.values
            * f_drive
        )
        c, s = np.cos(om * h), np.sin(om * h)
        dv = self.v_hat - v_p
        return OscillatorRep(
            v_hat=v_p + dv * c + self.vdot_hat * s / om,
            vdot_hat=-om * dv * s + self.vdot_hat * c,
        )


@dataclass(frozen=True)
class QuadratureRep:
    """Phonon state as (initial label, running memory integral, phase accumulator)."""

    z0: np.ndarray
    j: np.ndarray
    f_acc: float  # the accumulated scalar F(t); internal bookkeeping only

    @classmethod
    def from_label(cls, cfg: LPConfig, z: np.ndarray):
        return cls(np.asarray(z, dtype=complex), np.zeros_like(np.asarray(z, dtype=complex)), 0.0)

    def label(self, cfg: LPConfig, t: float) -> np.ndarray:
        return np.exp(-1j * cfg.frequency * t) * (self.z0 + self.j)

    def potential(self, cfg: LPConfig, t: float) -> np.ndarray:
        return cfg.potential_of_label(self.label(cfg, t))

    def stepped(self, cfg: LPConfig, t: float, h: float, f_drive: np.ndarray):
        om, lam = cfg.frequency, cfg.coupling
        e_t = np.exp(1j * om * t)
        e_th = np.exp(1j * om * (t + h))
        delta_j = -(lam / om) * f_drive * (e_th - e_t)
        # dF/ds = lam * Re[e^{-i om s} <f, J_s>_w]; J(s) analytic for frozen f
        inner_fj = complex(np.vdot(f_drive, self.j) * cfg.grid.mode_weight)
        term1 = lam * (inner_fj * (np.conj(e_t) - np.conj(e_th)) / (1j * om)).real
        fsq = float(np.sum(np.abs(f_drive) ** 2) * cfg.grid.mode_weight)
        term2 = -(lam**2 / om) * fsq * (h - np.sin(om * h) / om)
        return QuadratureRep(self.z0, self.j + delta_j, self.f_acc + term1 + term2)


def _negate_modes(arr: np.ndarray) -> np.ndarray:
    """arr(k) -> arr(-k) as an index permutation on the FFT lattice."""
    idx = [(-np.arange(n)) % n for n in arr.shape]
    return arr[np.ix_(*idx)]


@dataclass(frozen=True)
class LPState:
    cfg: LPConfig
    t: float
    phi: WaveField
    rep: object
    a_phase: complex = 1.0 + 0.0j

    def label(self) -> np.ndarray:
        if isinstance(self.rep, QuadratureRep):
            return self.rep.label(self.cfg, self.t)
        return self.rep.label(self.cfg)

    def potential(self) -> np.ndarray:
        return self.rep.potential(self.cfg, self.t)

    def displacement(self) -> np.ndarray:
        return self.cfg.displacement_profile(self.phi.values)


def initial_state(
    cfg: LPConfig,
    phi0: WaveField,
    z0: np.ndarray | PhononDisplacement | None = None,
    v0: np.ndarray | None = None,
    v0dot: np.ndarray | None = None,
    rep: str = "quadrature",
) -> LPState:
    """Build a state from a coherent label z0 or an (V0, dV0/dt) field pair.

    The pair is converted through V0 + i dV0/dt / omega = 2 lam_c sum_k w_k
    v(k) z(k) e^{ikx}; modes with v(k) = 0 carry no potential and get z = 0.
    """
    cfg.grid.require_same(phi0.grid)
    if z0 is not None and (v0 is not None or v0dot is not None):
        raise ValueError("give either z0 or the (v0, v0dot) pair, not both")
    if z0 is None and v0 is None:
        z0 = np.zeros(cfg.grid.shape, dtype=complex)
    if isinstance(z0, PhononDisplacement):
        if z0.units != cfg.units:
            raise ValueError(
                f"displacement carries units {z0.units!r} but config uses {cfg.units!r}"
            )
        z0 = z0.z
    if z0 is None:
        if v0dot is None:
            v0dot = np.zeros(cfg.grid.shape)
        osc = OscillatorRep.from_fields(cfg, v0, v0dot)
        z0 = osc.label(cfg)
    if rep in ("quadrature", "quad"):
        phonons = QuadratureRep.from_label(cfg, z0)
    elif rep in ("oscillator", "osc"):
        phonons = OscillatorRep.from_label(cfg, z0)
    else:
        raise ValueError(f"unknown representation {rep!r}")
    return LPState(cfg=cfg, t=0.0, phi=phi0.normalized(), rep=phonons, a_phase=1.0 + 0.0j)


def df_energy(state: LPState) -> float:
    """Conserved product-state energy T + omega ||z||^2 + lam_c 2 Re <z, f>."""
    cfg = state.cfg
    z = state.label()
    f = state.displacement()
    kinetic = float(
        np.sum(cfg.grid.k_sq * np.abs(state.phi.spectrum()) ** 2)
        * cfg.grid.mode_weight
        / (2.0 * np.pi) ** cfg.grid.dim
    )
    return (
        kinetic
        + cfg.frequency * cfg.mode_norm_sq(z)
        + cfg.coupling * 2.0 * cfg.mode_inner(z, f).real
    )


def potential_from_phonons(state_or_rep, cfg: LPConfig | None = None, t: float | None = None):
    """Position-space potential generated by the phonon representation."""
    if isinstance(state_or_rep, LPState):
        return WaveField(state_or_rep.cfg.grid, state_or_rep.potential())
    if cfg is None or t is None:
        raise ValueError("bare representations need cfg and t")
    return WaveField(cfg.grid, state_or_rep.potential(cfg, t))


def step(state: LPState, dt: float, gauge: str = "standard") -> LPState:
    """One symmetric step: phonon half, electron kick-drift-kick, phonon half.

    Second order in dt, exactly time-reversible (step(step(s, dt), -dt) == s),
    with the phonon drive frozen per substep so each mode update is the exact
    driven-oscillator solution.
    """
    cfg = state.cfg
    grid = cfg.grid
    phi = state.phi.values
    f_before = cfg.displacement_profile(phi)

    rep_mid = state.rep.stepped(cfg, state.t, dt / 2.0, f_before)
    t_mid = state.t + dt / 2.0
    v_mid = (
        rep_mid.potential(cfg, t_mid)
        if isinstance(rep_mid, QuadratureRep)
        else rep_mid.potential(cfg, t_mid)
    )

    kick = np.exp(-0.5j * dt * v_mid)
    drift = np.exp(-1j * dt * grid.k_sq)
    phi_new = kick * phi
    phi_new = np.fft.ifftn(drift * np.fft.fftn(phi_new))
    phi_new = kick * phi_new

    if not np.all(np.isfinite(phi_new)):
        raise BlowUpError("electron field became non-finite", last_valid_time=state.t)

    f_after = cfg.displacement_profile(phi_new)
    rep_new = rep_mid.stepped(cfg, t_mid, dt / 2.0, f_after)

    z_mid = rep_mid.label(cfg, t_mid) if isinstance(rep_mid, QuadratureRep) else rep_mid.label(cfg)
    f_mid = 0.5 * (f_before + f_after)
    field_expectation = 2.0 * cfg.mode_inner(z_mid, f_mid).real
    a_new = state.a_phase * np.exp(1j * dt * cfg.coupling * field_expectation)

    phi_field = WaveField(grid, phi_new)
    if gauge == "subtract_mean":
        # remove the instantaneous mean-field level from phi, compensate in a;
        # the physical product a * phi x eta is gauge invariant
        spec = phi_field.spectrum()
        t_kin = float(
            np.sum(grid.k_sq * np.abs(spec) ** 2) * grid.mode_weight / (2 * np.pi) ** grid.dim
        )
        lam_mid = t_kin + float(np.sum(np.abs(phi_new) ** 2 * v_mid) * grid.cell_volume)
        theta = dt * lam_mid
        phi_field = WaveField(grid, np.exp(1j * theta) * phi_new)
        a_new = a_new * np.exp(-1j * theta)
    elif gauge != "standard":
        raise ValueError(f"unknown gauge {gauge!r}")

    return LPState(cfg=cfg, t=state.t + dt, phi=phi_field, rep=rep_new, a_phase=complex(a_new))


def phase_update(state: LPState, dt: float) -> complex:
    """Global phase after one step (midpoint rule), |a| = 1 by construction."""
    return step(state, dt).a_phase


def evolve(state: LPState, t_final: float, dt: float, sample_interval: float | None = None):
    """March to t_final, returning sampled states (always includes first/last)."""
    samples = [state]
    n_steps = int(round((t_final - state.t) / dt))
    if abs(state.t + n_steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError("t_final must be an integer number of steps away")
    stride = max(1, int(round((sample_interval or t_final) / dt)))
    current = state
    for i in range(1, n_steps + 1):
        current = step(current, dt)
        if i % stride == 0 or i == n_steps:
            samples.append(current)
    return samples


def df_error_integral(states, defect) -> float:
    """Trapezoid accumulation of int ||P(u)^perp H u|| ds along a trajectory.

    ``defect`` maps an LPState to the tangential defect norm (supplied by the
    truncated-space simulator). Nondecreasing in the trajectory length.
    """
    if len(states) < 2:
        return 0.0
    total = 0.0
    values = [float(defect(s)) for s in states]
    for a, b, va, vb in zip(states, states[1:], values, values[1:]):
        total += 0.5 * (va + vb) * (b.t - a.t)
    return total
