import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from polaron_lab.errors import SizingError
from polaron_lab import fock_sim as fs
from polaron_lab import lp_dynamics as lp
from polaron_lab.spectral_core import FormFactor, WaveField

from oracles import displaced_oscillator_ground_energy


IDENTITIES = fs.FockConfig(
    n_sites=16, box_length=16.0, mode_numbers=(1, -1, 2, -2, 3, -3), v0=0.05, n_max=3, alpha=2.0
)
SWEEP = fs.FockConfig(
    n_sites=8, box_length=2.0, mode_numbers=(1, -1, 2, -2), v0=3e-3, n_max=6, alpha=1.0
)


@pytest.fixture(scope="module")
def ops_id():
    return fs.assemble(IDENTITIES)


@pytest.fixture(scope="module")
def pekar_id(ops_id):
    return fs.discrete_pekar(ops_id)


class TestAssembly:
    def test_nmax_zero_reduces_to_electron_problem(self):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.2, n_max=0, alpha=1.0)
        ops = fs.assemble(cfg)
        assert ops.basis.n_occ == 1
        e0, _ = fs.ground_state(ops)
        assert e0 == pytest.approx(0.0, abs=1e-12)  # free ring ground state

    def test_displaced_oscillator_closed_form(self):
        cfg = fs.FockConfig(2, 2.0, (0,), v0=0.05, n_max=40, alpha=1.7)
        ops = fs.assemble(cfg)
        e0, _ = fs.ground_state(ops)
        w = ops.basis.weight
        expected = displaced_oscillator_ground_energy(
            cfg.alpha**-2, cfg.alpha**-1 * cfg.v0 * np.sqrt(w)
        )
        assert e0 == pytest.approx(expected, abs=1e-12)

    def test_hermitian(self, ops_id):
        assert ops_id.hermiticity_defect() < 1e-13

    def test_adjoint_pairing(self, ops_id, rng):
        a = ops_id.annihilate_g
        x = rng.standard_normal(ops_id.basis.dim_total) + 0j
        y = rng.standard_normal(ops_id.basis.dim_total) + 0j
        assert np.vdot(y, a @ x) == pytest.approx(np.conj(np.vdot(x, a.conj().T @ y)))

    def test_budget_guard(self):
        with pytest.raises(SizingError):
            fs.FockBasis(
                fs.FockConfig(16, 16.0, (1, -1, 2, -2, 3, -3), 0.05, n_max=3, alpha=1.0, budget=10)
            )

    def test_occupation_order_is_lexicographic(self, ops_id):
        occs = ops_id.basis.occupations
        assert occs == sorted(occs)

    def test_mode_set_must_close_under_negation(self):
        with pytest.raises(ValueError):
            fs.FockConfig(8, 4.0, (1, 2, -2), v0=0.1, n_max=2, alpha=1.0)


class TestWeyl:
    def test_identity_at_zero(self, ops_id):
        vac = ops_id.basis.vacuum_occ()
        out, leak = fs.weyl_apply(ops_id.basis, np.zeros(6, dtype=complex), vac)
        assert np.allclose(out, vac)
        assert leak == 0.0

    def test_unitary_on_random_states(self, ops_id, rng):
        basis = ops_id.basis
        f = fs._small_test_displacement(basis, rng, scale=0.05)
        for _ in range(5):
            x = rng.standard_normal(basis.n_occ) + 1j * rng.standard_normal(basis.n_occ)
            out, _ = fs.weyl_apply(basis, f, x)
            assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_coherent_label_matches_minus_alpha_f(self):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.05, n_max=12, alpha=2.0)
        basis = fs.FockBasis(cfg)
        f = np.array([0.02 + 0.01j, 0.02 - 0.01j])
        eta, leak = fs.coherent_state(basis, -cfg.alpha * f)
        assert leak < 1e-8
        for j, aj in enumerate(basis.lowering):
            label = np.vdot(eta, aj @ eta) / np.sqrt(basis.weight)
            assert label == pytest.approx(-cfg.alpha * f[j], rel=1e-6)

    def test_truncation_guard(self, ops_id):
        big = np.full(6, 10.0, dtype=complex)
        with pytest.raises(SizingError):
            fs.weyl_apply(ops_id.basis, big, ops_id.basis.vacuum_occ())


class TestGroundState:
    def test_variational_ordering(self, ops_id, pekar_id):
        e_f, psi = fs.ground_state(ops_id)
        rq = np.real(np.vdot(psi.coefficients, ops_id.hamiltonian @ psi.coefficients))
        assert rq <= pekar_id.energy

    def test_residual_contract(self, ops_id):
        e0, psi = fs.ground_state(ops_id)
        r = np.linalg.norm(ops_id.hamiltonian @ psi.coefficients - e0 * psi.coefficients)
        assert r < 1e-8


class TestDiscretePekar:
    def test_self_consistency_residuals(self, pekar_id):
        assert pekar_id.electron_residual < 1e-8
        assert pekar_id.phonon_residual < 1e-8

    def test_zero_coupling_free_mode(self):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.0, n_max=2, alpha=1.0)
        pek = fs.discrete_pekar(fs.assemble(cfg))
        assert np.allclose(np.abs(pek.phi), 1 / np.sqrt(8))
        assert np.all(pek.f == 0)
        assert pek.energy == pytest.approx(0.0, abs=1e-12)

    def test_energy_is_product_expectation(self, ops_id, pekar_id):
        u0 = np.kron(pekar_id.phi, pekar_id.eta)
        direct = np.real(np.vdot(u0, ops_id.hamiltonian @ u0))
        assert direct == pytest.approx(pekar_id.energy, abs=1e-10)

    def test_against_quasi_newton_oracle(self):
        # direct minimization over (phi, z) with scipy, strong enough coupling
        # that the minimizer localizes and the data is nontrivial
        from scipy.optimize import minimize

        cfg = fs.FockConfig(8, 4.0, (1, -1, 2, -2), v0=0.35, n_max=3, alpha=2.0)
        ops = fs.assemble(cfg)
        basis = ops.basis
        pek = fs.discrete_pekar(ops)
        n, m = 8, 4

        def unpack(x):
            phi = x[:n] + 1j * x[n : 2 * n]
            z = x[2 * n : 2 * n + m] + 1j * x[2 * n + m :]
            return phi / np.linalg.norm(phi), z

        def energy(x):
            phi, z = unpack(x)
            f = basis.v * basis.density_transform(phi)
            kin = np.real(np.vdot(phi, basis.kinetic_electron @ phi))
            return (
                kin
                + cfg.alpha**-2 * basis.weight * np.sum(np.abs(z) ** 2)
                + cfg.alpha**-1 * 2 * np.real(basis.weight * np.vdot(z, f))
            )

        rng = np.random.default_rng(0)
        best = np.inf
        for _ in range(3):
            x0 = rng.standard_normal(2 * n + 2 * m)
            res = minimize(energy, x0, method="L-BFGS-B", options={"maxiter": 2000})
            best = min(best, res.fun)
        assert pek.energy == pytest.approx(best, abs=1e-7)
        assert pek.energy < 0  # localized, genuinely bound state at this coupling


class TestPropagation:
    def test_t_zero_identity(self, ops_id, rng):
        x = rng.standard_normal(ops_id.basis.dim_total) + 0j
        out = fs.propagate(ops_id, x, 0.0)
        assert np.allclose(out, x)

    def test_eigenvector_phase(self, ops_id):
        e0, psi = fs.ground_state(ops_id)
        out = fs.propagate(ops_id, psi.coefficients, 0.7)
        assert np.max(np.abs(out - np.exp(-1j * e0 * 0.7) * psi.coefficients)) < 1e-10

    def test_krylov_matches_dense(self, rng):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.3, n_max=4, alpha=1.5)
        ops = fs.assemble(cfg)
        x = rng.standard_normal(ops.basis.dim_total) + 1j * rng.standard_normal(
            ops.basis.dim_total
        )
        x /= np.linalg.norm(x)
        dense = fs.Propagator(ops.hamiltonian, ops.basis.dim_total)
        krylov = fs.Propagator(
            ops.hamiltonian, ops.basis.dim_total, tol=1e-12, force_krylov=True
        )
        for t in (0.5, 3.0):
            assert np.linalg.norm(dense.apply(x, t) - krylov.apply(x, t)) < 1e-9

    def test_norm_and_energy_preserved(self, ops_id, rng):
        x = rng.standard_normal(ops_id.basis.dim_total) + 0j
        x /= np.linalg.norm(x)
        out = fs.propagate(ops_id, x, 2.0)
        assert abs(np.linalg.norm(out) - 1) < 1e-10
        e0 = np.real(np.vdot(x, ops_id.hamiltonian @ x))
        e1 = np.real(np.vdot(out, ops_id.hamiltonian @ out))
        assert abs(e1 - e0) < 1e-9


class TestProjectors:
    def test_identities_on_random_products(self, ops_id, pekar_id, rng):
        rep = fs.projector_identities(ops_id, pekar_id, rng)
        assert rep["idempotency"] < 1e-12
        assert rep["three_term_vs_alternative"] < 1e-12
        assert rep["complement_factorization"] < 1e-12
        assert rep["delta_h_identity"] < 1e-12

    def test_zero_coupling_invariant_subspace(self, rng):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.0, n_max=2, alpha=1.0)
        ops = fs.assemble(cfg)
        basis = ops.basis
        phi = np.ones(8, dtype=complex) / np.sqrt(8)
        vac = basis.vacuum_occ()
        u = np.kron(phi, vac)
        hu = ops.hamiltonian @ u
        pu = fs.tangent_projector_apply(basis, phi, vac, hu)
        assert np.linalg.norm(hu - pu) < 1e-13

    def test_defect_halves_when_alpha_doubles(self, pekar_id):
        defects = []
        for alpha in (2.0, 4.0):
            ops = fs.assemble(IDENTITIES.with_alpha(alpha))
            pek = fs.discrete_pekar(ops)
            defects.append(
                fs.perp_defect(ops.basis, pek.phi, pek.eta, ops.hamiltonian)
            )
        assert defects[1] / defects[0] == pytest.approx(0.5, abs=0.05)


class TestQuadratureReconstruction:
    def test_eta_reconstruction_matches_direct_integration(self):
        """(J, F) reconstruction against an independent phonon integrator.

        Evolve the coupled system, record f_s, then directly integrate
        i d(eta)/dt = (omega N + lam phi(f_s)) eta with midpoint steps and
        compare with e^{-iF} e^{-i omega N t} W(J_t) eta0.
        """
        cfg_f = fs.FockConfig(8, 2.0, (1, -1), v0=0.15, n_max=10, alpha=1.5)
        basis = fs.FockBasis(cfg_f)
        grid = basis.grid
        form_vals = np.zeros(grid.shape)
        for m in cfg_f.mode_numbers:
            form_vals[m % 8] = cfg_f.v0
        form = FormFactor(grid, form_vals, cutoff=np.inf, variant="fock-modes")
        cfg = lp.LPConfig(grid, form, alpha=cfg_f.alpha)
        x = grid.x_axis_centered
        phi0 = WaveField(grid, np.exp(-(x**2) / (2 * 0.2**2)) + 0j).normalized()
        g = np.array([0.1 + 0.05j, 0.1 - 0.05j])
        z0_lat = np.zeros(grid.shape, dtype=complex)
        for m, gj in zip(cfg_f.mode_numbers, g):
            z0_lat[m % 8] = -cfg_f.alpha * gj
        state = lp.initial_state(cfg, phi0, z0=z0_lat)
        eta0, _ = fs.coherent_state(basis, -cfg_f.alpha * g)

        dt = 1e-3
        eta_direct = eta0.copy()
        omega, lam = cfg.frequency, cfg.coupling
        n_op = basis.number_occ
        t = 0.0
        current = state
        for _ in range(500):
            mid = lp.step(current, dt / 2)
            f_lat = mid.cfg.displacement_profile(mid.phi.values)
            f_modes = np.array([f_lat[m % 8] for m in cfg_f.mode_numbers])
            h_ph = (omega * n_op + lam * basis.field_occ(f_modes)).tocsc()
            eta_direct = expm_multiply(-1j * dt * h_ph, eta_direct)
            current = lp.step(mid, dt / 2)
            t += dt

        j_lat = current.rep.j
        j_modes = np.array([j_lat[m % 8] for m in cfg_f.mode_numbers])
        eta_rec, _ = fs.weyl_apply(basis, j_modes, eta0, guard=False)
        eta_rec = np.exp(-1j * omega * basis.occ_totals * t) * eta_rec
        eta_rec = np.exp(-1j * current.rep.f_acc) * eta_rec
        assert np.linalg.norm(eta_rec - eta_direct) < 1e-5


class TestSweeps:
    def test_stationary_trend(self):
        rep = fs.error_sweep_stationary(SWEEP, [1.0, 2.0, 4.0, 8.0], 5.0, n_samples=51)
        sups = rep["sup_errors"]
        assert all(a > b for a, b in zip(sups, sups[1:]))
        assert rep["slope"] <= -1.8
        assert rep["r_squared"] > 0.99
        assert rep["rows"][0][2] == pytest.approx(0.0, abs=1e-12)  # t = 0

    def test_error_symmetric_in_time_reversal(self):
        cfg = SWEEP.with_alpha(2.0)
        ops = fs.assemble(cfg)
        pek = fs.discrete_pekar(ops)
        u0 = np.kron(pek.phi, pek.eta)
        u0 /= np.linalg.norm(u0)
        prop = fs.Propagator(ops.hamiltonian, ops.basis.dim_total)
        for t in (0.7, 2.3):
            errs = []
            for sign in (1, -1):
                psi = prop.apply(u0, sign * t)
                ov = np.vdot(u0, psi) * np.exp(1j * pek.energy * sign * t)
                errs.append(float(2 * (1 - ov.real)))
            assert abs(errs[0] - errs[1]) < 1e-10

    def test_coherent_trend_and_separation(self, rng):
        basis = fs.FockBasis(SWEEP)
        x = basis.x - 1.0
        phi0 = np.exp(-(x**2) / (2 * 0.25**2)).astype(complex)
        phi0 /= np.linalg.norm(phi0)
        g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        for i, j in enumerate(basis.conjugate_mode_index):
            if j > i:
                g[j] = np.conj(g[i])
        g *= np.sqrt(4e-3 / basis.mode_norm_sq(g))
        coh = fs.error_sweep_coherent(SWEEP, [1.0, 2.0, 4.0, 8.0], 5.0, phi0, g, dt=2e-3)
        stat = fs.error_sweep_stationary(SWEEP, [1.0, 2.0, 4.0, 8.0], 5.0, n_samples=51)
        assert coh["slope"] <= -0.8
        worse = coh["slope"] > stat["slope"] or coh["intercept"] > stat["intercept"]
        assert worse

    def test_coherent_reduces_to_stationary_for_pekar_data(self):
        # z0 = -alpha f with phi0 the self-consistent minimizer is the fixed
        # point; the coherent machinery must reproduce the stationary errors
        alphas = [2.0, 4.0]
        ops = fs.assemble(SWEEP.with_alpha(alphas[0]))
        pek = fs.discrete_pekar(ops)
        coh = fs.error_sweep_coherent(
            SWEEP, alphas, 2.0, pek.phi, pek.f, dt=1e-3, n_samples=11
        )
        stat = fs.error_sweep_stationary(SWEEP, alphas, 2.0, n_samples=11)
        for a, b in zip(coh["sup_errors"], stat["sup_errors"]):
            assert a == pytest.approx(b, rel=2e-2, abs=1e-12)


class TestDefectIntegral:
    def test_stationary_integrand_constant_and_alpha_scaling(self):
        ring = fs.FockBasis(SWEEP)
        form_vals = np.zeros(ring.grid.shape)
        for m in SWEEP.mode_numbers:
            form_vals[m % SWEEP.n_sites] = SWEEP.v0
        form = FormFactor(ring.grid, form_vals, cutoff=np.inf, variant="fock-modes")
        integrals = []
        for alpha in (2.0, 4.0):
            ops = fs.assemble(SWEEP.with_alpha(alpha))
            pek = fs.discrete_pekar(ops)
            cfg = lp.LPConfig(ring.grid, form, alpha=alpha)
            phi = WaveField(ring.grid, pek.phi / np.sqrt(ring.grid.dx))
            z0 = np.zeros(ring.grid.shape, dtype=complex)
            for m, fj in zip(SWEEP.mode_numbers, pek.f):
                z0[m % SWEEP.n_sites] = -alpha * fj
            state = lp.initial_state(cfg, phi, z0=z0)
            states = lp.evolve(state, 0.5, 1e-2, sample_interval=0.1)
            defect = fs.make_defect_evaluator(ops)
            values = [defect(s) for s in states]
            assert max(values) - min(values) < 1e-6 * max(values)  # constant integrand
            integrals.append(lp.df_error_integral(states, defect))
        assert integrals[1] / integrals[0] == pytest.approx(0.5, abs=0.05)


class TestInequalities:
    def test_suite_report(self, rng):
        rep = fs.inequality_suite(IDENTITIES, alphas=(1.0, 2.0, 4.0), rng=rng, n_random=1000)
        assert rep["annihilator_bounds_hold"]
        for name, resid in rep["conjugation_residuals"].items():
            assert resid < 1e-8, name
        for key, val in rep["two_sided_bound_min_eigs"].items():
            assert val >= -1e-10, key
        assert rep["resolvent_spread_nonincreasing"]

    def test_zero_factor_degenerate_case(self, rng):
        cfg = fs.FockConfig(8, 4.0, (1, -1), v0=0.0, n_max=2, alpha=1.0)
        ops = fs.assemble(cfg)
        x = rng.standard_normal(ops.basis.dim_total) + 0j
        assert np.linalg.norm(ops.annihilate_g @ x) == 0.0

    def test_rotated_frame_evolution_identity(self, rng):
        # || (e^{-iHt} - e^{-iH_eff t}) W* chi || == || (e^{-iH_rot t} - e^{-iH_tilde t}) chi ||
        cfg = IDENTITIES
        ops = fs.assemble(cfg)
        basis = ops.basis
        f = fs._small_test_displacement(basis, rng)
        a_occ = basis.annihilator_occ(cfg.alpha * f)
        gen = sp.kron(ops.eye_e, (a_occ.conj().T - a_occ), format="csc")
        chi = fs._band_limited_vector(basis, rng, basis.config.n_max - 2)
        u0 = expm_multiply(-gen, chi)  # W(alpha f)^* chi
        t = 1.3
        lhs_a = fs.Propagator(ops.hamiltonian, basis.dim_total).apply(u0, t)
        lhs_b = fs.Propagator(ops.h_effective(f), basis.dim_total).apply(u0, t)
        rhs_a = fs.Propagator(ops.h_rotated(f), basis.dim_total).apply(chi, t)
        rhs_b = fs.Propagator(ops.h_tilde(f), basis.dim_total).apply(chi, t)
        assert np.linalg.norm(lhs_a - lhs_b) == pytest.approx(
            np.linalg.norm(rhs_a - rhs_b), abs=1e-8
        )
