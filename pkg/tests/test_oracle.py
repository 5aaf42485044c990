import numpy as np
import pytest

from vibrompo import ModeSpec, NetworkSpec, load_bundled_fit, thermal_occupancy
from vibrompo.oracle import (
    DenseState,
    DimensionCeilingError,
    analytic_monomer_coherence,
    dense_evolve,
    initial_dense_state,
)


def test_free_thermal_state_is_stationary():
    m = ModeSpec(800.0, 0.0, 0.0, 300.0, 4)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [m, m])
    init = initial_dense_state(spec, 0)
    traj = dense_evolve(spec, init.rho, 100.0, 25.0, rtol=1e-11, atol=1e-13)
    for state in traj.states:
        assert np.abs(state - init.rho).max() < 1e-10


def test_single_mode_occupation_relaxes_at_twice_gamma():
    gamma = 5e-3
    m = ModeSpec(1000.0, 0.0, gamma, 300.0, 10)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [m])
    init = initial_dense_state(spec, 0, mode_temperatures=[700.0])
    nbar = thermal_occupancy(1000.0, 300.0)
    n0 = float(
        np.arange(10)
        @ np.diag(init.rho.reshape(1, 10, 1, 10)[0, :, 0, :]).real
    )
    traj = dense_evolve(spec, init.rho, 300.0, 30.0, rtol=1e-11, atol=1e-13)
    for t, occ in zip(traj.times, traj.mode_occupations[:, 0]):
        expected = nbar + (n0 - nbar) * np.exp(-2 * gamma * t)
        assert abs(occ - expected) < 1e-7


def test_dimer_trace_and_positivity_preserved():
    m = ModeSpec(1100.0, 0.2, 2e-3, 300.0, 4)
    spec = NetworkSpec.create([0.0, 0.0], [[0.0, 400.0], [400.0, 0.0]], [m])
    traj = dense_evolve(spec, 0, 1000.0, 200.0, rtol=1e-10, atol=1e-12)
    for state in traj.states:
        assert abs(np.trace(state).real - 1.0) < 1e-10
        assert np.linalg.eigvalsh(0.5 * (state + state.conj().T)).min() > -1e-9


def test_dense_state_validation():
    m = ModeSpec(1000.0, 0.1, 1e-3, 300.0, 3)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [m])
    good = initial_dense_state(spec, 0)
    good.validate()
    bad = DenseState(spec, good.rho * 0.5)
    with pytest.raises(ValueError):
        bad.validate()
    non_herm = DenseState(spec, good.rho + 1e-3 * 1j * np.eye(3))
    with pytest.raises(ValueError):
        non_herm.validate()


def test_dimension_ceiling_enforced():
    m = ModeSpec(1000.0, 0.1, 1e-3, 300.0, 9)
    spec = NetworkSpec.create(
        [0.0, 0.0], np.zeros((2, 2)), [m, m, m, m]  # 2 * 9^8 >> ceiling
    )
    with pytest.raises(DimensionCeilingError):
        dense_evolve(spec, 0, 1.0, 1.0)


def test_monomer_without_environment_is_pure_phase():
    t = np.linspace(0.0, 100.0, 11)
    coh = analytic_monomer_coherence([], 300.0, 8000.0, t)
    from vibrompo.model import TWO_PI_C

    assert np.abs(coh - np.exp(-1j * 8000.0 * TWO_PI_C * t)).max() < 1e-14


def test_lineshape_exponent_starts_flat():
    modes = [ModeSpec(1200.0, 0.2, 3e-3, 300.0, 8)]
    coh = analytic_monomer_coherence(modes, 300.0, 0.0, np.array([0.0, 1e-3, 2e-3]))
    # g(0) = 0; g'(0) = 0 shows as quadratic onset: doubling t quadruples
    # the (tiny) deviation from 1
    assert abs(coh[0] - 1.0) < 1e-15
    d1 = abs(coh[1] - 1.0)
    d2 = abs(coh[2] - 1.0)
    assert d1 < 1e-7
    assert d2 / d1 == pytest.approx(4.0, rel=1e-3)


def test_cross_oracle_agreement_three_mode_environment():
    """Direct integration and the cumulant closed form agree on a monomer
    coupled to three bundled-table modes (high-frequency rows where the
    Fock truncation is inert)."""
    fit = load_bundled_fit()
    rows = [17, 18, 20]
    nbs = [5, 4, 8]
    modes = [
        ModeSpec(fit.omegas[r], fit.huang_rhys[r], fit.gammas[r], fit.temperatures[r], nb)
        for r, nb in zip(rows, nbs)
    ]
    spec = NetworkSpec.create([15000.0], np.zeros((1, 1)), modes, has_ground_state=True)
    ne = spec.n_electronic
    rho0 = np.zeros((ne, ne), dtype=complex)
    rho0[0, 1] = 1.0
    init = initial_dense_state(spec, rho0)
    traj = dense_evolve(spec, init.rho, 300.0, 10.0, rtol=1e-11, atol=1e-13)
    coh_dense = traj.rho_e[:, 0, 1]
    coh_analytic = analytic_monomer_coherence(modes, 300.0, 15000.0, traj.times)
    assert np.abs(coh_dense - coh_analytic).max() < 1e-6


def test_spectral_density_exponent_matches_mode_exponent():
    """For a narrow peak the quadrature route and the closed-form mode route
    to the lineshape exponent must agree."""
    from vibrompo import AntisymmetricLorentzian, rate_to_wavenumber

    width_rate = 1.0 / 1000.0
    sd = AntisymmetricLorentzian(1100.0, rate_to_wavenumber(width_rate), 0.15)
    modes = [ModeSpec(1100.0, 0.15, width_rate, 300.0, 2)]
    t = np.linspace(0.0, 200.0, 21)
    coh_sd = analytic_monomer_coherence(sd, 300.0, 0.0, t)
    coh_modes = analytic_monomer_coherence(modes, 300.0, 0.0, t)
    assert np.abs(coh_sd - coh_modes).max() < 2e-2
