import numpy as np
import pytest

from vibrompo import (
    ConditionalMPO,
    ModeSpec,
    NetworkSpec,
    build_basis,
    evolve,
    init_product_state,
    lineshape_from_coherence,
    mandel_parameter,
    occupation_moments,
    populations,
    reduced_electronic,
    reduced_oscillator,
    trace_distance,
)
from vibrompo.model import TWO_PI_C
from vibrompo.mpo import VibronicMPOState
from vibrompo.oracle import dense_evolve, dense_reduced_electronic, dense_reduced_oscillator


def single_mode_state(spec, matrix):
    """State of a one-site, one-mode network with the oscillator prepared in
    the given density matrix."""
    basis = build_basis(spec.modes[0].n_levels)
    blocks = {(0, 0): ConditionalMPO.from_product([basis.expand(matrix)])}
    return VibronicMPOState(spec, blocks)


def test_initial_reduced_electronic_is_projector(tiny_q2_dimer_spec):
    state = init_product_state(tiny_q2_dimer_spec, 0)
    rho = reduced_electronic(state)
    expected = np.zeros((2, 2))
    expected[0, 0] = 1.0
    assert np.abs(rho - expected).max() < 1e-13


def test_reduced_matches_oracle_partial_trace(small_dimer_spec):
    """Extraction check at 1e-6 needs a configuration where the split
    propagator is exact, i.e. commuting factors: an uncoupled dimer with
    displaced, damped modes still drives the oscillators and builds
    electronic coherence structure."""
    m1 = ModeSpec(1500.0, 0.2, 1e-3, 300.0, 4)
    m2 = ModeSpec(500.0, 0.3, 1e-2, 300.0, 4)
    spec = NetworkSpec.create(
        [0.0, 250.0], np.zeros((2, 2)), [m1], modes_per_site=[[m1], [m2]]
    )
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    state = init_product_state(spec, rho0)
    evolve(state, 100.0, 0.5, chi=64, sample_stride=200, trace_guard=None)
    ref = dense_evolve(spec, rho0, 100.0, 100.0, rtol=1e-11, atol=1e-13)
    rho_mpo = reduced_electronic(state)
    rho_ref = dense_reduced_electronic(spec, ref.states[-1])
    assert np.abs(rho_mpo - rho_ref).max() < 1e-6
    for osc in range(2):
        r_mpo = reduced_oscillator(state, osc)
        r_ref = dense_reduced_oscillator(spec, ref.states[-1], osc)
        assert np.abs(r_mpo - r_ref).max() < 1e-6
        assert np.trace(r_mpo).real == pytest.approx(1.0, abs=1e-9)
        assert np.abs(r_mpo - r_mpo.conj().T).max() < 1e-9


def test_reduced_oscillator_initially_thermal(tiny_q2_dimer_spec):
    from vibrompo.basis import thermal_populations

    state = init_product_state(tiny_q2_dimer_spec, 0)
    for osc, mode in enumerate(tiny_q2_dimer_spec.modes):
        rho = reduced_oscillator(state, osc)
        assert np.abs(rho - np.diag(thermal_populations(mode))).max() < 1e-13


def test_uncoupled_mode_stays_thermal():
    from vibrompo.basis import thermal_populations

    m_driven = ModeSpec(1200.0, 0.3, 1e-3, 300.0, 4)
    m_idle = ModeSpec(600.0, 0.0, 2e-3, 300.0, 4)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [m_driven, m_idle])
    state = init_product_state(spec, 0)
    evolve(state, 100.0, 0.5, chi=16, sample_stride=200)
    rho_idle = reduced_oscillator(state, 1)
    assert np.abs(rho_idle - np.diag(thermal_populations(m_idle))).max() < 1e-10


def test_decoherence_shrinks_offdiagonals():
    m = ModeSpec(500.0, 0.4, 1e-2, 300.0, 5)
    spec = NetworkSpec.create([0.0, 0.0], np.zeros((2, 2)), [m])
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    ref = dense_evolve(spec, rho0, 400.0, 50.0, rtol=1e-9, atol=1e-11)
    coh = np.abs(ref.rho_e[:, 0, 1])
    assert coh[-1] < 0.05
    assert np.all(np.diff(coh) < 1e-3)  # monotone envelope up to tiny ripples


def test_mandel_of_fock_state():
    mode = ModeSpec(900.0, 0.0, 0.0, 0.0, 5)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [mode])
    fock1 = np.zeros((5, 5), dtype=complex)
    fock1[1, 1] = 1.0
    state = single_mode_state(spec, fock1)
    assert mandel_parameter(state, 0, 0) == pytest.approx(-1.0, abs=1e-12)


def test_mandel_of_thermal_state_equals_occupancy():
    from vibrompo import thermal_occupancy
    from vibrompo.basis import thermal_populations

    mode = ModeSpec(400.0, 0.0, 0.0, 300.0, 20)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [mode])
    state = init_product_state(spec, 0)
    nbar_truncated = float(np.arange(20) @ thermal_populations(mode))
    assert mandel_parameter(state, 0, 0) == pytest.approx(nbar_truncated, abs=1e-9)
    assert nbar_truncated == pytest.approx(thermal_occupancy(400.0, 300.0), abs=1e-6)


def test_mandel_missing_near_vacuum():
    mode = ModeSpec(900.0, 0.0, 0.0, 0.0, 4)
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [mode])
    state = init_product_state(spec, 0)
    assert mandel_parameter(state, 0, 0) is None


def test_trace_distance_basics(rng):
    rho = np.diag([0.3, 0.7]).astype(complex)
    assert trace_distance(rho, rho) == 0.0
    a = np.diag([1.0, 0.0]).astype(complex)
    b = np.diag([0.0, 1.0]).astype(complex)
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-14)


def test_trace_distance_matches_singular_values(rng):
    for _ in range(10):
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rho1 = x @ x.conj().T
        rho1 /= np.trace(rho1).real
        rho2 = y @ y.conj().T
        rho2 /= np.trace(rho2).real
        ref = 0.5 * np.linalg.svd(rho1 - rho2, compute_uv=False).sum()
        assert trace_distance(rho1, rho2) == pytest.approx(ref, abs=1e-12)
        assert 0.0 <= trace_distance(rho1, rho2) <= 1.0


def test_trace_distance_triangle_inequality(rng):
    mats = []
    for _ in range(6):
        x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = x @ x.conj().T
        mats.append(rho / np.trace(rho).real)
    for a in mats:
        for b in mats:
            for c in mats:
                assert trace_distance(a, b) <= (
                    trace_distance(a, c) + trace_distance(c, b) + 1e-10
                )


def test_trace_distance_rejects_non_hermitian():
    good = np.eye(2, dtype=complex) / 2
    bad = np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex)
    with pytest.raises(ValueError):
        trace_distance(good, bad)


def test_population_sum_equals_trace(small_dimer_spec):
    state = init_product_state(small_dimer_spec, 0)
    traj = evolve(
        state, 40.0, 0.5, chi=8, sample_stride=16, trace_guard=None,
        observers=[("trace", lambda s: s.trace().real)],
    )
    for pops, tr in zip(traj.populations, traj.extras["trace"]):
        assert pops.sum() == pytest.approx(tr, abs=1e-10)
    assert populations(state).sum() == pytest.approx(state.trace().real, abs=1e-12)


def test_lineshape_peak_and_window():
    omega0 = 12000.0
    tau = 150.0
    t = np.arange(0.0, 1500.0, 0.5)
    coh = np.exp(-1j * omega0 * TWO_PI_C * t - t / tau)
    grid = np.linspace(10000.0, 14000.0, 2001)
    line = lineshape_from_coherence(t, coh, grid)
    assert abs(grid[np.argmax(line)] - omega0) < 5.0
    assert line.max() == pytest.approx(1.0)
    line_hann = lineshape_from_coherence(t, coh, grid, window="hann")
    assert abs(grid[np.argmax(line_hann)] - omega0) < 10.0
    with pytest.raises(ValueError):
        lineshape_from_coherence(t, coh, grid, window="boxcar")


def test_absorption_requires_ground_level(tiny_q2_dimer_spec):
    from vibrompo import absorption_spectrum

    with pytest.raises(ValueError, match="ground"):
        absorption_spectrum(tiny_q2_dimer_spec, [1.0, 1.0], 10.0, 0.5, chi=4)
