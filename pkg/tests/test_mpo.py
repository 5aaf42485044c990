import numpy as np
import pytest

from conftest import random_mpo
from vibrompo import (
    ConditionalMPO,
    ModeSpec,
    NetworkSpec,
    add,
    add_many,
    compress,
    frobenius_norm,
    init_product_state,
    inner,
    load_checkpoint,
    save_checkpoint,
)
from vibrompo.basis import build_basis
from vibrompo.oracle import initial_dense_state, mpo_to_dense


def dense_diff_norm(a, b, ca=1.0, cb=-1.0):
    return np.abs(ca * a.dense_coefficients() + cb * b.dense_coefficients()).max()


def test_init_localized_excitation(tiny_q2_dimer_spec):
    state = init_product_state(tiny_q2_dimer_spec, 0)
    assert not state.blocks[(0, 0)].is_zero()
    assert state.blocks[(0, 1)].is_zero()
    assert state.blocks[(1, 1)].is_zero()
    for blk in state.blocks.values():
        assert blk.max_bond == 1
    assert state.trace() == pytest.approx(1.0, abs=1e-13)


def test_init_superposition_populates_all_blocks(tiny_q2_dimer_spec):
    rho = 0.5 * np.ones((2, 2), dtype=complex)
    state = init_product_state(tiny_q2_dimer_spec, rho)
    for blk in state.blocks.values():
        assert not blk.is_zero()
        assert blk.max_bond == 1
    assert state.trace() == pytest.approx(1.0, abs=1e-13)


def test_init_dense_reconstruction_matches_kron():
    m = ModeSpec(800.0, 0.2, 1e-3, 300.0, 3)
    spec = NetworkSpec.create([0.0, 100.0], [[0.0, 50.0], [50.0, 0.0]], [m])
    state = init_product_state(spec, 0)
    rho = mpo_to_dense(state)
    ref = initial_dense_state(spec, 0).rho
    assert np.abs(rho - ref).max() < 1e-12


def test_init_rejects_bad_index(tiny_q2_dimer_spec):
    with pytest.raises(ValueError):
        init_product_state(tiny_q2_dimer_spec, 7)


def test_add_cancellation(rng):
    x = random_mpo(rng, [9, 16, 9], 3)
    z = add(x, x, 1.0, -1.0)
    assert np.abs(z.dense_coefficients()).max() < 1e-14


def test_add_bond_shape_law(rng):
    a = random_mpo(rng, [4, 4, 4], 3)
    b = random_mpo(rng, [4, 4, 4], 5)
    out = add(a, b)
    assert out.bond_dims == (8, 8)
    one_a = random_mpo(rng, [4, 9, 4], 1)
    one_b = random_mpo(rng, [4, 9, 4], 1)
    assert add(one_a, one_b).bond_dims == (2, 2)


def test_add_reconstructs_linear_combination(rng):
    a = random_mpo(rng, [9, 9, 9], 2)
    b = random_mpo(rng, [9, 9, 9], 3)
    out = add(a, b, 0.3 - 0.2j, -1.5j)
    ref = (0.3 - 0.2j) * a.dense_coefficients() + (-1.5j) * b.dense_coefficients()
    assert np.abs(out.dense_coefficients() - ref).max() < 1e-13


def test_add_many_matches_sequential(rng):
    terms = [random_mpo(rng, [4, 4], 2) for _ in range(4)]
    coeffs = [1.0, -0.5, 0.25j, 2.0]
    out = add_many(terms, coeffs)
    ref = sum(c * t.dense_coefficients() for c, t in zip(coeffs, terms))
    assert np.abs(out.dense_coefficients() - ref).max() < 1e-13


def test_compress_noop_below_chi(rng):
    x = random_mpo(rng, [9, 9, 9], 3)
    out, report = compress(x, 8)
    assert report.per_bond.max() < 1e-25
    assert np.abs(out.dense_coefficients() - x.dense_coefficients()).max() < 1e-13
    assert out.max_bond <= 3


def test_compress_rank2_sum_is_exact(rng):
    a = random_mpo(rng, [4, 9, 4], 1)
    b = random_mpo(rng, [4, 9, 4], 1)
    grown = add(a, b)
    out, report = compress(grown, 2)
    assert report.bound < 1e-26
    assert np.abs(out.dense_coefficients() - grown.dense_coefficients()).max() < 1e-14


def test_compress_chi1_bound_holds(rng):
    x = random_mpo(rng, [9, 16, 9], 4)
    out, report = compress(x, 1)
    assert out.max_bond == 1
    d2 = (
        inner(x, x).real
        + inner(out, out).real
        - 2.0 * inner(x, out).real
    )
    assert d2 <= report.bound + 1e-12 * inner(x, x).real
    assert report.bound > 0


def test_compress_bound_many_random(rng):
    for _ in range(100):
        m = int(rng.integers(2, 6))
        phys = [int(rng.choice([4, 9])) for _ in range(m)]
        x = random_mpo(rng, phys, int(rng.integers(3, 9)))
        chi = int(rng.integers(1, 4))
        out, report = compress(x, chi)
        d2 = (
            inner(x, x).real + inner(out, out).real - 2.0 * inner(x, out).real
        )
        assert d2 <= report.bound + 1e-12 * inner(x, x).real


def test_compress_is_contraction(rng):
    for _ in range(20):
        x = random_mpo(rng, [9, 9, 9, 9], 6)
        out, _ = compress(x, int(rng.integers(1, 5)))
        assert frobenius_norm(out) <= frobenius_norm(x) * (1 + 1e-12)


def test_compress_rejects_bad_chi(rng):
    with pytest.raises(ValueError):
        compress(random_mpo(rng, [4, 4], 2), 0)


def test_norm_and_inner_match_dense(rng):
    a = random_mpo(rng, [9, 4, 9, 4], 3)
    b = random_mpo(rng, [9, 4, 9, 4], 2)
    ca, cb = a.dense_coefficients(), b.dense_coefficients()
    assert frobenius_norm(a) == pytest.approx(np.linalg.norm(ca), rel=1e-10)
    assert inner(a, b) == pytest.approx(np.vdot(ca, cb), rel=1e-10)
    assert inner(a, a).real == pytest.approx(frobenius_norm(a) ** 2, rel=1e-12)


def test_norm_of_pure_product_state_block():
    m = ModeSpec(1500.0, 0.0, 0.0, 0.0, 4)  # T=0: modes in |0><0|
    spec = NetworkSpec.create([0.0], np.zeros((1, 1)), [m, m])
    state = init_product_state(spec, 0)
    assert frobenius_norm(state.blocks[(0, 0)]) == pytest.approx(1.0, abs=1e-13)


def test_trace_and_scaling(tiny_q2_dimer_spec):
    state = init_product_state(tiny_q2_dimer_spec, 0)
    assert state.trace() == pytest.approx(1.0, abs=1e-13)
    state.scale(0.5)
    assert state.trace() == pytest.approx(0.5, abs=1e-13)


def test_adjoint_closure(rng, tiny_q2_dimer_spec):
    rho = np.array([[0.25, 0.1 + 0.2j], [0.1 - 0.2j, 0.75]])
    state = init_product_state(tiny_q2_dimer_spec, rho)
    up = state.block(0, 1).dense_coefficients()
    down = state.block(1, 0).dense_coefficients()
    assert np.abs(down - up.conj()).max() < 1e-14


def test_hermiticity_closure_of_reconstruction(tiny_q2_dimer_spec):
    """Off-diagonal pair closure is exact by construction; with unbounded
    bond dimension the full reconstruction is Hermitian to roundoff (with
    truncation it is Hermitian to the accumulated compression error)."""
    from vibrompo import build_electronic_step, build_local_channels, step

    rho = np.array([[0.6, 0.3j], [-0.3j, 0.4]])
    state = init_product_state(tiny_q2_dimer_spec, rho)
    table = build_local_channels(tiny_q2_dimer_spec, 0.5)
    estep = build_electronic_step(tiny_q2_dimer_spec, 0.5)
    for _ in range(10):
        step(state, table, estep, chi=256)
    up = state.block(0, 1).dense_coefficients()
    down = state.block(1, 0).dense_coefficients()
    assert np.abs(down - up.conj()).max() < 1e-14
    full = mpo_to_dense(state)
    assert np.abs(full - full.conj().T).max() < 1e-11


def test_zero_block_and_is_zero():
    z = ConditionalMPO.zero([4, 9])
    assert z.is_zero()
    assert frobenius_norm(z) == 0.0


def test_checkpoint_roundtrip(tmp_path, tiny_q2_dimer_spec):
    from vibrompo import build_electronic_step, build_local_channels, step

    state = init_product_state(tiny_q2_dimer_spec, 0)
    table = build_local_channels(tiny_q2_dimer_spec, 0.5)
    estep = build_electronic_step(tiny_q2_dimer_spec, 0.5)
    for _ in range(5):
        step(state, table, estep, chi=6)
    path = tmp_path / "state.npz"
    save_checkpoint(state, path, step=5, extra={"note": "x"})
    loaded, step_idx, extra = load_checkpoint(path, tiny_q2_dimer_spec)
    assert step_idx == 5
    assert extra == {"note": "x"}
    assert loaded.ledger.increments == state.ledger.increments
    for key, blk in state.blocks.items():
        for t_orig, t_back in zip(blk.tensors, loaded.blocks[key].tensors):
            assert np.array_equal(t_orig, t_back)


def test_checkpoint_rejects_wrong_spec(tmp_path, tiny_q2_dimer_spec, small_dimer_spec):
    state = init_product_state(tiny_q2_dimer_spec, 0)
    path = tmp_path / "state.npz"
    save_checkpoint(state, path)
    with pytest.raises(ValueError):
        load_checkpoint(path, small_dimer_spec)


def test_distance_squared_between_states(tiny_q2_dimer_spec):
    a = init_product_state(tiny_q2_dimer_spec, 0)
    b = init_product_state(tiny_q2_dimer_spec, 1)
    d2 = a.distance_squared(b)
    ra = mpo_to_dense(a)
    rb = mpo_to_dense(b)
    assert d2 == pytest.approx(np.linalg.norm(ra - rb) ** 2, rel=1e-10)
