import numpy as np
import pytest

from vibrompo import ModeSpec, build_basis, thermal_coefficients
from vibrompo.basis import thermal_populations


@pytest.mark.parametrize("nb", [2, 3, 5, 8, 16])
def test_gram_matrix_is_identity(nb):
    basis = build_basis(nb)
    els = basis.elements
    gram = np.einsum("aij,bij->ab", els.conj(), els)
    assert np.abs(gram - np.eye(nb * nb)).max() < 1e-12


@pytest.mark.parametrize("nb", [2, 4, 7])
def test_identity_first_then_traceless_hermitian(nb):
    basis = build_basis(nb)
    els = basis.elements
    assert np.abs(els[0] - np.eye(nb) / np.sqrt(nb)).max() < 1e-15
    for x in els[1:]:
        assert abs(np.trace(x)) < 1e-14
    for x in els:
        assert np.abs(x - x.conj().T).max() < 1e-15


def test_qubit_case_has_four_elements():
    basis = build_basis(2)
    assert len(basis) == 4


def test_rejects_single_level():
    with pytest.raises(ValueError):
        build_basis(1)


def test_expand_identity_and_basis_elements():
    nb = 4
    basis = build_basis(nb)
    c = basis.expand(np.eye(nb, dtype=complex))
    expected = np.zeros(nb * nb)
    expected[0] = np.sqrt(nb)
    assert np.abs(c - expected).max() < 1e-14
    for k in range(len(basis)):
        ck = basis.expand(basis.elements[k])
        ek = np.zeros(nb * nb)
        ek[k] = 1.0
        assert np.abs(ck - ek).max() < 1e-13


def test_expand_reconstruct_roundtrip(rng):
    nb = 5
    basis = build_basis(nb)
    for _ in range(5):
        op = rng.standard_normal((nb, nb)) + 1j * rng.standard_normal((nb, nb))
        back = basis.reconstruct(basis.expand(op))
        assert np.abs(back - op).max() < 1e-12


def test_trace_extraction_property(rng):
    nb = 6
    basis = build_basis(nb)
    op = rng.standard_normal((nb, nb)) + 1j * rng.standard_normal((nb, nb))
    assert np.trace(op) == pytest.approx(np.sqrt(nb) * basis.expand(op)[0], rel=1e-12)


def test_hermitian_iff_real_coefficients(rng):
    nb = 4
    basis = build_basis(nb)
    a = rng.standard_normal((nb, nb)) + 1j * rng.standard_normal((nb, nb))
    herm = a + a.conj().T
    c = basis.expand(herm)
    assert np.abs(c.imag).max() < 1e-13
    c_general = basis.expand(a)
    assert np.abs(c_general.imag).max() > 1e-3  # generic operator is not real


def test_thermal_zero_temperature_is_ground_state():
    mode = ModeSpec(1500.0, 0.0, 0.0, 0.0, 5)
    basis = build_basis(5)
    rho = basis.reconstruct(thermal_coefficients(mode, basis))
    expected = np.zeros((5, 5))
    expected[0, 0] = 1.0
    assert np.abs(rho - expected).max() < 1e-14


def test_thermal_infinite_temperature_is_maximally_mixed():
    mode = ModeSpec(1500.0, 0.0, 0.0, 1e12, 4)
    basis = build_basis(4)
    rho = basis.reconstruct(thermal_coefficients(mode, basis))
    assert np.abs(rho - np.eye(4) / 4).max() < 1e-8


def test_thermal_weights_1500cm_300K():
    mode = ModeSpec(1500.0, 0.0, 0.0, 300.0, 8)
    p = thermal_populations(mode)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)
    assert p[0] == pytest.approx(0.99925, abs=1e-5)
    # geometric tail
    ratios = p[1:] / p[:-1]
    assert np.abs(ratios - ratios[0]).max() < 1e-12
