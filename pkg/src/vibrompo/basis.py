"""Orthonormal Hermitian operator basis for one truncated oscillator.

The basis is the generalized Gell-Mann family: the normalized identity
first, then symmetric pairs, antisymmetric pairs and diagonal ladder
matrices, all Hilbert-Schmidt normalized.  Element 0 is 1/sqrt(N_b) times
the identity and every other element is traceless, which is what makes
partial traces of the chain representation a product of single-index
contractions.  Because every element is Hermitian, Hermitian operators
have real coefficient vectors.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .model import KB_CM1_PER_K, ModeSpec


class OperatorBasis:
    """Ordered basis {x_i} of N_b x N_b Hermitian matrices with
    Tr(x_i^dag x_j) = delta_ij and x_0 = identity / sqrt(N_b)."""

    def __init__(self, n_levels: int):
        if n_levels < 2:
            raise ValueError(f"n_levels must be >= 2 (got {n_levels})")
        self.n_levels = int(n_levels)
        self.elements = _gell_mann(self.n_levels)
        # stacked (n_levels^2, n_levels^2): row i = vec(x_i), used for fast
        # expand/reconstruct and for superoperator basis changes
        self._vecs = self.elements.reshape(len(self.elements), -1)

    def __len__(self) -> int:
        return self.n_levels * self.n_levels

    def expand(self, op: np.ndarray) -> np.ndarray:
        """Coefficients c_i = Tr(x_i^dag op); exact inverse of reconstruct."""
        op = np.asarray(op, dtype=complex)
        if op.shape != (self.n_levels, self.n_levels):
            raise ValueError(
                f"operator must be {self.n_levels}x{self.n_levels}, got {op.shape}"
            )
        return self._vecs.conj() @ op.reshape(-1)

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (len(self),):
            raise ValueError(f"expected {len(self)} coefficients, got {coeffs.shape}")
        return (coeffs @ self._vecs).reshape(self.n_levels, self.n_levels)

    def superoperator_matrix(self, action) -> np.ndarray:
        """Matrix W[j, k] = Tr(x_j^dag action(x_k)) of a linear map on
        operator space, expressed in this basis."""
        n2 = len(self)
        w = np.empty((n2, n2), dtype=complex)
        for k in range(n2):
            w[:, k] = self.expand(action(self.elements[k]))
        return w


@lru_cache(maxsize=None)
def build_basis(n_levels: int) -> OperatorBasis:
    return OperatorBasis(n_levels)


def _gell_mann(d: int) -> np.ndarray:
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0 / np.sqrt(2.0)
            mats.append(sym)
            asym = np.zeros((d, d), dtype=complex)
            asym[j, k] = -1.0j / np.sqrt(2.0)
            asym[k, j] = 1.0j / np.sqrt(2.0)
            mats.append(asym)
    for l in range(1, d):
        diag = np.zeros((d, d), dtype=complex)
        diag[np.arange(l), np.arange(l)] = 1.0
        diag[l, l] = -float(l)
        mats.append(diag / np.sqrt(l * (l + 1)))
    return np.array(mats)


def thermal_populations(mode: ModeSpec, temperature: float | None = None) -> np.ndarray:
    """Boltzmann weights of the truncated oscillator, renormalized over the
    kept levels so they sum to 1 exactly."""
    t = mode.temperature if temperature is None else temperature
    n = np.arange(mode.n_levels)
    if t == 0:
        p = np.zeros(mode.n_levels)
        p[0] = 1.0
        return p
    p = np.exp(-mode.omega / (KB_CM1_PER_K * t) * n)
    return p / p.sum()


def thermal_coefficients(
    mode: ModeSpec, basis: OperatorBasis, temperature: float | None = None
) -> np.ndarray:
    """Basis expansion of the truncated, renormalized thermal state."""
    if basis.n_levels != mode.n_levels:
        raise ValueError("basis truncation does not match the mode")
    return basis.expand(np.diag(thermal_populations(mode, temperature)).astype(complex))
