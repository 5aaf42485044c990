"""Dense reference dynamics for small instances.

Two independent references back every derived expectation in the test
suite: a direct high-order integration of the full master equation on the
truncated Hilbert space, and the closed-form single-site (displaced
oscillator) coherence from the cumulant of the environment correlation
function.

The integrator works in the frame rotating with the free oscillator
energies, where step sizes are set by the coupling strengths instead of
the vibrational frequencies; states are rotated back before they are
reported, so callers only ever see lab-frame quantities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import DOP853

from .basis import build_basis, thermal_populations
from .model import (
    KB_CM1_PER_K,
    NetworkSpec,
    TWO_PI_C,
    build_electronic_hamiltonian,
    thermal_occupancy,
)
from .propagator import annihilation

try:  # fused kernel is optional; the scipy path computes identical numbers
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


DIM_CEILING = 4096


class DimensionCeilingError(RuntimeError):
    """Raised when the dense Hilbert space would exceed the ceiling."""


@dataclass
class DenseState:
    """Full density matrix on (electronic) x (prod of oscillator levels)."""

    spec: NetworkSpec
    rho: np.ndarray

    def validate(self, tol: float = 1e-9) -> "DenseState":
        dev = np.abs(self.rho - self.rho.conj().T).max()
        if dev > tol:
            raise ValueError(f"state is not Hermitian (dev {dev:.3e})")
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > tol:
            raise ValueError(f"state trace {tr} is not 1")
        w = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if w.min() < -tol:
            raise ValueError(f"state has negative eigenvalue {w.min():.3e}")
        return self


@dataclass
class DenseTrajectory:
    times: np.ndarray
    populations: np.ndarray      # (nt, n_electronic)
    rho_e: np.ndarray            # (nt, ne, ne)
    mode_occupations: np.ndarray  # (nt, M)
    states: list[np.ndarray] | None


class _Layout:
    """Index bookkeeping for the dense product space."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.ne = spec.n_electronic
        self.nbs = [m.n_levels for m in spec.modes]
        self.dv = int(np.prod(self.nbs)) if self.nbs else 1
        self.dim = self.ne * self.dv
        if self.dim > DIM_CEILING:
            raise DimensionCeilingError(
                f"dense dimension {self.dim} exceeds ceiling {DIM_CEILING}"
            )

    def op(self, el_op=None, osc: int | None = None, mode_op=None) -> sp.csr_matrix:
        out = sp.csr_matrix(
            el_op if el_op is not None else sp.identity(self.ne, dtype=complex)
        )
        for i, nb in enumerate(self.nbs):
            piece = mode_op if i == osc else sp.identity(nb, dtype=complex)
            out = sp.kron(out, sp.csr_matrix(piece), format="csr")
        return out

    def site_projector(self, site: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.ones(1), ([site], [site])), shape=(self.ne, self.ne), dtype=complex
        )


def initial_dense_state(
    spec: NetworkSpec,
    init_site: int | np.ndarray,
    mode_temperatures: list[float] | None = None,
) -> DenseState:
    """Electronic matrix (or populated site index) times thermal modes."""
    lay = _Layout(spec)
    ne = lay.ne
    if isinstance(init_site, (int, np.integer)):
        rho_e = np.zeros((ne, ne), dtype=complex)
        rho_e[int(init_site), int(init_site)] = 1.0
    else:
        rho_e = np.asarray(init_site, dtype=complex)
    weights = np.ones(1)
    for i, mode in enumerate(spec.modes):
        t_init = None if mode_temperatures is None else mode_temperatures[i]
        weights = np.kron(weights, thermal_populations(mode, t_init))
    rho = np.kron(rho_e, np.diag(weights.astype(complex)))
    return DenseState(spec, rho)


if _HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _rhs_kernel(indptr, indices, hvals, rho, out, jsrc, jamp):  # pragma: no cover
        d = rho.shape[0]
        nj = jsrc.shape[0]
        for r in range(d):
            for c in range(d):
                out[r, c] = 0.0
            for idx in range(indptr[r], indptr[r + 1]):
                k = indices[idx]
                v = -1j * hvals[idx]
                for c in range(d):
                    out[r, c] += v * rho[k, c]
            for c in range(d):
                acc = 0.0 + 0.0j
                for idx in range(indptr[c], indptr[c + 1]):
                    acc += np.conj(hvals[idx]) * rho[r, indices[idx]]
                out[r, c] += 1j * acc
            for j in range(nj):
                rs = jsrc[j, r]
                if rs >= 0:
                    ar = jamp[j, r]
                    for c in range(d):
                        cs = jsrc[j, c]
                        if cs >= 0:
                            out[r, c] += ar * np.conj(jamp[j, c]) * rho[rs, cs]


class _RotatingFrameRHS:
    """d(rho)/dt in the frame rotating with the free vibrational energies.

    Heff(t) = H_e + sum_q [exp(-i w_q t) D_q + h.c.] - (i/2) K, where D_q is
    the displacement coupling of oscillator q and the diagonal K collects
    the anticommutator parts of the dissipator; the jump terms are static
    because the frame phases of a and a^dag cancel inside each sandwich.
    """

    def __init__(self, spec: NetworkSpec):
        lay = _Layout(spec)
        self.lay = lay
        d = lay.dim
        he_full = lay.op(build_electronic_hamiltonian(spec, angular=True))
        k_diag = np.zeros(d)
        self.evib = np.zeros(d)
        disp = []
        self.disp_omegas: list[float] = []
        jsrc, jamp = [], []
        for i, (mode, site) in enumerate(zip(spec.modes, spec.mode_sites)):
            nb = mode.n_levels
            w = mode.omega * TWO_PI_C
            a = annihilation(nb)
            self.evib += lay.op(None, i, np.diag(w * np.arange(nb)).astype(complex)).diagonal().real
            if mode.gamma > 0:
                nbq = thermal_occupancy(mode.omega, mode.temperature)
                anti = 2 * mode.gamma * (
                    (nbq + 1) * (a.conj().T @ a) + nbq * (a @ a.conj().T)
                )
                k_diag += lay.op(None, i, anti).diagonal().real
                ops = [(np.sqrt(2 * mode.gamma * (nbq + 1)), a)]
                if nbq > 0:
                    ops.append((np.sqrt(2 * mode.gamma * nbq), a.conj().T))
                for amp_scale, op in ops:
                    full = (amp_scale * lay.op(None, i, op)).tocoo()
                    src = np.full(d, -1, dtype=np.int64)
                    amp = np.zeros(d, dtype=complex)
                    src[full.row] = full.col
                    amp[full.row] = full.data
                    jsrc.append(src)
                    jamp.append(amp)
            if mode.huang_rhys > 0:
                disp.append(
                    w * np.sqrt(mode.huang_rhys)
                    * lay.op(lay.site_projector(site), i, a)
                )
                self.disp_omegas.append(w)
        self.jsrc = np.array(jsrc, dtype=np.int64) if jsrc else np.full((0, d), -1, np.int64)
        self.jamp = np.array(jamp, dtype=complex) if jamp else np.zeros((0, d), complex)

        comps = [(he_full - 0.5j * sp.diags(k_diag)).tocsr()]
        for dm in disp:
            comps.append(dm.tocsr())
            comps.append(dm.conj().T.tocsr())
        pattern = sum(abs(c) for c in comps).tocsr()
        pattern.sort_indices()
        pattern.eliminate_zeros()
        self.indptr = pattern.indptr
        self.indices = pattern.indices
        coo = pattern.tocoo()
        # align every component's values onto the union sparsity pattern
        contrib = np.zeros((len(comps), coo.nnz), dtype=complex)
        for k, comp in enumerate(comps):
            cmat = comp.tocoo()
            lookup = {
                (int(r), int(c)): v
                for r, c, v in zip(cmat.row, cmat.col, cmat.data)
            }
            for j, (r, c) in enumerate(zip(coo.row, coo.col)):
                contrib[k, j] = lookup.get((int(r), int(c)), 0.0)
        self.contrib = contrib
        self._heff_csr_template = pattern.astype(complex)
        self._out = np.zeros((d, d), dtype=complex)
        self._use_numba = _HAVE_NUMBA

    def _heff_values(self, t: float) -> np.ndarray:
        coeffs = np.empty(self.contrib.shape[0], dtype=complex)
        coeffs[0] = 1.0
        for q, w in enumerate(self.disp_omegas):
            ph = np.exp(-1j * w * t)
            coeffs[1 + 2 * q] = ph
            coeffs[2 + 2 * q] = np.conj(ph)
        return coeffs @ self.contrib

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        d = self.lay.dim
        rho = y.reshape(d, d)
        hvals = self._heff_values(t)
        if self._use_numba:
            _rhs_kernel(self.indptr, self.indices, hvals, rho, self._out, self.jsrc, self.jamp)
            return self._out.ravel().copy()
        heff = self._heff_csr_template
        heff.data = hvals
        out = -1j * (heff @ rho - (heff.conj() @ rho.conj().T).conj().T)
        for j in range(self.jsrc.shape[0]):
            src, amp = self.jsrc[j], self.jamp[j]
            rows = np.nonzero(src >= 0)[0]
            sub = rho[np.ix_(src[rows], src[rows])]
            out[np.ix_(rows, rows)] += np.outer(amp[rows], amp[rows].conj()) * sub
        return out.ravel()

    def to_lab_frame(self, rho_rot: np.ndarray, t: float) -> np.ndarray:
        ph = np.exp(-1j * self.evib * t)
        return ph[:, None] * rho_rot * ph.conj()[None, :]


def dense_reduced_electronic(spec: NetworkSpec, rho: np.ndarray) -> np.ndarray:
    lay = _Layout(spec)
    r = rho.reshape(lay.ne, lay.dv, lay.ne, lay.dv)
    return np.einsum("avbv->ab", r)


def dense_reduced_oscillator(spec: NetworkSpec, rho: np.ndarray, osc: int) -> np.ndarray:
    lay = _Layout(spec)
    left = int(np.prod(lay.nbs[:osc])) if osc else 1
    nb = lay.nbs[osc]
    right = lay.dv // (left * nb)
    r = rho.reshape(lay.ne, left, nb, right, lay.ne, left, nb, right)
    return np.einsum("alnralmr->nm", r)


def mpo_to_dense(state) -> np.ndarray:
    """Reconstruct the full density matrix from a block MPO state (small
    instances only)."""
    spec = state.spec
    lay = _Layout(spec)
    ne = lay.ne
    rho = np.zeros((lay.dim, lay.dim), dtype=complex)
    bases = [build_basis(nb).elements for nb in lay.nbs]
    for m in range(ne):
        for n in range(ne):
            coeff = np.asarray(state.block(m, n).dense_coefficients())
            coeff = coeff.reshape(*[nb * nb for nb in lay.nbs])
            # contract each physical axis with its basis stack, building the
            # vibrational operator with row/col legs interleaved per mode
            vib = coeff
            for i, nb in enumerate(lay.nbs):
                # current leading axis is mode i's physical index
                vib = np.tensordot(vib, bases[i], axes=(0, 0))
            # axes now: (rows_1, cols_1, .., rows_M, cols_M) appended in order
            m_tot = len(lay.nbs)
            perm = list(range(0, 2 * m_tot, 2)) + list(range(1, 2 * m_tot, 2))
            vib = np.transpose(vib, perm).reshape(lay.dv, lay.dv)
            e = np.zeros((ne, ne), dtype=complex)
            e[m, n] = 1.0
            rho += np.kron(e, vib)
    return rho


def dense_evolve(
    spec: NetworkSpec,
    rho0: DenseState | np.ndarray | int,
    t_final: float,
    sample_dt: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    keep_states: bool | None = None,
    mode_temperatures: list[float] | None = None,
    progress=None,
) -> DenseTrajectory:
    """Integrate the master equation with an adaptive 8th-order method and
    sample on a uniform grid.

    ``rho0`` may be a DenseState, a full matrix, or an electronic index
    (thermal oscillators are attached).  States are kept only when
    requested or when the dimension is small.
    """
    lay = _Layout(spec)
    if isinstance(rho0, DenseState):
        rho_start = rho0.rho
    elif isinstance(rho0, (int, np.integer)) or (
        isinstance(rho0, np.ndarray) and rho0.shape == (lay.ne, lay.ne)
    ):
        rho_start = initial_dense_state(spec, rho0, mode_temperatures).rho
    else:
        rho_start = np.asarray(rho0, dtype=complex)
    if rho_start.shape != (lay.dim, lay.dim):
        raise ValueError(f"initial state must be {lay.dim}x{lay.dim}")

    rhs = _RotatingFrameRHS(spec)
    n_samples = int(round(t_final / sample_dt)) + 1
    times = np.arange(n_samples) * sample_dt
    if keep_states is None:
        keep_states = lay.dim <= 128

    pops = np.zeros((n_samples, lay.ne))
    rho_es = np.zeros((n_samples, lay.ne, lay.ne), dtype=complex)
    occs = np.zeros((n_samples, len(spec.modes)))
    states = [] if keep_states else None

    num_diags = [
        lay.op(None, i, np.diag(np.arange(m.n_levels).astype(complex))).diagonal().real
        for i, m in enumerate(spec.modes)
    ]

    def take_sample(idx, rho_rot, t):
        rho_lab = rhs.to_lab_frame(rho_rot, t)
        re = dense_reduced_electronic(spec, rho_lab)
        rho_es[idx] = re
        pops[idx] = re.diagonal().real
        diag = rho_lab.diagonal().real
        for i, nd in enumerate(num_diags):
            occs[idx, i] = float(nd @ diag)
        if states is not None:
            states.append(rho_lab)

    take_sample(0, rho_start, 0.0)
    if n_samples > 1:
        solver = DOP853(
            rhs, 0.0, rho_start.ravel().astype(complex), t_bound=float(t_final),
            rtol=rtol, atol=atol,
        )
        next_idx = 1
        while next_idx < n_samples:
            solver.step()
            if solver.status == "failed":
                raise RuntimeError("dense integration failed")
            while next_idx < n_samples and solver.t >= times[next_idx] - 1e-12:
                if solver.t > times[next_idx]:
                    y = solver.dense_output()(times[next_idx])
                else:
                    y = solver.y
                take_sample(next_idx, y.reshape(lay.dim, lay.dim), times[next_idx])
                next_idx += 1
            if progress is not None:
                progress(solver.t)
    return DenseTrajectory(times, pops, rho_es, occs, states)


# ---------------------------------------------------------------------------

def _lineshape_exponent_modes(modes, t_fs: np.ndarray) -> np.ndarray:
    """g(t) = double time integral of the mode-set correlation function,
    done in closed form per exponential term."""
    t = np.asarray(t_fs, dtype=float)
    g = np.zeros(t.shape, dtype=complex)
    for mode in modes:
        w = mode.omega * TWO_PI_C
        coth = (
            1.0
            if mode.temperature == 0
            else 1.0 / np.tanh(mode.omega / (KB_CM1_PER_K * mode.temperature) / 2.0)
        )
        for sign in (+1.0, -1.0):
            c = (w * w * mode.huang_rhys / 2.0) * (coth + sign)
            if c == 0.0:
                continue
            z = -1j * sign * w - mode.gamma
            g += c * (np.exp(z * t) - 1.0 - z * t) / (z * z)
    return g


def _lineshape_exponent_sd(sd, temperature: float, t_fs: np.ndarray) -> np.ndarray:
    """g(t) from a continuous spectral density by quadrature of
    J(w)/w^2 [coth(bw/2)(1-cos wt) + i(sin wt - wt)]."""
    from .bcf import sd_grid

    w_cm, jw, dw = sd_grid(sd)
    wr = w_cm * TWO_PI_C
    if temperature > 0:
        coth = 1.0 / np.tanh(w_cm / (KB_CM1_PER_K * temperature) / 2.0)
    else:
        coth = np.ones_like(w_cm)
    t = np.asarray(t_fs, dtype=float)[:, None]
    phase = wr[None, :] * t
    integrand = (jw / (w_cm**2))[None, :] * (
        coth[None, :] * (1.0 - np.cos(phase)) + 1j * (np.sin(phase) - phase)
    )
    return np.trapezoid(integrand, dx=dw, axis=1)


def analytic_monomer_coherence(
    environment,
    temperature: float,
    omega1_cm1: float,
    t_fs: np.ndarray,
) -> np.ndarray:
    """Closed-form optical coherence of a single site: exp(-i O1 t - g(t)).

    ``environment`` is either a list of damped-mode specs (closed-form
    exponent) or a spectral density (quadrature exponent with the given
    bath temperature)."""
    t = np.asarray(t_fs, dtype=float)
    if isinstance(environment, (list, tuple)):
        g = _lineshape_exponent_modes(environment, t)
    else:
        g = _lineshape_exponent_sd(environment, temperature, t)
    return np.exp(-1j * omega1_cm1 * TWO_PI_C * t - g)
