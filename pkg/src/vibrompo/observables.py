"""Reduced states, populations, non-classicality and non-Markovianity
diagnostics, optical coherence and absorption lineshapes.

Every extraction exploits the trace-extraction property of the operator
basis: tracing out an oscillator is the same as fixing its physical index
to 0 and multiplying by sqrt(N_b).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import build_basis
from .model import NetworkSpec, TWO_PI_C
from .mpo import VibronicMPOState


def reduced_electronic(state: VibronicMPOState) -> np.ndarray:
    """Electronic density matrix: per block, the chain product of the
    identity-coefficient matrices times prod(sqrt(N_b))."""
    ne = state.n_electronic
    scale = float(np.prod(state._phys_roots))
    rho = np.zeros((ne, ne), dtype=complex)
    for (m, n), blk in state.stored_items():
        env = np.ones((1,), dtype=complex)
        for t in blk.tensors:
            env = env @ t[:, 0, :]
        rho[m, n] = env[0] * scale
        if m != n:
            rho[n, m] = np.conj(rho[m, n])
    return rho


def populations(state: VibronicMPOState) -> np.ndarray:
    return reduced_electronic(state).diagonal().real.copy()


def reduced_oscillator(state: VibronicMPOState, osc_index: int) -> np.ndarray:
    """Density matrix of one oscillator: contract the diagonal blocks with
    every other physical index fixed to the identity coefficient."""
    m_tot = len(state.spec.modes)
    if not 0 <= osc_index < m_tot:
        raise IndexError(f"oscillator index {osc_index} outside 0..{m_tot - 1}")
    nb = state.spec.modes[osc_index].n_levels
    scale = float(np.prod(np.delete(state._phys_roots, osc_index)))
    coeffs = np.zeros(nb * nb, dtype=complex)
    for n in range(state.n_electronic):
        blk = state.blocks[(n, n)]
        left = np.ones((1,), dtype=complex)
        for t in blk.tensors[:osc_index]:
            left = left @ t[:, 0, :]
        right = np.ones((1,), dtype=complex)
        for t in reversed(blk.tensors[osc_index + 1 :]):
            right = t[:, 0, :] @ right
        coeffs += np.einsum("a,ajb,b->j", left, blk.tensors[osc_index], right)
    return build_basis(nb).reconstruct(coeffs * scale)


def occupation_moments(state: VibronicMPOState, osc_index: int) -> tuple[float, float]:
    """First and second moments of the number operator of one oscillator."""
    rho = reduced_oscillator(state, osc_index)
    n = np.arange(rho.shape[0], dtype=float)
    p = rho.diagonal().real
    return float(np.dot(n, p)), float(np.dot(n * n, p))


def mandel_parameter(
    state: VibronicMPOState, site_index: int, mode_slot: int
) -> float | None:
    """Occupation-statistics witness (variance/mean - 1) for the given
    mode; None near vacuum where the ratio is undefined."""
    spec = state.spec
    if not 0 <= site_index < spec.n_sites:
        raise IndexError(f"site index {site_index} outside 0..{spec.n_sites - 1}")
    if not 0 <= mode_slot < len(spec.modes_per_site[site_index]):
        raise IndexError(f"mode slot {mode_slot} not present on site {site_index}")
    osc = sum(len(ms) for ms in spec.modes_per_site[:site_index]) + mode_slot
    n1, n2 = occupation_moments(state, osc)
    if n1 < 1e-12:
        return None
    return (n2 - n1 * n1) / n1 - 1.0


def trace_distance(rho1: np.ndarray, rho2: np.ndarray, herm_tol: float = 1e-8) -> float:
    """Half the trace norm of the difference, via the eigenvalues of the
    Hermitian difference matrix."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape or rho1.ndim != 2 or rho1.shape[0] != rho1.shape[1]:
        raise ValueError(f"need equal square matrices, got {rho1.shape} and {rho2.shape}")
    for name, r in (("rho1", rho1), ("rho2", rho2)):
        dev = np.abs(r - r.conj().T).max()
        if dev > herm_tol:
            raise ValueError(f"{name} is not Hermitian within {herm_tol:g} (dev {dev:.3e})")
    diff = rho1 - rho2
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-stamped observable records plus the per-step error bookkeeping."""

    spec: NetworkSpec
    times: list[float] = field(default_factory=list)
    populations: list[np.ndarray] = field(default_factory=list)
    rho_e: list[np.ndarray] = field(default_factory=list)
    mode_occupations: list[np.ndarray] = field(default_factory=list)
    mode_mandel: list[np.ndarray] = field(default_factory=list)
    coherence: list[complex] = field(default_factory=list)
    extras: dict[str, list[float]] = field(default_factory=dict)
    bound_increments: list[float] = field(default_factory=list)
    max_bond: list[int] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def record(
        self,
        t: float,
        state: VibronicMPOState,
        rho_e: bool = False,
        modes: bool = False,
        dipoles=None,
        observers=None,
    ) -> None:
        self.times.append(float(t))
        re = reduced_electronic(state)
        self.populations.append(re.diagonal().real.copy())
        if rho_e:
            self.rho_e.append(re)
        if modes:
            occ, mandel = [], []
            for osc in range(len(state.spec.modes)):
                n1, n2 = occupation_moments(state, osc)
                occ.append(n1)
                mandel.append(np.nan if n1 < 1e-12 else (n2 - n1 * n1) / n1 - 1.0)
            self.mode_occupations.append(np.array(occ))
            self.mode_mandel.append(np.array(mandel))
        if dipoles is not None:
            g = state.spec.ground_index
            if g is None:
                raise ValueError("optical coherence needs a ground level in the spec")
            mu = np.asarray(dipoles, dtype=float)
            self.coherence.append(complex(np.dot(mu, re[: state.spec.n_sites, g])))
        if observers:
            for name, fn in observers:
                self.extras.setdefault(name, []).append(float(fn(state)))

    def record_step(self, bound_increment: float, max_bond: int, wall_ms: float) -> None:
        self.bound_increments.append(float(bound_increment))
        self.max_bond.append(int(max_bond))
        self.wall_ms.append(float(wall_ms))

    @property
    def cumulative_bound(self) -> np.ndarray:
        return np.cumsum(self.bound_increments) if self.bound_increments else np.zeros(0)

    def population_array(self) -> np.ndarray:
        return np.array(self.populations)

    def to_meta(self) -> dict:
        """JSON-safe dump used by checkpoints to carry partial records."""
        return {
            "times": list(map(float, self.times)),
            "populations": [list(map(float, p)) for p in self.populations],
            "rho_e": [
                [[float(v.real), float(v.imag)] for v in r.ravel()] for r in self.rho_e
            ],
            "mode_occupations": [list(map(float, o)) for o in self.mode_occupations],
            "mode_mandel": [list(map(float, o)) for o in self.mode_mandel],
            "coherence": [[float(c.real), float(c.imag)] for c in self.coherence],
            "extras": {k: list(map(float, v)) for k, v in self.extras.items()},
            "bound_increments": list(map(float, self.bound_increments)),
            "max_bond": list(map(int, self.max_bond)),
            "wall_ms": list(map(float, self.wall_ms)),
        }

    @staticmethod
    def from_meta(spec: NetworkSpec, meta: dict) -> "Trajectory":
        ne = spec.n_electronic
        traj = Trajectory(spec=spec)
        traj.times = [float(t) for t in meta["times"]]
        traj.populations = [np.array(p) for p in meta["populations"]]
        traj.rho_e = [
            np.array([complex(re, im) for re, im in r]).reshape(ne, ne)
            for r in meta["rho_e"]
        ]
        traj.mode_occupations = [np.array(o) for o in meta["mode_occupations"]]
        traj.mode_mandel = [np.array(o) for o in meta["mode_mandel"]]
        traj.coherence = [complex(re, im) for re, im in meta["coherence"]]
        traj.extras = {k: list(v) for k, v in meta["extras"].items()}
        traj.bound_increments = [float(b) for b in meta["bound_increments"]]
        traj.max_bond = [int(b) for b in meta["max_bond"]]
        traj.wall_ms = [float(w) for w in meta["wall_ms"]]
        return traj


# ---------------------------------------------------------------------------

@dataclass
class AbsorptionResult:
    times: np.ndarray
    coherence: np.ndarray
    omega_cm1: np.ndarray
    wavelength_nm: np.ndarray
    intensity: np.ndarray
    trajectory: Trajectory


def lineshape_from_coherence(
    times_fs: np.ndarray,
    coherence: np.ndarray,
    omega_cm1: np.ndarray,
    window: str = "none",
) -> np.ndarray:
    """Half-range Fourier transform Re int_0^T C(t) exp(i w t) w(t) dt on an
    arbitrary frequency grid (trapezoid in t), normalized to unit peak."""
    t = np.asarray(times_fs, dtype=float)
    c = np.asarray(coherence, dtype=complex)
    if window == "none":
        wt = np.ones_like(t)
    elif window == "hann":
        wt = 0.5 * (1.0 + np.cos(np.pi * t / t[-1]))
    else:
        raise ValueError(f"unknown window {window!r}")
    weights = np.gradient(t)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    phases = np.exp(1j * np.outer(omega_cm1 * TWO_PI_C, t))
    intensity = (phases @ (c * wt * weights)).real
    peak = np.abs(intensity).max()
    return intensity / peak if peak > 0 else intensity


def absorption_spectrum(
    spec: NetworkSpec,
    dipoles,
    t_max: float,
    dt: float,
    chi: int,
    tau: float = 1e-12,
    sample_stride: int = 1,
    omega_grid: np.ndarray | None = None,
    window: str = "none",
    workers: int = 1,
) -> AbsorptionResult:
    """Optical response: start from dipole-weighted optical coherences with
    thermal oscillators, evolve, and Fourier transform.

    The initial condition is a linear-response object (trace zero), so the
    trace guard is disabled for this run.
    """
    if not spec.has_ground_state:
        raise ValueError("absorption needs has_ground_state=True in the spec")
    mu = np.asarray(dipoles, dtype=float)
    if mu.shape != (spec.n_sites,):
        raise ValueError(f"need one dipole amplitude per site, got shape {mu.shape}")
    from .mpo import init_product_state
    from .propagator import evolve  # late import: propagator depends on this module

    ne = spec.n_electronic
    g = spec.ground_index
    rho0 = np.zeros((ne, ne), dtype=complex)
    rho0[: spec.n_sites, g] = mu
    state = init_product_state(spec, rho0)
    traj = evolve(
        state,
        t_max,
        dt,
        chi,
        tau=tau,
        sample_stride=sample_stride,
        trace_guard=None,
        workers=workers,
        dipoles=mu,
    )
    times = np.array(traj.times)
    coherence = np.array(traj.coherence)
    if omega_grid is None:
        center = float(np.mean(spec.site_energies))
        omega_grid = np.linspace(center - 4000.0, center + 4000.0, 4001)
    intensity = lineshape_from_coherence(times, coherence, omega_grid, window)
    with np.errstate(divide="ignore"):
        wavelength = np.where(omega_grid > 0, 1e7 / np.where(omega_grid > 0, omega_grid, 1.0), np.inf)
    return AbsorptionResult(times, coherence, omega_grid, wavelength, intensity, traj)
