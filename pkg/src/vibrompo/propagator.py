"""Trotterized propagation of the block MPO state.

One step applies (i) the exact local factor per oscillator, obtained by
exponentiating the combined generator of free vibration, displacement
coupling and thermal damping on that oscillator's operator space, and
(ii) the electronic mixing step, which sums rescaled blocks and caps the
grown bond dimensions by compression, booking the truncation bound into
the state's error ledger.

The local generator depends on the electronic pair (m, n) only through
whether the oscillator's site matches the row index, the column index,
both or neither ("sidedness"), so four channel matrices per mode species
cover every block.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import build_basis
from .model import ModeSpec, NetworkSpec, TWO_PI_C, thermal_occupancy
from .mpo import ConditionalMPO, VibronicMPOState, add, add_many, compress
from . import observables as obs

VARIANTS = ("both", "left", "right", "neither")


class TraceGuardError(RuntimeError):
    """Raised when the state trace drifts past the configured guard."""


def annihilation(n_levels: int) -> np.ndarray:
    a = np.zeros((n_levels, n_levels), dtype=complex)
    ks = np.arange(1, n_levels)
    a[ks - 1, ks] = np.sqrt(ks)
    return a


@dataclass(frozen=True)
class LocalChannelTable:
    """Per-oscillator channel matrices W = exp(dt * G) in the operator
    basis, one per sidedness variant, plus the site map used to pick the
    variant for a given block."""

    dt: float
    mode_sites: tuple[int, ...]
    channels: tuple[dict[str, np.ndarray], ...]

    def variant_for(self, osc: int, m: int, n: int) -> str:
        site = self.mode_sites[osc]
        if site == m:
            return "both" if m == n else "left"
        if site == n:
            return "right"
        return "neither"


@dataclass(frozen=True)
class ElectronicStep:
    """One-step electronic propagator and the block mixing coefficients
    [U]_{m,k} [U]*_{n,l}; products smaller than tau are dropped."""

    dt: float
    u: np.ndarray
    tau: float

    def terms(self, m: int, n: int) -> list[tuple[complex, int, int]]:
        ne = self.u.shape[0]
        out = []
        for k in range(ne):
            um = self.u[m, k]
            if abs(um) == 0.0:
                continue
            for l in range(ne):
                c = um * np.conj(self.u[n, l])
                if abs(c) >= self.tau:
                    out.append((c, k, l))
        # largest first keeps intermediate truncation small; index tie-break
        # makes the accumulation order deterministic
        out.sort(key=lambda t: (-abs(t[0]), t[1], t[2]))
        return out


def single_mode_generator(mode: ModeSpec, left: bool, right: bool) -> np.ndarray:
    """Generator of one oscillator's dynamics on vectorized operators
    (column stacking): coherent part with optional displacement on either
    side, plus the thermal dissipator with the 2*gamma convention."""
    nb = mode.n_levels
    a = annihilation(nb)
    ad = a.conj().T
    num = ad @ a
    w = mode.omega * TWO_PI_C
    ident = np.eye(nb)

    def lmul(op):
        return np.kron(ident, op)

    def rmul(op):
        return np.kron(op.T, ident)

    disp = w * np.sqrt(mode.huang_rhys) * (a + ad)
    h_left = w * num + (disp if left else 0.0)
    h_right = w * num + (disp if right else 0.0)
    gen = -1j * (lmul(h_left) - rmul(h_right))
    if mode.gamma > 0:
        g2 = 2.0 * mode.gamma
        nbq = thermal_occupancy(mode.omega, mode.temperature)
        # truncated products throughout: a @ ad is not diag(n + 1) at the
        # top level, and using the analytic form would break trace balance
        gen += g2 * (nbq + 1) * (np.kron(a.conj(), a) - 0.5 * (lmul(num) + rmul(num)))
        if nbq > 0:
            aad = a @ ad
            gen += g2 * nbq * (np.kron(ad.conj(), ad) - 0.5 * (lmul(aad) + rmul(aad)))
    return gen


def _channel_matrix(mode: ModeSpec, dt: float, left: bool, right: bool) -> np.ndarray:
    basis = build_basis(mode.n_levels)
    w_vec = scipy.linalg.expm(dt * single_mode_generator(mode, left, right))
    nb = mode.n_levels

    def action(x):
        return (w_vec @ x.reshape(-1, order="F")).reshape(nb, nb, order="F")

    return basis.superoperator_matrix(action)


def build_local_channels(spec: NetworkSpec, dt: float) -> LocalChannelTable:
    """Exponentiate the local generators once per distinct mode species and
    sidedness variant."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    cache: dict[tuple, dict[str, np.ndarray]] = {}
    channels = []
    for mode in spec.modes:
        key = (mode.omega, mode.huang_rhys, mode.gamma, mode.temperature, mode.n_levels)
        if key not in cache:
            cache[key] = {
                "both": _channel_matrix(mode, dt, True, True),
                "left": _channel_matrix(mode, dt, True, False),
                "right": _channel_matrix(mode, dt, False, True),
                "neither": _channel_matrix(mode, dt, False, False),
            }
        channels.append(cache[key])
    return LocalChannelTable(dt, spec.mode_sites, tuple(channels))


def build_electronic_step(spec: NetworkSpec, dt: float, tau: float = 1e-12) -> ElectronicStep:
    from .model import build_electronic_hamiltonian

    h = build_electronic_hamiltonian(spec, angular=True)
    u = scipy.linalg.expm(-1j * dt * h)
    return ElectronicStep(dt, u, tau)


def apply_local_step(state: VibronicMPOState, table: LocalChannelTable) -> VibronicMPOState:
    """Apply every oscillator's exact channel to every stored block; bond
    dimensions are untouched and no compression error arises."""
    for (m, n), blk in state.stored_items():
        tensors = blk.tensors
        for i in range(len(tensors)):
            w = table.channels[i][table.variant_for(i, m, n)]
            tensors[i] = np.einsum("jk,akb->ajb", w, tensors[i])
    return state


def _mix_block(
    m: int,
    n: int,
    estep: ElectronicStep,
    inputs: dict[tuple[int, int], ConditionalMPO],
    chi: int,
    compress_mode: str,
    phys_dims: list[int],
) -> tuple[ConditionalMPO, float]:
    terms = estep.terms(m, n)
    if not terms:
        return ConditionalMPO.zero(phys_dims), 0.0
    if compress_mode == "sum":
        grown = add_many([inputs[(k, l)] for _, k, l in terms], [c for c, _, _ in terms])
        out, report = compress(grown, chi)
        return out, report.bound
    xi = 0.0
    c0, k0, l0 = terms[0]
    acc = inputs[(k0, l0)].scaled(c0)
    for c, k, l in terms[1:]:
        acc = add(acc, inputs[(k, l)], 1.0, c)
        acc, report = compress(acc, chi)
        xi += report.bound
    return acc, xi


def apply_electronic_step(
    state: VibronicMPOState,
    estep: ElectronicStep,
    chi: int,
    workers: int = 1,
    compress_mode: str = "pairwise",
) -> tuple[VibronicMPOState, float]:
    """Mix blocks with the electronic propagator coefficients, compressing
    after every pairwise sum (or once after a full sum when
    ``compress_mode='sum'``).  Returns the state and the step's error-bound
    increment, which is also booked into the ledger.

    Results are independent of ``workers``: each output block is an
    isolated, deterministically ordered accumulation.
    """
    if compress_mode not in ("pairwise", "sum"):
        raise ValueError(f"unknown compress_mode {compress_mode!r}")
    ne = state.n_electronic
    inputs: dict[tuple[int, int], ConditionalMPO] = {}
    for (m, n), blk in state.stored_items():
        inputs[(m, n)] = blk
        if m != n:
            inputs[(n, m)] = blk.adjoint()

    targets = sorted(state.blocks.keys())
    phys = state.phys_dims

    def work(target):
        m, n = target
        return _mix_block(m, n, estep, inputs, chi, compress_mode, phys)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, targets))
    else:
        results = [work(t) for t in targets]

    bound = 0.0
    new_blocks = {}
    for (m, n), (blk, xi) in zip(targets, results):
        new_blocks[(m, n)] = blk
        bound += xi * (1.0 if m == n else 2.0)
    state.blocks = new_blocks
    state.ledger.record(bound)
    return state, bound


def step(
    state: VibronicMPOState,
    table: LocalChannelTable,
    estep: ElectronicStep,
    chi: int,
    workers: int = 1,
    compress_mode: str = "pairwise",
) -> tuple[VibronicMPOState, float]:
    """One Trotter step: exact local factor, then electronic mixing."""
    apply_local_step(state, table)
    return apply_electronic_step(state, estep, chi, workers, compress_mode)


def evolve(
    state: VibronicMPOState,
    t_final: float,
    dt: float,
    chi: int,
    tau: float = 1e-12,
    sample_stride: int = 1,
    trace_guard: float | None = 1e-6,
    workers: int = 1,
    compress_mode: str = "pairwise",
    record_rho_e: bool = False,
    record_modes: bool = False,
    dipoles: np.ndarray | None = None,
    observers=None,
    checkpoint_path=None,
    checkpoint_stride: int = 0,
    start_step: int = 0,
    trajectory: "obs.Trajectory | None" = None,
) -> "obs.Trajectory":
    """Iterate steps up to t_final, sampling observables every
    ``sample_stride`` steps (plus the initial sample).

    ``dipoles`` switches on recording of the optical coherence (requires a
    ground level).  ``observers`` is an optional list of (name, fn) pairs;
    each fn maps the state to a float.  Aborts with TraceGuardError when
    |trace - trace(0)| exceeds ``trace_guard``.
    """
    spec = state.spec
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    table = build_local_channels(spec, dt)
    estep = build_electronic_step(spec, dt, tau)
    traj = trajectory if trajectory is not None else obs.Trajectory(spec=spec)
    trace0 = state.trace().real if trace_guard is not None else 0.0

    def sample(t_now):
        traj.record(
            t_now,
            state,
            rho_e=record_rho_e,
            modes=record_modes,
            dipoles=dipoles,
            observers=observers,
        )

    if start_step == 0:
        sample(0.0)
    for k in range(start_step, n_steps):
        t0 = time.perf_counter()
        _, bound = step(state, table, estep, chi, workers, compress_mode)
        wall_ms = (time.perf_counter() - t0) * 1e3
        traj.record_step(bound, state.max_bond(), wall_ms)
        if trace_guard is not None:
            drift = abs(state.trace().real - trace0)
            if drift > trace_guard:
                raise TraceGuardError(
                    f"trace drifted by {drift:.3e} (> {trace_guard:.3e}) at step {k + 1}"
                )
        if (k + 1) % sample_stride == 0 or k + 1 == n_steps:
            sample((k + 1) * dt)
        if checkpoint_path is not None and checkpoint_stride > 0:
            if (k + 1) % checkpoint_stride == 0 or k + 1 == n_steps:
                from .mpo import save_checkpoint

                save_checkpoint(state, checkpoint_path, step=k + 1, extra=traj.to_meta())
    return traj
