"""Chain-factorized (matrix product) storage of conditional vibrational
operators, and the block-structured vibronic density operator built from
them.

A conditional operator O is stored as M tensors A_i of shape
(d_i, N_b_i^2, d_{i+1}) with d_1 = d_{M+1} = 1; the coefficient of the
basis string (j_1 .. j_M) is the matrix product A_1[j_1] .. A_M[j_M].
Because the single-oscillator basis is orthonormal, the coefficient tensor
carries the full Hilbert-Schmidt geometry: Frobenius norms and inner
products of operators are plain l2 quantities of the coefficients and can
be evaluated by transfer contraction without densifying.

The full density operator keeps one conditional operator per electronic
pair (m, n); only the m <= n triangle is stored and the lower triangle is
materialized as the adjoint (legal because all basis elements are
Hermitian, so adjoint = conjugate coefficients).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .basis import OperatorBasis, build_basis, thermal_coefficients
from .model import NetworkSpec

# Singular values below NOISE_FLOOR * sigma_max are always discarded; they
# carry no information and would otherwise inflate ranks with noise.
NOISE_FLOOR = 1e-14


@dataclass(frozen=True)
class CompressionReport:
    """Truncation record of one compression sweep.

    per_bond[i] is the sum of discarded squared singular values at interior
    bond i; the squared Frobenius distance between input and output is
    bounded by 2 * sum(per_bond).
    """

    per_bond: np.ndarray

    @property
    def bound(self) -> float:
        return 2.0 * float(self.per_bond.sum())


class ConditionalMPO:
    """One conditional vibrational operator as a tensor chain."""

    __slots__ = ("tensors",)

    def __init__(self, tensors: list[np.ndarray]):
        self.tensors = tensors

    # ---- constructors -------------------------------------------------
    @staticmethod
    def from_product(vectors: list[np.ndarray], weight: complex = 1.0) -> "ConditionalMPO":
        """Bond-1 chain from per-oscillator coefficient vectors."""
        tensors = [np.asarray(v, dtype=complex).reshape(1, -1, 1).copy() for v in vectors]
        tensors[0] = tensors[0] * complex(weight)
        return ConditionalMPO(tensors)

    @staticmethod
    def zero(phys_dims: list[int]) -> "ConditionalMPO":
        return ConditionalMPO([np.zeros((1, p, 1), dtype=complex) for p in phys_dims])

    def copy(self) -> "ConditionalMPO":
        return ConditionalMPO([t.copy() for t in self.tensors])

    # ---- structure -----------------------------------------------------
    @property
    def n_oscillators(self) -> int:
        return len(self.tensors)

    @property
    def phys_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.tensors)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        """Interior bond dimensions (length M - 1)."""
        return tuple(t.shape[2] for t in self.tensors[:-1])

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def is_zero(self) -> bool:
        return all(not t.any() for t in self.tensors)

    # ---- algebra -------------------------------------------------------
    def scaled(self, coeff: complex) -> "ConditionalMPO":
        out = [self.tensors[0] * complex(coeff)] + [t.copy() for t in self.tensors[1:]]
        return ConditionalMPO(out)

    def adjoint(self) -> "ConditionalMPO":
        """Adjoint operator; with a Hermitian basis this is elementwise
        conjugation of the coefficients."""
        return ConditionalMPO([t.conj() for t in self.tensors])

    def dense_coefficients(self) -> np.ndarray:
        """Full coefficient tensor, shape (p_1, .., p_M).  Small chains only."""
        out = self.tensors[0]  # (1, p, d)
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(-1, 0))
        return out[0, ..., 0] if out.ndim > 2 else out[0, :, 0]


def add(
    a: ConditionalMPO,
    b: ConditionalMPO,
    coeff_a: complex = 1.0,
    coeff_b: complex = 1.0,
) -> ConditionalMPO:
    """Direct sum: reconstructs to coeff_a * a + coeff_b * b exactly.

    Interior bond dimensions add; the boundary tensors are concatenated
    along their open bond.
    """
    if a.phys_dims != b.phys_dims:
        raise ValueError(f"physical dimensions differ: {a.phys_dims} vs {b.phys_dims}")
    m = a.n_oscillators
    ca, cb = complex(coeff_a), complex(coeff_b)
    if m == 1:
        return ConditionalMPO([ca * a.tensors[0] + cb * b.tensors[0]])
    out = []
    for i, (ta, tb) in enumerate(zip(a.tensors, b.tensors)):
        if i == 0:
            out.append(np.concatenate((ca * ta, cb * tb), axis=2))
        elif i == m - 1:
            out.append(np.concatenate((ta, tb), axis=0))
        else:
            la, p, ra = ta.shape
            lb, _, rb = tb.shape
            t = np.zeros((la + lb, p, ra + rb), dtype=complex)
            t[:la, :, :ra] = ta
            t[la:, :, ra:] = tb
            out.append(t)
    return ConditionalMPO(out)


def add_many(mpos: list[ConditionalMPO], coeffs: list[complex]) -> ConditionalMPO:
    """Direct sum of several terms at once (no intermediate compression)."""
    if len(mpos) != len(coeffs) or not mpos:
        raise ValueError("need one coefficient per term")
    out = mpos[0].scaled(coeffs[0])
    for mpo, c in zip(mpos[1:], coeffs[1:]):
        out = add(out, mpo, 1.0, c)
    return out


def compress(x: ConditionalMPO, chi: int) -> tuple[ConditionalMPO, CompressionReport]:
    """Cap every interior bond at chi via a QR orthogonalization sweep
    followed by a truncating SVD sweep.

    The report carries the discarded weight per bond; the guaranteed bound
    on the squared Frobenius error is 2 * sum(per_bond).
    """
    if chi < 1:
        raise ValueError(f"chi must be >= 1 (got {chi})")
    m = x.n_oscillators
    eps = np.zeros(max(m - 1, 0))
    if m == 1:
        return x.copy(), CompressionReport(eps)

    tensors = list(x.tensors)
    # left-to-right QR: exact, leaves the chain left-orthogonal
    for i in range(m - 1):
        dl, p, dr = tensors[i].shape
        q, r = np.linalg.qr(tensors[i].reshape(dl * p, dr))
        k = q.shape[1]
        tensors[i] = q.reshape(dl, p, k)
        tensors[i + 1] = np.tensordot(r, tensors[i + 1], axes=(1, 0))
    # right-to-left truncating SVD
    for i in range(m - 1, 0, -1):
        dl, p, dr = tensors[i].shape
        u, s, vh = np.linalg.svd(tensors[i].reshape(dl, p * dr), full_matrices=False)
        keep = int(min(chi, len(s)))
        if len(s) and s[0] > 0.0:
            above_noise = int(np.count_nonzero(s > NOISE_FLOOR * s[0]))
            keep = min(keep, max(above_noise, 1))
        eps[i - 1] = float(np.square(s[keep:]).sum())
        tensors[i] = vh[:keep].reshape(keep, p, dr)
        carry = u[:, :keep] * s[:keep]
        tensors[i - 1] = np.tensordot(tensors[i - 1], carry, axes=(2, 0))
    return ConditionalMPO(tensors), CompressionReport(eps)


def inner(a: ConditionalMPO, b: ConditionalMPO) -> complex:
    """Hilbert-Schmidt inner product Tr(a^dag b) by transfer contraction."""
    if a.phys_dims != b.phys_dims:
        raise ValueError(f"physical dimensions differ: {a.phys_dims} vs {b.phys_dims}")
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        # env[ra, rb] , conj(ta)[ra, p, ra'] , tb[rb, p, rb'] -> env'[ra', rb']
        tmp = np.tensordot(env, ta.conj(), axes=(0, 0))  # (rb, p, ra')
        env = np.tensordot(tmp, tb, axes=([0, 1], [0, 1]))  # (ra', rb')
    return complex(env[0, 0])


def frobenius_norm(x: ConditionalMPO) -> float:
    return float(np.sqrt(max(inner(x, x).real, 0.0)))


def block_trace(x: ConditionalMPO, phys_roots: np.ndarray) -> complex:
    """Trace of the reconstructed operator: prod(sqrt(N_b_i)) times the
    chain product of the identity-coefficient matrices."""
    env = np.ones((1,), dtype=complex)
    for t in x.tensors:
        env = env @ t[:, 0, :]
    return complex(env[0]) * float(np.prod(phys_roots))


@dataclass
class ErrorLedger:
    """Per-step compression-error bound increments and their running sum."""

    increments: list[float] = field(default_factory=list)
    total: float = 0.0

    def record(self, bound_increment: float) -> None:
        self.increments.append(float(bound_increment))
        self.total += float(bound_increment)

    def copy(self) -> "ErrorLedger":
        return ErrorLedger(list(self.increments), self.total)


class VibronicMPOState:
    """Block-structured vibronic density operator.

    ``blocks[(m, n)]`` with m <= n holds the conditional operator for the
    electronic dyad |m><n|; (n, m) blocks are served as adjoints.  Index
    ``spec.ground_index`` (the last electronic index) is the optical ground
    level when the spec carries one.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        blocks: dict[tuple[int, int], ConditionalMPO],
        ledger: ErrorLedger | None = None,
    ):
        self.spec = spec
        self.blocks = blocks
        self.ledger = ledger if ledger is not None else ErrorLedger()
        self.bases: tuple[OperatorBasis, ...] = tuple(
            build_basis(m.n_levels) for m in spec.modes
        )
        self._phys_roots = np.sqrt([m.n_levels for m in spec.modes])

    # ---- access ---------------------------------------------------------
    @property
    def n_electronic(self) -> int:
        return self.spec.n_electronic

    @property
    def phys_dims(self) -> list[int]:
        return [m.n_levels ** 2 for m in self.spec.modes]

    def block(self, m: int, n: int) -> ConditionalMPO:
        if m <= n:
            return self.blocks[(m, n)]
        return self.blocks[(n, m)].adjoint()

    def stored_items(self):
        return self.blocks.items()

    def max_bond(self) -> int:
        return max(b.max_bond for b in self.blocks.values())

    def copy(self) -> "VibronicMPOState":
        return VibronicMPOState(
            self.spec,
            {k: v.copy() for k, v in self.blocks.items()},
            self.ledger.copy(),
        )

    # ---- scalars ----------------------------------------------------------
    def trace(self) -> complex:
        out = 0.0 + 0.0j
        for n in range(self.n_electronic):
            out += block_trace(self.blocks[(n, n)], self._phys_roots)
        return out

    def scale(self, coeff: complex) -> None:
        for b in self.blocks.values():
            b.tensors[0] *= complex(coeff)

    def distance_squared(self, other: "VibronicMPOState") -> float:
        """Squared Frobenius distance between full density operators;
        off-diagonal blocks count twice (adjoint closure)."""
        out = 0.0
        for (m, n), mine in self.blocks.items():
            theirs = other.blocks[(m, n)]
            d2 = (
                inner(mine, mine).real
                + inner(theirs, theirs).real
                - 2.0 * inner(mine, theirs).real
            )
            out += max(d2, 0.0) * (1.0 if m == n else 2.0)
        return out

    def norm_squared(self) -> float:
        out = 0.0
        for (m, n), b in self.blocks.items():
            out += inner(b, b).real * (1.0 if m == n else 2.0)
        return out


def init_product_state(
    spec: NetworkSpec,
    init_site: int | np.ndarray,
    mode_temperatures: list[float] | None = None,
) -> VibronicMPOState:
    """Product initial state: an electronic matrix (or a single populated
    site) times independent thermal oscillators.

    ``init_site`` is a 0-based electronic index or a full density matrix on
    the electronic space.  ``mode_temperatures`` optionally overrides the
    initial oscillator temperatures (the reservoirs keep the spec values),
    which is how relaxation from a hot or cold start is prepared.
    """
    ne = spec.n_electronic
    if isinstance(init_site, (int, np.integer)):
        if not 0 <= int(init_site) < ne:
            raise ValueError(f"init site {init_site} outside 0..{ne - 1}")
        rho_e = np.zeros((ne, ne), dtype=complex)
        rho_e[int(init_site), int(init_site)] = 1.0
    else:
        rho_e = np.asarray(init_site, dtype=complex)
        if rho_e.shape != (ne, ne):
            raise ValueError(f"electronic matrix must be {ne}x{ne}, got {rho_e.shape}")

    modes = spec.modes
    if mode_temperatures is not None and len(mode_temperatures) != len(modes):
        raise ValueError("mode_temperatures must list one value per oscillator")
    thermal_vecs = []
    for i, mode in enumerate(modes):
        t_init = None if mode_temperatures is None else mode_temperatures[i]
        thermal_vecs.append(thermal_coefficients(mode, build_basis(mode.n_levels), t_init))

    blocks: dict[tuple[int, int], ConditionalMPO] = {}
    for m in range(ne):
        for n in range(m, ne):
            w = rho_e[m, n]
            if w == 0:
                blocks[(m, n)] = ConditionalMPO.zero([len(v) for v in thermal_vecs])
            else:
                blocks[(m, n)] = ConditionalMPO.from_product(thermal_vecs, w)
    return VibronicMPOState(spec, blocks)


# ---- checkpointing --------------------------------------------------------

def save_checkpoint(state: VibronicMPOState, path, step: int = 0, extra: dict | None = None) -> None:
    """Self-describing archive: spec hash, timestamp, all chain tensors and
    the error ledger.  Arrays round-trip exactly (lossless float64)."""
    arrays: dict[str, np.ndarray] = {}
    keys = []
    for (m, n), blk in sorted(state.blocks.items()):
        keys.append([m, n, blk.n_oscillators])
        for i, t in enumerate(blk.tensors):
            arrays[f"block_{m}_{n}_osc{i}"] = t
    meta = {
        "format": "vibrompo-checkpoint-1",
        "spec_fingerprint": state.spec.fingerprint(),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "step": int(step),
        "extra": extra or {},
    }
    arrays["block_index"] = np.array(keys, dtype=np.int64)
    arrays["ledger_increments"] = np.array(state.ledger.increments, dtype=float)
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, spec: NetworkSpec) -> tuple[VibronicMPOState, int, dict]:
    """Restore a state saved by :func:`save_checkpoint`; the spec must hash
    to the stored fingerprint."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta.get("format") != "vibrompo-checkpoint-1":
            raise ValueError("not a vibrompo checkpoint")
        if meta["spec_fingerprint"] != spec.fingerprint():
            raise ValueError("checkpoint was written for a different network spec")
        blocks = {}
        for m, n, nosc in data["block_index"]:
            tensors = [data[f"block_{m}_{n}_osc{i}"] for i in range(nosc)]
            blocks[(int(m), int(n))] = ConditionalMPO(tensors)
        ledger = ErrorLedger()
        for v in data["ledger_increments"]:
            ledger.record(float(v))
    state = VibronicMPOState(spec, blocks, ledger)
    return state, int(meta["step"]), meta.get("extra", {})
