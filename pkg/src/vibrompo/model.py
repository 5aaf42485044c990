"""Network definition: sites, couplings, local damped modes, and unit handling.

All user-facing quantities are given in spectroscopic units (cm^-1 for
energies and frequencies, K for temperatures, fs for times and 1/fs for
rates).  Internally every generator is assembled in angular units (rad/fs)
so that exp(-i*H*t) can be taken with t in fs directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# speed of light in cm/fs; omega[rad/fs] = TWO_PI_C * omega[cm^-1]
SPEED_OF_LIGHT_CM_FS = 2.99792458e-5
TWO_PI_C = 2.0 * np.pi * SPEED_OF_LIGHT_CM_FS
# Boltzmann constant in cm^-1 per K
KB_CM1_PER_K = 0.6950348


class ValidationError(ValueError):
    """Aggregate of every invariant violation found in a network spec."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ModeSpec:
    """One damped harmonic mode attached to a site.

    omega: vibrational frequency (cm^-1), > 0
    huang_rhys: dimensionless coupling strength s >= 0
    gamma: damping rate (1/fs), >= 0
    temperature: reservoir temperature (K), >= 0
    n_levels: Fock-space truncation, >= 2
    """

    omega: float
    huang_rhys: float
    gamma: float
    temperature: float
    n_levels: int

    def problems(self, label: str = "mode") -> list[str]:
        out = []
        if not self.omega > 0:
            out.append(f"{label}: omega must be > 0 (got {self.omega})")
        if self.huang_rhys < 0:
            out.append(f"{label}: huang_rhys must be >= 0 (got {self.huang_rhys})")
        if self.gamma < 0:
            out.append(f"{label}: gamma must be >= 0 (got {self.gamma})")
        if self.temperature < 0:
            out.append(f"{label}: temperature must be >= 0 (got {self.temperature})")
        if self.n_levels < 2:
            out.append(f"{label}: n_levels must be >= 2 (got {self.n_levels})")
        return out


@dataclass(frozen=True)
class NetworkSpec:
    """Vibronic network: N sites, symmetric couplings, Q local modes per site.

    ``modes_per_site`` holds one mode list per site (sites may differ).  When
    ``has_ground_state`` is set, an extra electronic level with zero energy,
    zero couplings and zero displacement is appended after the N excited
    sites; it is required for linear optical response.
    """

    site_energies: tuple[float, ...]
    couplings: np.ndarray
    modes_per_site: tuple[tuple[ModeSpec, ...], ...]
    has_ground_state: bool = False

    @staticmethod
    def create(
        site_energies,
        couplings,
        modes,
        has_ground_state: bool = False,
        modes_per_site=None,
    ) -> "NetworkSpec":
        """Build and validate a spec; ``modes`` is shared by all sites unless
        ``modes_per_site`` gives explicit per-site lists."""
        energies = tuple(float(e) for e in site_energies)
        n = len(energies)
        coup = np.array(couplings, dtype=float)
        if modes_per_site is None:
            per_site = tuple(tuple(modes) for _ in range(n))
        else:
            per_site = tuple(tuple(ms) for ms in modes_per_site)
        spec = NetworkSpec(energies, coup, per_site, has_ground_state)
        return validate_spec(spec)

    @property
    def n_sites(self) -> int:
        return len(self.site_energies)

    @property
    def n_electronic(self) -> int:
        """Electronic dimension including the optional ground level."""
        return self.n_sites + (1 if self.has_ground_state else 0)

    @property
    def ground_index(self) -> int | None:
        return self.n_sites if self.has_ground_state else None

    # Oscillators are flattened site-major: chain position i corresponds to
    # (site, q) = divmod-like ordering with all of a site's modes adjacent.
    @property
    def mode_sites(self) -> tuple[int, ...]:
        return tuple(
            site for site, ms in enumerate(self.modes_per_site) for _ in ms
        )

    @property
    def modes(self) -> tuple[ModeSpec, ...]:
        return tuple(m for ms in self.modes_per_site for m in ms)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def with_ground_state(self) -> "NetworkSpec":
        return self if self.has_ground_state else replace(self, has_ground_state=True)

    def fingerprint(self) -> str:
        """Stable hash of the physical content, used by checkpoints."""
        import hashlib

        h = hashlib.sha256()
        h.update(repr(self.site_energies).encode())
        h.update(np.ascontiguousarray(self.couplings).tobytes())
        h.update(repr(self.modes_per_site).encode())
        h.update(b"ground" if self.has_ground_state else b"noground")
        return h.hexdigest()


def validate_spec(spec: NetworkSpec) -> NetworkSpec:
    """Check every invariant, raising a ValidationError that lists all
    violations rather than stopping at the first."""
    problems: list[str] = []
    n = spec.n_sites
    if n < 1:
        problems.append("network must contain at least one site")
    coup = spec.couplings
    if coup.shape != (n, n):
        problems.append(f"couplings must be {n}x{n} (got {coup.shape})")
    else:
        if not np.isrealobj(coup):
            if np.abs(np.asarray(coup).imag).max() > 0:
                problems.append("couplings must be real")
        if not np.allclose(coup, coup.T, atol=1e-12, rtol=0):
            problems.append("couplings must be symmetric (J[m,n] == J[n,m])")
        if coup.size and np.abs(np.diag(coup)).max() > 0:
            problems.append("couplings must have zero diagonal")
    if len(spec.modes_per_site) != n:
        problems.append(
            f"modes_per_site must list {n} sites (got {len(spec.modes_per_site)})"
        )
    for site, ms in enumerate(spec.modes_per_site):
        for q, mode in enumerate(ms):
            problems.extend(mode.problems(f"site {site + 1} mode {q + 1}"))
    if problems:
        raise ValidationError(problems)
    return spec


def build_electronic_hamiltonian(spec: NetworkSpec, angular: bool = False) -> np.ndarray:
    """Electronic Hamiltonian: site energies on the diagonal, couplings off
    it, and an all-zero row/column for the ground level when present.

    Returned in cm^-1 by default, in rad/fs when ``angular`` is set.
    """
    ne = spec.n_electronic
    h = np.zeros((ne, ne), dtype=complex)
    n = spec.n_sites
    h[:n, :n] = spec.couplings
    h[np.arange(n), np.arange(n)] = spec.site_energies
    if angular:
        h = h * TWO_PI_C
    return h


def thermal_occupancy(omega: float, temperature: float) -> float:
    """Mean phonon number (exp(omega/kT) - 1)^-1; exactly 0 at T = 0."""
    if omega <= 0:
        raise ValueError(f"omega must be > 0 (got {omega})")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0 (got {temperature})")
    if temperature == 0:
        return 0.0
    return 1.0 / np.expm1(omega / (KB_CM1_PER_K * temperature))
