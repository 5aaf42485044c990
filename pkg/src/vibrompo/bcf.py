"""Environment correlation functions: damped-mode sets, model spectral
densities, and least-squares fitting of mode parameters to a target.

Conventions: spectral densities and frequencies are in cm^-1, times in fs,
damping rates in 1/fs.  Correlation functions carry cm^-2 amplitudes (the
omega^2 * s prefactor) with phases evaluated in rad/fs, matching the
bundled parameter table.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

from .model import KB_CM1_PER_K, ModeSpec, TWO_PI_C


def rate_to_wavenumber(rate_per_fs: float) -> float:
    """Express a rate (1/fs) as an angular-equivalent wavenumber (cm^-1)."""
    return rate_per_fs / TWO_PI_C


class QuadratureError(RuntimeError):
    """Raised when the correlation-function quadrature fails to settle."""


# ---------------------------------------------------------------------------
# spectral densities

@dataclass(frozen=True)
class OhmicGaussian:
    """Broad background: linear onset with a Gaussian envelope, normalized
    so that int J(w)/w dw equals ``reorganization`` exactly."""

    reorganization: float
    center: float
    width: float

    def value(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        pref = 2.0 / (np.sqrt(np.pi) * self.width * (1.0 + erf(self.center / self.width)))
        return pref * self.reorganization * w * np.exp(-(((w - self.center) / self.width) ** 2))

    def support_max(self) -> float:
        return self.center + 8.0 * self.width


@dataclass(frozen=True)
class AntisymmetricLorentzian:
    """Narrow underdamped-mode peak; int J(w)/w dw = center * huang_rhys."""

    center: float
    width: float
    huang_rhys: float

    def value(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        c, g, s = self.center, self.width, self.huang_rhys
        num = 4.0 * g * c * (c * c + g * g) * s / np.pi
        return num * w / (((w + c) ** 2 + g * g) * ((w - c) ** 2 + g * g))

    def support_max(self) -> float:
        # w^-3 tails decay slowly; push the cutoff far out so the dropped
        # tail weight is a <=1e-5 fraction of C(0)
        return max(20.0 * self.center, self.center + 300.0 * self.width)


@dataclass(frozen=True)
class TabulatedDensity:
    omegas: tuple
    values: tuple

    def value(self, omega) -> np.ndarray:
        return np.interp(np.asarray(omega, dtype=float), self.omegas, self.values, left=0.0, right=0.0)

    def support_max(self) -> float:
        return float(max(self.omegas))


@dataclass(frozen=True)
class CompositeDensity:
    parts: tuple

    def value(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        out = np.zeros_like(w)
        for p in self.parts:
            out = out + p.value(w)
        return out

    def support_max(self) -> float:
        return max(p.support_max() for p in self.parts)


def model_spectral_density(
    lambda_b: float = 500.0,
    omega_b: float = 700.0,
    gamma_b: float = 500.0,
    omega_u: float = 1500.0,
    gamma_u_per_fs: float = 1.0 / 500.0,
    s_u: float = 0.1,
) -> CompositeDensity:
    """The background-plus-narrow-peak density the bundled mode table was
    fitted to."""
    return CompositeDensity(
        (
            OhmicGaussian(lambda_b, omega_b, gamma_b),
            AntisymmetricLorentzian(omega_u, rate_to_wavenumber(gamma_u_per_fs), s_u),
        )
    )


def spectral_density(sd, omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("spectral densities are defined for omega > 0")
    return sd.value(w)


def reorganization_energy(sd, n_points: int = 1 << 16) -> float:
    w, jw, dw = sd_grid(sd, n_points)
    return float(np.trapezoid(jw / w, dx=dw))


def sd_grid(sd, n_points: int = 1 << 14) -> tuple[np.ndarray, np.ndarray, float]:
    """Uniform midpoint grid over the density's support, for vectorized
    quadrature."""
    w_max = sd.support_max()
    dw = w_max / n_points
    w = (np.arange(n_points) + 0.5) * dw
    return w, sd.value(w), dw


# ---------------------------------------------------------------------------
# correlation functions

def _mode_bcf(omegas, gammas, huang_rhys, temperatures, t_fs) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_fs, dtype=float))
    out = np.zeros(t.shape, dtype=complex)
    for w_cm, gam, s, temp in zip(omegas, gammas, huang_rhys, temperatures):
        wr = w_cm * TWO_PI_C
        coth = 1.0 if temp == 0 else 1.0 / np.tanh(w_cm / (KB_CM1_PER_K * temp) / 2.0)
        amp = w_cm * w_cm * s / 2.0
        decay = np.exp(-gam * t)
        out += amp * (coth + 1.0) * np.exp(-1j * wr * t) * decay
        out += amp * (coth - 1.0) * np.exp(+1j * wr * t) * decay
    return out if np.ndim(t_fs) else out[0]


def lindblad_bcf(modes, t_fs) -> np.ndarray:
    """Correlation function generated by a set of damped thermal modes:
    sum over modes and +/- branches of (w^2 s / 2)(coth(bw/2) +/- 1)
    exp(-/+ i w t - gamma t)."""
    return _mode_bcf(
        [m.omega for m in modes],
        [m.gamma for m in modes],
        [m.huang_rhys for m in modes],
        [m.temperature for m in modes],
        t_fs,
    )


def target_bcf(
    sd,
    temperature: float,
    t_fs,
    rel_tol: float = 1e-6,
    max_points: int = 1 << 18,
) -> np.ndarray:
    """Correlation function of a continuous density at the given bath
    temperature: int dw J(w) [coth(bw/2) cos(wt) - i sin(wt)].

    The quadrature grid is refined until successive evaluations agree to
    ``rel_tol`` of C(0); failure to settle raises QuadratureError.
    Composite densities integrate part by part, each on its own support.
    """
    if isinstance(sd, CompositeDensity):
        parts = [
            target_bcf(p, temperature, t_fs, rel_tol=rel_tol, max_points=max_points)
            for p in sd.parts
        ]
        return sum(parts)
    t = np.atleast_1d(np.asarray(t_fs, dtype=float))
    prev = None
    n = 1 << 13
    while n <= max_points:
        w, jw, dw = sd_grid(sd, n)
        if temperature > 0:
            coth = 1.0 / np.tanh(w / (KB_CM1_PER_K * temperature) / 2.0)
        else:
            coth = np.ones_like(w)
        c0 = float(np.sum(jw * coth) * dw)
        out = np.empty(t.shape, dtype=complex)
        wr = w * TWO_PI_C
        chunk = max(1, int(2e6) // n)
        for lo in range(0, len(t), chunk):
            phase = np.outer(t[lo : lo + chunk], wr)
            out[lo : lo + chunk] = (
                (jw * coth) @ np.cos(phase).T - 1j * (jw @ np.sin(phase).T)
            ) * dw
        if prev is not None and np.abs(out - prev).max() <= rel_tol * abs(c0):
            return out if np.ndim(t_fs) else out[0]
        prev = out
        n *= 2
    raise QuadratureError(
        f"correlation quadrature did not settle to {rel_tol:g} of C(0) "
        f"within {max_points} points"
    )


# ---------------------------------------------------------------------------
# mode fitting

@dataclass
class ModeFit:
    """Damped-mode parameters fitted to a target correlation function.

    ``residual`` is the relative energy sum|C_fit - C_target|^2 /
    sum|C_target|^2 over the fit grid (0 for an exact representation).
    """

    omegas: np.ndarray
    gammas: np.ndarray
    huang_rhys: np.ndarray
    temperatures: np.ndarray
    residual: float = np.nan
    flagged: bool = False

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.huang_rhys = np.asarray(self.huang_rhys, dtype=float)
        self.temperatures = np.asarray(self.temperatures, dtype=float)
        if not (
            len(self.omegas) == len(self.gammas) == len(self.huang_rhys) == len(self.temperatures)
        ):
            raise ValueError("parameter arrays must have equal length")
        if np.any(self.omegas <= 0) or np.any(self.gammas < 0):
            raise ValueError("fitted modes need omega > 0 and gamma >= 0")
        if np.any(self.huang_rhys < 0) or np.any(self.temperatures < 0):
            raise ValueError("fitted modes need s >= 0 and T >= 0")

    @property
    def q_count(self) -> int:
        return len(self.omegas)

    def to_mode_specs(self, n_levels) -> list[ModeSpec]:
        if isinstance(n_levels, int):
            n_levels = [n_levels] * self.q_count
        return [
            ModeSpec(float(w), float(s), float(g), float(t), int(nb))
            for w, g, s, t, nb in zip(
                self.omegas, self.gammas, self.huang_rhys, self.temperatures, n_levels
            )
        ]

    def bcf(self, t_fs) -> np.ndarray:
        return _mode_bcf(self.omegas, self.gammas, self.huang_rhys, self.temperatures, t_fs)


def _pack(fit: ModeFit) -> np.ndarray:
    return np.concatenate([fit.omegas, fit.gammas, fit.huang_rhys, fit.temperatures])


def _unpack(x: np.ndarray, q: int) -> ModeFit:
    return ModeFit(x[:q], x[q : 2 * q], x[2 * q : 3 * q], x[3 * q :])


def default_initial_fit(q_count: int) -> ModeFit:
    """Deterministic starting point: modes spread over the vibrational
    window with mild damping at room temperature."""
    omegas = np.linspace(150.0, 1650.0, q_count)
    return ModeFit(
        omegas,
        np.full(q_count, 0.01),
        np.full(q_count, 0.05),
        np.full(q_count, 300.0),
    )


def fit_modes(
    times_fs: np.ndarray,
    target: np.ndarray,
    q_count: int,
    init: ModeFit | None = None,
    bounds: tuple | None = None,
    max_nfev: int = 4000,
    residual_ceiling: float | None = None,
) -> ModeFit:
    """Box-constrained least squares over (omega, gamma, s, T) per mode.

    Deterministic for a fixed init.  ``residual_ceiling``, when given, only
    flags (via the returned residual vs the ceiling; no exception) whether
    the fit is acceptable -- callers decide what to do with a poor fit.
    """
    t = np.asarray(times_fs, dtype=float)
    c_target = np.asarray(target, dtype=complex)
    if t.shape != c_target.shape:
        raise ValueError("times and target must have matching shapes")
    if q_count < 1:
        raise ValueError("q_count must be >= 1")
    if init is None:
        init = default_initial_fit(q_count)
    if init.q_count != q_count:
        raise ValueError(f"init has {init.q_count} modes, expected {q_count}")
    if bounds is None:
        lo = np.concatenate([
            np.full(q_count, 1.0),
            np.full(q_count, 1e-6),
            np.zeros(q_count),
            np.zeros(q_count),
        ])
        hi = np.concatenate([
            np.full(q_count, 4000.0),
            np.full(q_count, 1.0),
            np.full(q_count, 10.0),
            np.full(q_count, 1000.0),
        ])
        bounds = (lo, hi)

    scale = float(np.sqrt(np.sum(np.abs(c_target) ** 2)))
    if scale == 0.0:
        raise ValueError("target correlation function is identically zero")

    def residuals(x):
        fit = _unpack(x, q_count)
        diff = (fit.bcf(t) - c_target) / scale
        return np.concatenate([diff.real, diff.imag])

    x0 = np.clip(_pack(init), bounds[0], bounds[1])
    sol = least_squares(residuals, x0, bounds=bounds, method="trf", max_nfev=max_nfev)
    out = _unpack(sol.x, q_count)
    out.residual = float(np.sum(sol.fun**2))
    if residual_ceiling is not None and out.residual > residual_ceiling:
        out.flagged = True
    return out


# ---------------------------------------------------------------------------
# mode tables (the bundled fit ships in exactly this format)

TABLE_HEADER = "q omega_cm1 gamma_inv_fs huang_rhys T_K"


def write_mode_table(path, fit: ModeFit) -> None:
    lines = ["# " + TABLE_HEADER]
    for q in range(fit.q_count):
        lines.append(
            f"{q + 1} {fit.omegas[q]:.6g} {1.0 / fit.gammas[q]:.6g} "
            f"{fit.huang_rhys[q]:.6g} {fit.temperatures[q]:.6g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mode_table(path_or_file) -> ModeFit:
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file) as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"mode table rows need 5 columns, got {line!r}")
        rows.append([float(p) for p in parts[1:]])
    arr = np.array(rows)
    return ModeFit(arr[:, 0], 1.0 / arr[:, 1], arr[:, 2], arr[:, 3])


def load_bundled_fit() -> ModeFit:
    """The 21-mode parameter set distributed with the package (a valid,
    non-unique fit of the model spectral density at 300 K)."""
    ref = resources.files("vibrompo").joinpath("data/lindblad_fit_modes.txt")
    with ref.open() as fh:
        return read_mode_table(fh)
