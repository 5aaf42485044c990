"""Declarative run configuration: one structured-text file drives a whole
job.  Parsing reports every problem found, not just the first."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .model import ModeSpec, NetworkSpec, ValidationError


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


JOB_KINDS = ("dynamics", "absorption", "bcf_fit", "oracle_compare")


@dataclass
class NumericsConfig:
    dt_fs: float = 0.5
    t_final_fs: float = 500.0
    chi: int = 12
    tau: float = 1e-12
    sample_stride: int = 1
    trace_guard: float | None = 1e-6
    compress_mode: str = "pairwise"


@dataclass
class SpectrumConfig:
    omega_min_cm1: float | None = None
    omega_max_cm1: float | None = None
    n_points: int = 4001
    window: str = "none"


@dataclass
class BcfFitConfig:
    q_count: int = 3
    t_max_fs: float = 500.0
    dt_fs: float = 1.0
    temperature_K: float = 300.0
    spectral_density: list = field(default_factory=list)
    init_table: str | None = None


@dataclass
class RunConfig:
    job: str
    network: NetworkSpec | None
    numerics: NumericsConfig
    output_dir: str
    seed: int = 0
    init_site: int | None = None
    init_exciton: str | None = None
    mode_temperatures_K: list | None = None
    dipoles: np.ndarray | None = None
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    bcf_fit: BcfFitConfig = field(default_factory=BcfFitConfig)
    record_electronic_matrix: bool = True
    record_modes: bool = False
    oracle_sample_dt_fs: float = 2.0
    oracle_rtol: float = 1e-9
    raw: dict = field(default_factory=dict)


def _parse_mode(entry: dict, label: str, problems: list[str]) -> ModeSpec | None:
    required = {"omega_cm1", "huang_rhys", "temperature_K", "n_levels"}
    missing = required - set(entry)
    if missing:
        problems.append(f"{label}: missing keys {sorted(missing)}")
        return None
    if ("lifetime_fs" in entry) == ("gamma_per_fs" in entry):
        problems.append(f"{label}: give exactly one of lifetime_fs or gamma_per_fs")
        return None
    if "lifetime_fs" in entry:
        lifetime = float(entry["lifetime_fs"])
        gamma = 0.0 if lifetime == float("inf") else 1.0 / lifetime
    else:
        gamma = float(entry["gamma_per_fs"])
    return ModeSpec(
        float(entry["omega_cm1"]),
        float(entry["huang_rhys"]),
        gamma,
        float(entry["temperature_K"]),
        int(entry["n_levels"]),
    )


def _parse_network(data: dict, problems: list[str]) -> NetworkSpec | None:
    if "site_energies_cm1" not in data:
        problems.append("network: missing site_energies_cm1")
        return None
    energies = [float(e) for e in data["site_energies_cm1"]]
    n = len(energies)
    if ("couplings_cm1" in data) and ("chain_coupling_cm1" in data):
        problems.append("network: give couplings_cm1 or chain_coupling_cm1, not both")
        return None
    if "couplings_cm1" in data:
        couplings = np.array(data["couplings_cm1"], dtype=float)
    elif "chain_coupling_cm1" in data:
        couplings = np.zeros((n, n))
        j = float(data["chain_coupling_cm1"])
        for k in range(n - 1):
            couplings[k, k + 1] = couplings[k + 1, k] = j
    else:
        couplings = np.zeros((n, n))

    modes = None
    per_site = None
    if "modes" in data:
        modes = []
        for q, entry in enumerate(data["modes"]):
            mode = _parse_mode(entry, f"network.modes[{q}]", problems)
            if mode is not None:
                modes.append(mode)
    if "modes_per_site" in data:
        per_site = []
        for s, ms in enumerate(data["modes_per_site"]):
            row = []
            for q, entry in enumerate(ms):
                mode = _parse_mode(entry, f"network.modes_per_site[{s}][{q}]", problems)
                if mode is not None:
                    row.append(mode)
            per_site.append(row)
    if modes is None and per_site is None:
        problems.append("network: need modes or modes_per_site")
        return None
    if problems:
        return None
    try:
        return NetworkSpec.create(
            energies,
            couplings,
            modes or [],
            has_ground_state=bool(data.get("has_ground_state", False)),
            modes_per_site=per_site,
        )
    except ValidationError as err:
        problems.extend(err.problems)
        return None


def _parse_spectral_density(entries, problems: list[str]):
    from . import bcf

    parts = []
    for i, entry in enumerate(entries):
        kind = entry.get("kind")
        label = f"bcf_fit.spectral_density[{i}]"
        try:
            if kind == "ohmic_gaussian":
                parts.append(
                    bcf.OhmicGaussian(
                        float(entry["reorganization_cm1"]),
                        float(entry["center_cm1"]),
                        float(entry["width_cm1"]),
                    )
                )
            elif kind == "antisym_lorentzian":
                if "lifetime_fs" in entry:
                    width = bcf.rate_to_wavenumber(1.0 / float(entry["lifetime_fs"]))
                else:
                    width = float(entry["width_cm1"])
                parts.append(
                    bcf.AntisymmetricLorentzian(
                        float(entry["center_cm1"]), width, float(entry["huang_rhys"])
                    )
                )
            elif kind == "tabulated":
                parts.append(
                    bcf.TabulatedDensity(
                        tuple(float(w) for w in entry["omega_cm1"]),
                        tuple(float(v) for v in entry["value_cm1"]),
                    )
                )
            else:
                problems.append(f"{label}: unknown kind {kind!r}")
        except KeyError as err:
            problems.append(f"{label}: missing key {err.args[0]}")
    if not parts:
        problems.append("bcf_fit: spectral_density has no usable parts")
        return None
    return bcf.CompositeDensity(tuple(parts)) if len(parts) > 1 else parts[0]


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(["configuration root must be a mapping"])
    problems: list[str] = []

    job = data.get("job")
    if job not in JOB_KINDS:
        problems.append(f"job must be one of {JOB_KINDS} (got {job!r})")

    num = NumericsConfig()
    for key, value in (data.get("numerics") or {}).items():
        if not hasattr(num, key):
            problems.append(f"numerics: unknown key {key!r}")
            continue
        setattr(num, key, value)
    # normalize numerics types explicitly
    num.dt_fs = float(num.dt_fs)
    num.t_final_fs = float(num.t_final_fs)
    num.chi = int(num.chi)
    num.tau = float(num.tau)
    num.sample_stride = int(num.sample_stride)
    num.trace_guard = None if num.trace_guard is None else float(num.trace_guard)
    if num.dt_fs <= 0:
        problems.append("numerics.dt_fs must be > 0")
    if num.t_final_fs <= 0:
        problems.append("numerics.t_final_fs must be > 0")
    if num.chi < 1:
        problems.append("numerics.chi must be >= 1")
    if num.tau < 0:
        problems.append("numerics.tau must be >= 0")
    if num.sample_stride < 1:
        problems.append("numerics.sample_stride must be >= 1")
    if num.compress_mode not in ("pairwise", "sum"):
        problems.append("numerics.compress_mode must be pairwise or sum")

    network = None
    if job == "bcf_fit":
        pass
    elif "network" not in data:
        problems.append("missing network block")
    else:
        network = _parse_network(data["network"], problems)

    cfg = RunConfig(
        job=job if job in JOB_KINDS else "dynamics",
        network=network,
        numerics=num,
        output_dir=str(data.get("output_dir", "out")),
        seed=int(data.get("seed", 0)),
        raw=data,
    )

    init = data.get("initial") or {}
    if "site" in init and "exciton" in init:
        problems.append("initial: give site or exciton, not both")
    if "site" in init:
        cfg.init_site = int(init["site"]) - 1
    if "exciton" in init:
        if init["exciton"] not in ("lowest", "highest"):
            problems.append("initial.exciton must be lowest or highest")
        cfg.init_exciton = init["exciton"]
    if "mode_temperatures_K" in init:
        cfg.mode_temperatures_K = [float(t) for t in init["mode_temperatures_K"]]
    if network is not None and cfg.init_site is not None:
        if not 0 <= cfg.init_site < network.n_sites:
            problems.append(f"initial.site must be in 1..{network.n_sites}")

    if "dipoles" in data:
        cfg.dipoles = np.array(data["dipoles"], dtype=float)

    for key, value in (data.get("spectrum") or {}).items():
        if not hasattr(cfg.spectrum, key):
            problems.append(f"spectrum: unknown key {key!r}")
        else:
            setattr(cfg.spectrum, key, value)
    if cfg.spectrum.window not in ("none", "hann"):
        problems.append("spectrum.window must be none or hann")

    bf = data.get("bcf_fit") or {}
    for key in ("q_count", "t_max_fs", "dt_fs", "temperature_K", "init_table"):
        if key in bf:
            setattr(cfg.bcf_fit, key, bf[key])
    cfg.bcf_fit.q_count = int(cfg.bcf_fit.q_count)
    if job == "bcf_fit":
        if "spectral_density" not in bf:
            problems.append("bcf_fit: missing spectral_density")
        else:
            cfg.bcf_fit.spectral_density = _parse_spectral_density(
                bf["spectral_density"], problems
            )
        if cfg.bcf_fit.q_count < 1:
            problems.append("bcf_fit.q_count must be >= 1")

    rec = data.get("record") or {}
    cfg.record_electronic_matrix = bool(rec.get("electronic_matrix", True))
    cfg.record_modes = bool(rec.get("modes", False))

    orc = data.get("oracle_compare") or {}
    cfg.oracle_sample_dt_fs = float(orc.get("sample_dt_fs", 2.0))
    cfg.oracle_rtol = float(orc.get("rtol", 1e-9))

    if job == "absorption":
        if network is not None and not network.has_ground_state:
            problems.append("absorption requires network.has_ground_state: true")
    if job in ("dynamics", "oracle_compare"):
        if cfg.init_site is None and cfg.init_exciton is None:
            problems.append("dynamics needs initial.site or initial.exciton")

    if problems:
        raise ConfigError(problems)
    return cfg
