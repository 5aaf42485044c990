"""Command-line entry point: load a config, run the requested job, write
tabular outputs plus a run manifest.

Exit codes: 0 success, 2 validation failure, 3 trace-guard abort, 4 I/O
failure.  Outputs are byte-reproducible for a fixed config regardless of
the worker count (the manifest, which carries timestamps, is exempt).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .model import (
    KB_CM1_PER_K,
    SPEED_OF_LIGHT_CM_FS,
    ValidationError,
    build_electronic_hamiltonian,
)
from .mpo import init_product_state, load_checkpoint, save_checkpoint
from .observables import Trajectory, absorption_spectrum, lineshape_from_coherence
from .propagator import TraceGuardError, evolve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRACE_GUARD = 3
EXIT_IO = 4

FLOAT_FMT = "%.12e"


def _fmt(value: float) -> str:
    return FLOAT_FMT % value


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _electronic_labels(spec) -> list[str]:
    labels = [f"site_{n + 1}" for n in range(spec.n_sites)]
    if spec.has_ground_state:
        labels.append("ground")
    return labels


def write_populations_csv(path, traj: Trajectory, provenance: str | None = None,
                          extra_blocks: list[tuple[str, np.ndarray, np.ndarray]] | None = None) -> None:
    labels = _electronic_labels(traj.spec)
    header = ["time_fs"] + [f"pop_{l}" for l in labels]
    if provenance is not None:
        header.append("provenance")
    rows = []
    for t, pops in zip(traj.times, traj.populations):
        row = [_fmt(t)] + [_fmt(p) for p in pops]
        if provenance is not None:
            row.append(provenance)
        rows.append(row)
    for label, times, pop in extra_blocks or []:
        for t, p in zip(times, pop):
            rows.append([_fmt(t)] + [_fmt(x) for x in p] + [label])
    _write_csv(path, header, rows)


def write_coherence_csv(path, traj: Trajectory) -> None:
    spec = traj.spec
    labels = _electronic_labels(spec)
    ne = spec.n_electronic
    pairs = [(m, n) for m in range(ne) for n in range(m + 1, ne)]
    header = ["time_fs"]
    for m, n in pairs:
        header += [f"re_{labels[m]}_{labels[n]}", f"im_{labels[m]}_{labels[n]}"]
    if traj.coherence:
        header += ["re_optical", "im_optical"]
    rows = []
    for idx, t in enumerate(traj.times):
        row = [_fmt(t)]
        rho = traj.rho_e[idx]
        for m, n in pairs:
            row += [_fmt(rho[m, n].real), _fmt(rho[m, n].imag)]
        if traj.coherence:
            row += [_fmt(traj.coherence[idx].real), _fmt(traj.coherence[idx].imag)]
        rows.append(row)
    _write_csv(path, header, rows)


def write_diagnostics_csv(path, traj: Trajectory) -> None:
    header = ["step", "error_bound_increment", "cumulative_bound", "max_bond_dim", "wall_ms"]
    rows = []
    cumulative = 0.0
    for k, (inc, bond, wall) in enumerate(
        zip(traj.bound_increments, traj.max_bond, traj.wall_ms), start=1
    ):
        cumulative += inc
        rows.append([str(k), _fmt(inc), _fmt(cumulative), str(bond), _fmt(wall)])
    _write_csv(path, header, rows)


def write_spectrum_csv(path, omega_cm1, wavelength_nm, intensity) -> None:
    header = ["omega_cm1", "wavelength_nm", "intensity"]
    rows = [
        [_fmt(w), _fmt(l), _fmt(v)]
        for w, l, v in zip(omega_cm1, wavelength_nm, intensity)
    ]
    _write_csv(path, header, rows)


def write_modes_csv(path, traj: Trajectory) -> None:
    m = len(traj.spec.modes)
    header = ["time_fs"]
    header += [f"occ_mode_{i + 1}" for i in range(m)]
    header += [f"mandel_mode_{i + 1}" for i in range(m)]
    rows = []
    for t, occ, man in zip(traj.times, traj.mode_occupations, traj.mode_mandel):
        rows.append([_fmt(t)] + [_fmt(x) for x in occ] + [_fmt(x) for x in man])
    _write_csv(path, header, rows)


def _initial_state(cfg: RunConfig):
    spec = cfg.network
    if cfg.init_exciton is not None:
        h = build_electronic_hamiltonian(spec)[: spec.n_sites, : spec.n_sites]
        vals, vecs = np.linalg.eigh(h)
        v = vecs[:, 0] if cfg.init_exciton == "lowest" else vecs[:, -1]
        ne = spec.n_electronic
        rho = np.zeros((ne, ne), dtype=complex)
        rho[: spec.n_sites, : spec.n_sites] = np.outer(v, v.conj())
        return init_product_state(spec, rho, cfg.mode_temperatures_K)
    return init_product_state(spec, cfg.init_site, cfg.mode_temperatures_K)


def _run_dynamics(cfg: RunConfig, out_dir: str, workers: int,
                  checkpoint: str | None, resume: str | None) -> dict:
    spec = cfg.network
    num = cfg.numerics
    n_steps = int(round(num.t_final_fs / num.dt_fs))
    start_step = 0
    trajectory = None
    if resume is not None:
        state, start_step, extra = load_checkpoint(resume, spec)
        trajectory = Trajectory.from_meta(spec, extra)
    else:
        state = _initial_state(cfg)
    stride = max(1, n_steps // 10) if checkpoint else 0
    traj = evolve(
        state,
        num.t_final_fs,
        num.dt_fs,
        num.chi,
        tau=num.tau,
        sample_stride=num.sample_stride,
        trace_guard=num.trace_guard,
        workers=workers,
        compress_mode=num.compress_mode,
        record_rho_e=cfg.record_electronic_matrix,
        record_modes=cfg.record_modes,
        checkpoint_path=checkpoint,
        checkpoint_stride=stride,
        start_step=start_step,
        trajectory=trajectory,
    )
    write_populations_csv(os.path.join(out_dir, "populations.csv"), traj)
    outputs = ["populations.csv", "diagnostics.csv"]
    if cfg.record_electronic_matrix:
        write_coherence_csv(os.path.join(out_dir, "coherence.csv"), traj)
        outputs.append("coherence.csv")
    if cfg.record_modes:
        write_modes_csv(os.path.join(out_dir, "modes.csv"), traj)
        outputs.append("modes.csv")
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), traj)
    return {
        "outputs": sorted(outputs),
        "final_trace": state.trace().real,
        "cumulative_error_bound": state.ledger.total,
        "max_bond_dim": int(max(traj.max_bond, default=1)),
    }


def _run_absorption(cfg: RunConfig, out_dir: str, workers: int) -> dict:
    spec = cfg.network
    num = cfg.numerics
    mu = cfg.dipoles if cfg.dipoles is not None else np.ones(spec.n_sites)
    sp = cfg.spectrum
    omega_grid = None
    if sp.omega_min_cm1 is not None and sp.omega_max_cm1 is not None:
        omega_grid = np.linspace(
            float(sp.omega_min_cm1), float(sp.omega_max_cm1), int(sp.n_points)
        )
    result = absorption_spectrum(
        spec,
        mu,
        num.t_final_fs,
        num.dt_fs,
        num.chi,
        tau=num.tau,
        sample_stride=num.sample_stride,
        omega_grid=omega_grid,
        window=sp.window,
        workers=workers,
    )
    write_coherence_csv(os.path.join(out_dir, "coherence.csv"), result.trajectory)
    write_spectrum_csv(
        os.path.join(out_dir, "spectrum.csv"),
        result.omega_cm1,
        result.wavelength_nm,
        result.intensity,
    )
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), result.trajectory)
    peak = float(result.omega_cm1[int(np.argmax(result.intensity))])
    return {
        "outputs": ["coherence.csv", "diagnostics.csv", "spectrum.csv"],
        "peak_cm1": peak,
        "cumulative_error_bound": float(np.sum(result.trajectory.bound_increments)),
    }


def _run_bcf_fit(cfg: RunConfig, out_dir: str) -> dict:
    from . import bcf

    bf = cfg.bcf_fit
    times = np.arange(0.0, bf.t_max_fs + 0.5 * bf.dt_fs, bf.dt_fs)
    target = bcf.target_bcf(bf.spectral_density, bf.temperature_K, times)
    init = None
    if bf.init_table:
        init = bcf.read_mode_table(bf.init_table)
    fit = bcf.fit_modes(times, target, bf.q_count, init=init)
    bcf.write_mode_table(os.path.join(out_dir, "fit_modes.txt"), fit)
    fitted = fit.bcf(times)
    header = ["time_fs", "re_target", "im_target", "re_fit", "im_fit"]
    rows = [
        [_fmt(t), _fmt(ct.real), _fmt(ct.imag), _fmt(cf.real), _fmt(cf.imag)]
        for t, ct, cf in zip(times, target, fitted)
    ]
    _write_csv(os.path.join(out_dir, "bcf.csv"), header, rows)
    return {
        "outputs": ["bcf.csv", "fit_modes.txt"],
        "residual": fit.residual,
        "q_count": fit.q_count,
    }


def _run_oracle_compare(cfg: RunConfig, out_dir: str, workers: int) -> dict:
    from .oracle import dense_evolve

    spec = cfg.network
    num = cfg.numerics
    state = _initial_state(cfg)
    stride = max(1, int(round(cfg.oracle_sample_dt_fs / num.dt_fs)))
    traj = evolve(
        state,
        num.t_final_fs,
        num.dt_fs,
        num.chi,
        tau=num.tau,
        sample_stride=stride,
        trace_guard=num.trace_guard,
        workers=workers,
        compress_mode=num.compress_mode,
    )
    rho0 = _initial_state(cfg)
    from .oracle import mpo_to_dense

    ref = dense_evolve(
        spec,
        mpo_to_dense(rho0),
        num.t_final_fs,
        stride * num.dt_fs,
        rtol=cfg.oracle_rtol,
        atol=cfg.oracle_rtol * 1e-2,
        keep_states=False,
    )
    write_populations_csv(
        os.path.join(out_dir, "populations.csv"),
        traj,
        provenance="mpo",
        extra_blocks=[("oracle", ref.times, ref.populations)],
    )
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), traj)
    n = min(len(traj.times), len(ref.times))
    dev = float(
        np.abs(np.array(traj.populations[:n]) - ref.populations[:n]).max()
    )
    return {
        "outputs": ["diagnostics.csv", "populations.csv"],
        "max_population_deviation": dev,
        "cumulative_error_bound": state.ledger.total,
    }


def run(config_path: str, workers: int = 1, output_dir: str | None = None,
        checkpoint: str | None = None, resume: str | None = None) -> int:
    """Execute one job; returns the process exit code."""
    started = time.time()
    try:
        cfg = load_config(config_path)
    except (OSError, UnicodeDecodeError) as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValidationError) as err:
        problems = getattr(err, "problems", [str(err)])
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as err:  # malformed YAML and friends
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = output_dir or os.environ.get("VIBROMPO_OUTPUT_DIR") or cfg.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        print(f"error: cannot create output dir: {err}", file=sys.stderr)
        return EXIT_IO

    try:
        if cfg.job == "dynamics":
            summary = _run_dynamics(cfg, out_dir, workers, checkpoint, resume)
        elif cfg.job == "absorption":
            summary = _run_absorption(cfg, out_dir, workers)
        elif cfg.job == "bcf_fit":
            summary = _run_bcf_fit(cfg, out_dir)
        else:
            summary = _run_oracle_compare(cfg, out_dir, workers)
    except TraceGuardError as err:
        print(f"aborted: {err}", file=sys.stderr)
        _write_manifest(out_dir, cfg, workers, started, {"aborted": str(err)}, config_path)
        return EXIT_TRACE_GUARD
    except (ConfigError, ValidationError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO

    _write_manifest(out_dir, cfg, workers, started, summary, config_path)
    return EXIT_OK


def _write_manifest(out_dir, cfg: RunConfig, workers, started, summary, config_path) -> None:
    manifest = {
        "package": "vibrompo",
        "version": __version__,
        "config_path": str(config_path),
        "config": cfg.raw,
        "constants": {
            "speed_of_light_cm_per_fs": SPEED_OF_LIGHT_CM_FS,
            "boltzmann_cm1_per_K": KB_CM1_PER_K,
        },
        "workers": workers,
        "started_unix": started,
        "runtime_s": time.time() - started,
        "summary": summary,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vibrompo",
        description="Dissipative vibronic-network simulator (block MPO propagation).",
    )
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--workers", type=int, default=1, help="worker threads (results are worker-count independent)")
    parser.add_argument("--checkpoint", default=None, help="write state checkpoints to this path")
    parser.add_argument("--resume", default=None, help="resume from a checkpoint written by --checkpoint")
    parser.add_argument("--output", default=None, help="output directory (overrides config; env VIBROMPO_OUTPUT_DIR also applies)")
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    return run(args.config, args.workers, args.output, args.checkpoint, args.resume)


if __name__ == "__main__":
    sys.exit(main())
