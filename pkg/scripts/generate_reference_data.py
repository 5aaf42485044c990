#!/usr/bin/env python3
"""Regenerate the frozen dense-oracle reference curves used by the
acceptance suite.

The large dimer reference (electronic dimer, two damped modes per site,
2048-dimensional Hilbert space) takes tens of minutes on one core, so its
output is committed under tests/data/ and loaded by the tests; run this
script to rebuild it from scratch with the oracle module.
"""

import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vibrompo import ModeSpec, NetworkSpec
from vibrompo.oracle import dense_evolve

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "data")


def dimer_reference():
    """Populations of the benchmark dimer: J12 = 500 cm^-1, each site
    coupled to (1500 cm^-1, s=0.1, 1 ps lifetime, Nb=8) and (500 cm^-1,
    s=0.1, 100 fs lifetime, Nb=4) at 300 K, excitation starting on site 1."""
    m1 = ModeSpec(1500.0, 0.1, 1e-3, 300.0, 8)
    m2 = ModeSpec(500.0, 0.1, 1e-2, 300.0, 4)
    spec = NetworkSpec.create([0.0, 0.0], [[0.0, 500.0], [500.0, 0.0]], [m1, m2])
    t0 = time.time()
    last = [0.0]

    def progress(t):
        if t - last[0] >= 25.0:
            last[0] = t
            print(f"  t = {t:7.1f} fs   ({time.time() - t0:6.0f} s)", flush=True)

    traj = dense_evolve(spec, 0, 500.0, 2.0, rtol=1e-8, atol=1e-10, keep_states=False,
                        progress=progress)
    os.makedirs(OUT, exist_ok=True)
    np.savez(
        os.path.join(OUT, "dimer_oracle_populations.npz"),
        times_fs=traj.times,
        populations=traj.populations,
        mode_occupations=traj.mode_occupations,
        rho_e=traj.rho_e,
        params=np.array([1500.0, 0.1, 1e-3, 300.0, 8, 500.0, 0.1, 1e-2, 300.0, 4, 500.0]),
        rtol=np.array([1e-8]),
    )
    print(f"dimer reference written after {time.time() - t0:.0f} s")


if __name__ == "__main__":
    dimer_reference()
