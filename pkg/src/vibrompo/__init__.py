"""Simulator for dissipative vibronic networks.

The density operator of electronically coupled sites dressed with damped
local oscillators is stored as one matrix product operator per electronic
index pair.  Local (vibration, coupling, damping) dynamics is applied
exactly per oscillator; the electronic step mixes blocks and is compressed
with a certified truncation-error ledger.
"""

from .model import (
    KB_CM1_PER_K,
    ModeSpec,
    NetworkSpec,
    TWO_PI_C,
    ValidationError,
    build_electronic_hamiltonian,
    thermal_occupancy,
    validate_spec,
)
from .basis import OperatorBasis, build_basis, thermal_coefficients
from .mpo import (
    CompressionReport,
    ConditionalMPO,
    ErrorLedger,
    VibronicMPOState,
    add,
    add_many,
    block_trace,
    compress,
    frobenius_norm,
    init_product_state,
    inner,
    load_checkpoint,
    save_checkpoint,
)
from .propagator import (
    ElectronicStep,
    LocalChannelTable,
    TraceGuardError,
    apply_electronic_step,
    apply_local_step,
    build_electronic_step,
    build_local_channels,
    evolve,
    step,
)
from .observables import (
    AbsorptionResult,
    Trajectory,
    absorption_spectrum,
    lineshape_from_coherence,
    mandel_parameter,
    occupation_moments,
    populations,
    reduced_electronic,
    reduced_oscillator,
    trace_distance,
)
from .bcf import (
    AntisymmetricLorentzian,
    CompositeDensity,
    ModeFit,
    OhmicGaussian,
    QuadratureError,
    TabulatedDensity,
    fit_modes,
    lindblad_bcf,
    load_bundled_fit,
    model_spectral_density,
    rate_to_wavenumber,
    read_mode_table,
    reorganization_energy,
    spectral_density,
    target_bcf,
    write_mode_table,
)
from .oracle import (
    DenseState,
    DenseTrajectory,
    DimensionCeilingError,
    analytic_monomer_coherence,
    dense_evolve,
    dense_reduced_electronic,
    dense_reduced_oscillator,
    initial_dense_state,
    mpo_to_dense,
)
from .config import ConfigError, RunConfig, load_config

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
