from .core import (
    Boundary,
    DoubleSlitGeometry,
    GridSpec,
    HydroState,
    PhysicalParams,
    PotentialSpec,
    Region,
    ScalarField,
    VectorField,
    WaveState,
    WorldEnsemble,
    divergence,
    gradient,
    integrate,
    laplacian,
)
from .oracle import BFieldSpec, SpinorState, energy_expectation, evolve_pauli, evolve_schrodinger
from .hydrodynamics import madelung_decompose, phase_time_derivative, quantum_force, quantum_potential, step_hydro
from .worlds import (
    DensityEstimatorSpec,
    bohmian_pathlines,
    estimate_density,
    sample_worlds,
    step_worlds,
    world_accelerations,
)
from .reconstruction import check_quantization, fix_phase_history, reconstruct_wavefunction
from .probability import born_divergence, ks_distance, self_locating_credence, world_count_credence
from .symmetry import boost_hydro, boost_wave, boost_worlds, time_reverse, time_reverse_wave, verify_symmetry
from .spin import (
    SpinHydroState,
    SpinParams,
    SpinWorldEnsemble,
    b_total,
    check_spin_quantization,
    sample_spin_worlds,
    spinor_compose,
    spinor_decompose,
    step_spin_hydro,
    step_spin_worlds,
)
from .scenarios import build_scenario, scenario
from .config import ScenarioConfig, load_config
from .cli import run

__all__ = [
    "Boundary",
    "DoubleSlitGeometry",
    "GridSpec",
    "HydroState",
    "PhysicalParams",
    "PotentialSpec",
    "Region",
    "ScalarField",
    "VectorField",
    "WaveState",
    "WorldEnsemble",
    "divergence",
    "gradient",
    "integrate",
    "laplacian",
    "BFieldSpec",
    "SpinorState",
    "energy_expectation",
    "evolve_pauli",
    "evolve_schrodinger",
    "madelung_decompose",
    "phase_time_derivative",
    "quantum_force",
    "quantum_potential",
    "step_hydro",
    "DensityEstimatorSpec",
    "bohmian_pathlines",
    "estimate_density",
    "sample_worlds",
    "step_worlds",
    "world_accelerations",
    "check_quantization",
    "fix_phase_history",
    "reconstruct_wavefunction",
    "born_divergence",
    "ks_distance",
    "self_locating_credence",
    "world_count_credence",
    "boost_hydro",
    "boost_wave",
    "boost_worlds",
    "time_reverse",
    "time_reverse_wave",
    "verify_symmetry",
    "SpinHydroState",
    "SpinParams",
    "SpinWorldEnsemble",
    "b_total",
    "check_spin_quantization",
    "sample_spin_worlds",
    "spinor_compose",
    "spinor_decompose",
    "step_spin_hydro",
    "step_spin_worlds",
    "build_scenario",
    "scenario",
    "ScenarioConfig",
    "load_config",
    "run",
]
