"""Magnetic-gradient induced spin-spin coupling in one- and two-chain ion crystals."""

from .constants import CA40, IonSpecies, get_species
from .crystal import (
    CrystalState,
    IonCrystal,
    StabilityReport,
    TrapSpec,
    build_crystal,
    chain_deformation,
    critical_anisotropy,
    hessian,
    normal_modes,
    potential_energy,
    solve_equilibrium,
    stability_report,
    zigzag_frequency,
)
from .coupling import (
    CouplingMatrix,
    GradientSpec,
    MagicCoupling,
    coupling_axial,
    coupling_matrix_general,
    coupling_transverse,
    coupling_two_chain,
    driven_mode_response,
    zeeman_gradient,
)
from .exceptions import ConvergenceError, DomainError, SoftModeError
from .magnetics import (
    CircuitGeometry,
    MathieuMatrices,
    Segment,
    Sheet,
    field_at,
    gradient_of_magnitude,
    gradient_profile,
    loop_chip_geometry,
    secular_frequencies,
    u_chip_geometry,
)
from .spin import GroundState, IsingGroundState, frustration_report, ground_state, ising_energy

__version__ = "0.1.0"

__all__ = [
    "CA40",
    "CircuitGeometry",
    "ConvergenceError",
    "CouplingMatrix",
    "CrystalState",
    "DomainError",
    "GradientSpec",
    "GroundState",
    "IonCrystal",
    "IonSpecies",
    "IsingGroundState",
    "MagicCoupling",
    "MathieuMatrices",
    "Segment",
    "Sheet",
    "SoftModeError",
    "StabilityReport",
    "TrapSpec",
    "build_crystal",
    "chain_deformation",
    "coupling_axial",
    "coupling_matrix_general",
    "coupling_transverse",
    "coupling_two_chain",
    "critical_anisotropy",
    "driven_mode_response",
    "field_at",
    "frustration_report",
    "get_species",
    "gradient_of_magnitude",
    "gradient_profile",
    "ground_state",
    "hessian",
    "ising_energy",
    "loop_chip_geometry",
    "normal_modes",
    "potential_energy",
    "secular_frequencies",
    "solve_equilibrium",
    "stability_report",
    "u_chip_geometry",
    "zeeman_gradient",
    "zigzag_frequency",
]
