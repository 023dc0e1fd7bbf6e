"""Atom-assisted Kerr and cross-Kerr nonlinearity in a two-mode optomechanical cavity.

A coefficient calculator (beam-splitter, quasimode and Kerr coefficients,
regime diagnostics) plus open-system simulation tools (Lindblad master
equation, quantum-trajectory unraveling, steady-state detection) and
canned, reproducible experiment runners.
"""

from .effective import (
    DerivedCoefficients,
    ResonanceSingularityError,
    SingularDetuningError,
    SystemParams,
    UndefinedRotationError,
    ValidityReport,
    beat_coefficients,
    kerr_coefficients,
    quasimode_transform,
    sweep,
    validity_report,
)
from .dynamics import (
    EvolutionSpec,
    TimeSeries,
    adiabatic_elimination_check,
    evolve_master,
    evolve_trajectories,
    steady_state_detect,
)
from .hilbert import (
    ModeSpace,
    QuantumState,
    expectation,
    expectation_real,
    lowering,
    make_space,
    number,
    product_state,
    quadrature,
)
from .model import (
    JumpSet,
    TimeDependentHamiltonian,
    hamiltonian_beam_splitter,
    hamiltonian_effective,
    hamiltonian_interaction,
    jump_operators,
    single_atom_model,
)

__version__ = "0.1.0"
