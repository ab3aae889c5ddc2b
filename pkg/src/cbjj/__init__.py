"""Quarter-wave resonator shunted by a current-biased Josephson junction."""

__version__ = "0.1.0"

from .circuit import (CircuitParams, DerivedCircuit, ModeSolution, OvercriticalBiasError,
                      ParameterError, approx_wavenumber, derive_circuit, junction_phase,
                      lumped_constants, solve_mode, solve_wavenumber)
from .hamiltonian import (CBJJModel, HamiltonianCoefficients, ProductBasis, assemble_hamiltonian,
                          coefficients, drive_operator, field_operators, junction_operators,
                          kerr_matrix, make_basis)

