"""Circuit parameters of a quarter-wave resonator shunted by a current-biased junction.

Everything here is in SI units. The conversion to the internal unit system
(hbar = 1, angular frequencies in rad/ns, times in ns) happens in
:mod:`cbjj.hamiltonian`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import e, hbar

PHI0_RED = hbar / (2 * e)  # reduced flux quantum hbar/2e [Wb]


class ParameterError(ValueError):
    """Raised for unphysical circuit parameters."""


class OvercriticalBiasError(ValueError):
    """Raised when the dimensionless bias reaches the critical current."""


@dataclass(frozen=True)
class CircuitParams:
    """Raw device parameters in SI units.

    Attributes
    ----------
    I_c : float
        Junction critical current [A].
    C_J : float
        Junction capacitance [F].
    Z_0 : float
        Characteristic impedance of the resonator line [Ohm].
    omega_bare : float
        Angular frequency of the bare quarter-wave resonance [rad/s].
    R_J : float
        Junction shunt resistance [Ohm].
    C_out : float
        Coupling capacitance to the external line [F].
    Z_out : float
        Impedance of the external line [Ohm].
    """

    I_c: float = 2e-6
    C_J: float = 1500e-15
    Z_0: float = 50.0
    omega_bare: float = 2 * np.pi * 7e9
    R_J: float = 300.0
    C_out: float = 5e-15
    Z_out: float = 50.0

    def __post_init__(self):
        for name in ("I_c", "C_J", "Z_0", "omega_bare", "R_J", "Z_out"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{name} must be strictly positive, got {value!r}")
        # C_out = 0 is allowed: it switches the external coupling off.
        if not np.isfinite(self.C_out) or self.C_out < 0:
            raise ParameterError(f"C_out must be non-negative, got {self.C_out!r}")


@dataclass(frozen=True)
class DerivedCircuit:
    """Electrical quantities derived from :class:`CircuitParams` (SI units)."""

    E_J: float
    L_J: float
    L_T_total: float
    C_T_total: float
    C_J: float

    @property
    def Z_0(self) -> float:
        return float(np.sqrt(self.L_T_total / self.C_T_total))

    @property
    def omega_bare(self) -> float:
        return float(np.pi / (2 * np.sqrt(self.L_T_total * self.C_T_total)))

    @property
    def M_bare(self) -> float:
        """Mass C_J/(2e)^2 of the uncoupled junction."""
        return self.C_J / (2 * e) ** 2


@dataclass(frozen=True)
class ModeSolution:
    """Wavenumber and lumped constants of one resonator mode at a fixed bias."""

    mode_index: int
    I: float
    kd: float
    phi_J_hat: float
    C_E: float
    C_0: float
    C_c: float
    L_E: float
    omega: float


def derive_circuit(params: CircuitParams) -> DerivedCircuit:
    """Line totals from (Z_0, omega_bare) and junction constants from I_c.

    A quarter-wave line has ``omega_bare = pi / (2 sqrt(L C))`` and
    ``Z_0 = sqrt(L / C)`` for the total inductance L and capacitance C, so
    both totals are fixed without knowing the physical length.
    """
    E_J = PHI0_RED * params.I_c
    L_J = PHI0_RED**2 / E_J
    L_T_total = params.Z_0 * np.pi / (2 * params.omega_bare)
    C_T_total = np.pi / (2 * params.Z_0 * params.omega_bare)
    return DerivedCircuit(E_J=E_J, L_J=L_J, L_T_total=L_T_total,
                          C_T_total=C_T_total, C_J=params.C_J)


def junction_phase(I: float) -> float:
    """Static junction phase arcsin(I) for dimensionless bias ``I = I_b/I_c``."""
    if not 0 <= I < 1:
        if I >= 1:
            raise OvercriticalBiasError(f"bias I={I} has no static phase solution (I >= 1)")
        raise ParameterError(f"bias must satisfy 0 <= I < 1, got {I}")
    return float(np.arcsin(I))


def _stiffness_ratio(derived: DerivedCircuit, I: float) -> float:
    return derived.L_T_total * np.cos(junction_phase(I)) / derived.L_J


def solve_wavenumber(derived: DerivedCircuit, I: float, mode_index: int = 0,
                     tol: float = 1e-15, maxiter: int = 200) -> float:
    """Root of ``kd tan(kd) = r`` on the branch ``(j pi, j pi + pi/2)``.

    ``r = L_T d cos(phi_J) / L_J``. The left side increases monotonically
    from 0 to +inf on each branch, so bisection always brackets the root;
    Newton steps are taken whenever they stay inside the current bracket.
    """
    if mode_index < 0:
        raise ParameterError("mode_index must be >= 0")
    r = _stiffness_ratio(derived, I)
    lo = mode_index * np.pi
    hi = lo + np.pi / 2
    if r <= 0:
        return float(lo) if mode_index > 0 else 0.0

    def f(k):
        return k * np.tan(k) - r

    a, b = lo, hi
    x = 0.5 * (a + b)
    for _ in range(maxiter):
        fx = f(x)
        if fx > 0:
            b = x
        else:
            a = x
        dfx = np.tan(x) + x / np.cos(x) ** 2
        x_new = x - fx / dfx
        if not a < x_new < b:
            x_new = 0.5 * (a + b)
        if abs(x_new - x) <= tol * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return float(x)


def approx_wavenumber(derived: DerivedCircuit, I: float, mode_index: int = 0) -> float:
    """Closed-form wavenumber valid for ``L_J << L_T d cos(phi_J)``."""
    cos_phi = np.cos(junction_phase(I))
    return float(np.pi * (1 + 2 * mode_index)
                 / (2 * (1 + derived.L_J / (derived.L_T_total * cos_phi))))


def lumped_constants(derived: DerivedCircuit, I: float, kd: float,
                     mode_index: int = 0) -> ModeSolution:
    """Effective capacitances, inductance and frequency of a single mode."""
    CTd = derived.C_T_total
    sinc2 = np.sin(2 * kd) / (2 * kd)
    c = np.cos(kd)
    C_E = CTd / 2 * (1 + sinc2) + derived.C_J * c**2
    C_0 = CTd + derived.C_J
    C_c = CTd * np.sin(kd) / kd + derived.C_J * c
    L_E = 1.0 / (kd**2 / (2 * derived.L_T_total) * (1 - sinc2))
    omega = 1.0 / np.sqrt(L_E * (C_E - C_c**2 / C_0))
    return ModeSolution(mode_index=mode_index, I=I, kd=float(kd),
                        phi_J_hat=junction_phase(I), C_E=float(C_E), C_0=float(C_0),
                        C_c=float(C_c), L_E=float(L_E), omega=float(omega))


def solve_mode(derived: DerivedCircuit, I: float, mode_index: int = 0) -> ModeSolution:
    kd = solve_wavenumber(derived, I, mode_index)
    return lumped_constants(derived, I, kd, mode_index)
