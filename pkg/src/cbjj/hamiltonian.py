"""Single-mode Hamiltonian of the resonator + junction system on a phase grid x Fock basis.

Internal units: hbar = 1, angular frequencies and energies in rad/ns, time in ns,
junction phase dimensionless.  The junction momentum ``p = -i d/dphi`` is the
conjugate charge in units of hbar, so that the junction kinetic energy is
``p**2 / (2 M)`` with ``M = (C_0 - C_c**2/C_E) / (2e)**2``.

State vectors are flattened with the Fock index running fastest, i.e. a
state reshaped to ``(n_phi, n_fock)`` gives ``psi[phi_k, n]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.constants import e, hbar

from .circuit import CircuitParams, DerivedCircuit, ModeSolution, derive_circuit, solve_mode

GHZ = 1e9  # rad/s -> rad/ns


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianCoefficients:
    """Coefficients of the single-mode Hamiltonian.

    Frequencies are angular, in rad/s. The field-coupling constants are
    already multiplied by the zero-point flux or charge of the mode, so
    ``mu_scaled`` multiplies ``i(a - a^dag)`` and ``lambda_scaled``
    multiplies ``(a + a^dag)``.
    """

    omega: float
    eta: float
    kappa: float
    lambda_scaled: float
    mu_scaled: float
    chi_scaled: float
    E_J: float
    M: float
    phi_J_hat: float
    I: float

    @property
    def E_kin(self) -> float:
        """Kinetic prefactor 1/(2M) in rad/ns (hbar = 1)."""
        return 1.0 / (2 * self.M) / hbar / GHZ

    @property
    def E_J_internal(self) -> float:
        """E_J/hbar in rad/ns."""
        return self.E_J / hbar / GHZ

    def internal(self) -> dict:
        """All rates converted to rad/ns."""
        return dict(omega=self.omega / GHZ, eta=self.eta / GHZ, kappa=self.kappa / GHZ,
                    lam=self.lambda_scaled / GHZ, mu=self.mu_scaled / GHZ,
                    chi=self.chi_scaled / GHZ, E_J=self.E_J_internal, E_kin=self.E_kin)

    def in_ghz(self) -> dict:
        """(eta, kappa, lambda, mu, chi, omega) as ordinary frequencies in GHz."""
        f = 2 * np.pi * GHZ
        return dict(eta=self.eta / f, kappa=self.kappa / f, lambda_scaled=self.lambda_scaled / f,
                    mu_scaled=self.mu_scaled / f, chi_scaled=self.chi_scaled / f,
                    omega=self.omega / f)


def coefficients(mode: ModeSolution, derived: DerivedCircuit) -> HamiltonianCoefficients:
    E_J = derived.E_J
    c = np.cos(mode.kd)
    cos_j = np.cos(mode.phi_J_hat)
    w, L_E = mode.omega, mode.L_E
    eta = E_J / 2 * (2 * e) ** 2 / hbar**2 * c**2 * L_E * w
    kappa = -E_J / 4 * (2 * e) ** 4 / hbar**3 * c**4 * L_E**2 * w**2
    lam = -(2 * e / hbar) * mode.C_c / (mode.C_0 * mode.C_E - mode.C_c**2)
    mu = -E_J / hbar * (2 * e / hbar) * c * cos_j
    chi = E_J / (4 * hbar) * (2 * e) ** 3 / hbar**2 * c**3 * L_E * w * cos_j
    flux_zpf = np.sqrt(hbar * w * L_E / 2)
    charge_zpf = np.sqrt(hbar / (2 * w * L_E))
    M = (mode.C_0 - mode.C_c**2 / mode.C_E) / (2 * e) ** 2
    return HamiltonianCoefficients(
        omega=w, eta=eta, kappa=kappa, lambda_scaled=lam * charge_zpf,
        mu_scaled=mu * flux_zpf, chi_scaled=chi * flux_zpf,
        E_J=E_J, M=M, phi_J_hat=mode.phi_J_hat, I=mode.I)


def kerr_matrix(derived: DerivedCircuit, I: float, mode_list) -> np.ndarray:
    """Cross- and self-Kerr constants kappa_ij (rad/s) for the given modes.

    The zero-point factor ``L_E**2 omega**2`` is generalised to
    ``(L_E omega)_i (L_E omega)_j`` so that the matrix is symmetric and its
    diagonal reduces to the single-mode expression.
    """
    modes = [solve_mode(derived, I, j) for j in mode_list]
    cos2 = np.array([np.cos(m.kd) ** 2 for m in modes])
    lw = np.array([m.L_E * m.omega for m in modes])
    cos_j = np.cos(modes[0].phi_J_hat) if modes else 1.0
    pref = -derived.E_J / (4 * hbar) * (2 * e) ** 4 / hbar**2 * cos_j
    return pref * np.outer(cos2 * lw, cos2 * lw)


# --------------------------------------------------------------------------
# Basis and operators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductBasis:
    """Uniform interior grid on ``(phi_min, phi_max)`` times a truncated Fock space.

    The wave function vanishes at the two box edges, which are not grid points.
    """

    n_fock: int
    n_phi: int
    phi_min: float
    phi_max: float

    def __post_init__(self):
        if self.n_fock < 1:
            raise AssemblyError("n_fock must be >= 1")
        if self.n_phi < 16:
            raise AssemblyError("n_phi must be >= 16")
        if not self.phi_max > self.phi_min:
            raise AssemblyError("phi_max must exceed phi_min")

    @property
    def d_phi(self) -> float:
        return (self.phi_max - self.phi_min) / (self.n_phi + 1)

    @property
    def phi(self) -> np.ndarray:
        return self.phi_min + self.d_phi * np.arange(1, self.n_phi + 1)

    @property
    def dim(self) -> int:
        return self.n_phi * self.n_fock

    def reshape(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi).reshape(self.n_phi, self.n_fock)


def default_box(I: float, length: float = 2.5 * np.pi, margin: float = 0.25 * np.pi):
    """Box edges enclosing the single well at arcsin(I).

    The left edge sits ``margin`` beyond the uphill barrier maximum at
    ``-pi - arcsin(I)``; the remaining length extends past the downhill barrier.
    Close to the critical current the previous well's minimum at
    ``-2 pi + arcsin(I)`` comes nearer than ``margin``; only then is the margin
    cut to half that distance, so that a single well stays in the box.
    """
    phi_J = np.arcsin(I)
    gap = np.pi - 2 * phi_J
    if margin >= gap:
        margin = 0.5 * gap
    lo = -np.pi - phi_J - margin
    return lo, lo + length


def make_basis(I: float, n_phi: int = 512, n_fock: int = 8,
               length: float = 2.5 * np.pi, margin: float = 0.25 * np.pi) -> ProductBasis:
    lo, hi = default_box(I, length, margin)
    return ProductBasis(n_fock=n_fock, n_phi=n_phi, phi_min=lo, phi_max=hi)


def washboard(phi, I):
    """Bare tilted washboard -(cos phi + I phi) in units of E_J."""
    return -(np.cos(phi) + I * phi)


def _second_derivative(n: int, h: float) -> sp.csr_matrix:
    o = np.ones(n)
    return sp.diags([-o[2:] / 12, 4 * o[1:] / 3, -5 * o / 2, 4 * o[1:] / 3, -o[2:] / 12],
                    [-2, -1, 0, 1, 2], format="csr") / h**2


def _first_derivative(n: int, h: float) -> sp.csr_matrix:
    o = np.ones(n)
    return sp.diags([o[2:] / 12, -2 * o[1:] / 3, 2 * o[1:] / 3, -o[2:] / 12],
                    [-2, -1, 1, 2], format="csr") / h


def lift_phi(op, basis: ProductBasis) -> sp.csr_matrix:
    """Embed a junction-sector operator (n_phi x n_phi) into the product space."""
    return sp.kron(op, sp.identity(basis.n_fock), format="csr")


def lift_fock(op, basis: ProductBasis) -> sp.csr_matrix:
    return sp.kron(sp.identity(basis.n_phi), op, format="csr")


def junction_operators(basis: ProductBasis, M: float, E_J: float, I: float) -> dict:
    """Kinetic, cos(phi), phi and momentum operators on the product space.

    ``M`` and ``E_J`` are SI (1/J and J); the returned matrices are in rad/ns
    where they carry an energy, and dimensionless otherwise.
    """
    n, h = basis.n_phi, basis.d_phi
    e_kin = 1.0 / (2 * M) / hbar / GHZ
    kinetic = -e_kin * _second_derivative(n, h)
    q_phi = -1j * _first_derivative(n, h)
    x = basis.phi
    return dict(
        kinetic=lift_phi(kinetic, basis),
        cos_phi=lift_phi(sp.diags(np.cos(x)), basis),
        phi=lift_phi(sp.diags(x), basis),
        q_phi=lift_phi(q_phi, basis),
    )


def ladder(n_fock: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_fock, dtype=float)), 1, format="csr")


def field_operators(basis: ProductBasis) -> dict:
    """Ladder, number and dimensionless quadratures of the resonator mode.

    ``phi_field = i(a - a^dag)`` and ``q_field = a + a^dag``; the flux and
    charge zero-point amplitudes live in the scaled coefficients.
    """
    a = ladder(basis.n_fock)
    ad = a.T.tocsr()
    return dict(
        a=lift_fock(a, basis),
        n=lift_fock(ad @ a, basis),
        phi_field=lift_fock(1j * (a - ad), basis),
        q_field=lift_fock(a + ad, basis),
        n2=lift_fock(ad @ ad @ a @ a, basis),
    )


def assemble_hamiltonian(coeffs: HamiltonianCoefficients, basis: ProductBasis) -> sp.csr_matrix:
    """Sparse Hamiltonian (rad/ns) of the coupled junction and resonator mode."""
    c = coeffs.internal()
    n_phi, n_f = basis.n_phi, basis.n_fock
    x = basis.phi
    a = ladder(n_f)
    ad = a.T.tocsr()
    num = ad @ a
    n2 = ad @ ad @ a @ a
    phif = 1j * (a - ad)
    qf = a + ad
    T = -c["E_kin"] * _second_derivative(n_phi, basis.d_phi)
    V = sp.diags(-c["E_J"] * (np.cos(x) + coeffs.I * x))
    cosd = sp.diags(np.cos(x))
    sind = sp.diags(np.sin(x - coeffs.phi_J_hat))
    p = -1j * _first_derivative(n_phi, basis.d_phi)
    H = (sp.kron(T + V, sp.identity(n_f))
         + sp.kron(sp.identity(n_phi), c["omega"] * num)
         + sp.kron(cosd, c["eta"] * num + c["kappa"] * n2)
         + c["lam"] * sp.kron(p, qf)
         # chi n phi_field is symmetrised; the bare product is not Hermitian.
         + sp.kron(sind, c["mu"] * phif + c["chi"] * 0.5 * (num @ phif + phif @ num)))
    H = H.tocsr()
    if H.shape != (basis.dim, basis.dim):
        raise AssemblyError(f"assembled shape {H.shape} != basis dimension {basis.dim}")
    H.sum_duplicates()
    return H


def coupling_constants(mode: ModeSolution, params: CircuitParams, omega_out: float):
    """alpha [C], beta_1 [V] and beta_2 [V] of the capacitive external coupling.

    ``omega_out`` is the external field frequency in rad/s.
    """
    alpha = params.C_out * np.sqrt(hbar * omega_out**2 * params.Z_out / 2)
    den = 2 * (mode.C_c**2 - mode.C_E * mode.C_0)
    beta1 = 2 * e * (mode.C_E - mode.C_c) / den
    beta2 = np.sqrt(hbar / (2 * mode.L_E * mode.omega)) * (mode.C_0 - mode.C_c) / den
    return alpha, beta1, beta2


def drive_operator(mode: ModeSolution, params: CircuitParams, basis: ProductBasis,
                   beta: float, omega_out: float) -> sp.csr_matrix:
    """Time-independent part ``alpha beta (beta1 q_phi + beta2 (a + a^dag))`` in rad/ns.

    The propagator multiplies it by ``sin(omega_out t)``.
    """
    alpha, beta1, beta2 = coupling_constants(mode, params, omega_out)
    p = lift_phi(-1j * _first_derivative(basis.n_phi, basis.d_phi), basis)
    a = ladder(basis.n_fock)
    qf = lift_fock(a + a.T, basis)
    scale = alpha * beta / hbar / GHZ
    return (scale * (beta1 * p + beta2 * qf)).tocsr()


@dataclass
class CBJJModel:
    """Circuit, bias and basis bundled with lazily built operators."""

    params: CircuitParams = field(default_factory=CircuitParams)
    I: float = 0.92
    n_phi: int = 512
    n_fock: int = 8
    box_length: float = 2.5 * np.pi
    box_margin: float = 0.25 * np.pi
    mode_index: int = 0
    trim_above: float | None = None

    # ``trim_above`` (GHz, ordinary frequency) drops the grid points on the
    # uphill side where the bare washboard exceeds the well bottom by more than
    # this energy. The spacing is unchanged and the dropped region acts as a wall.

    @cached_property
    def derived(self) -> DerivedCircuit:
        return derive_circuit(self.params)

    @cached_property
    def mode(self) -> ModeSolution:
        return solve_mode(self.derived, self.I, self.mode_index)

    @cached_property
    def coeffs(self) -> HamiltonianCoefficients:
        return coefficients(self.mode, self.derived)

    @cached_property
    def basis(self) -> ProductBasis:
        full = make_basis(self.I, self.n_phi, self.n_fock, self.box_length, self.box_margin)
        if self.trim_above is None:
            return full
        x = full.phi
        pJ = self.coeffs.phi_J_hat
        excess = washboard(x, self.I) - washboard(pJ, self.I)
        high = np.nonzero((x < pJ) & (excess * self.coeffs.E_J_internal > 2 * np.pi * self.trim_above))[0]
        if len(high) == 0:
            return full
        i0 = high[-1] + 1
        return ProductBasis(n_fock=self.n_fock, n_phi=self.n_phi - i0,
                            phi_min=float(x[i0 - 1]), phi_max=full.phi_max)

    @cached_property
    def H(self) -> sp.csr_matrix:
        return assemble_hamiltonian(self.coeffs, self.basis)

    @cached_property
    def ops(self) -> dict:
        out = field_operators(self.basis)
        out.update(junction_operators(self.basis, self.coeffs.M, self.coeffs.E_J, self.I))
        return out

    def drive(self, beta: float, omega_out: float) -> sp.csr_matrix:
        """Drive operator for an external frequency ``omega_out`` in rad/ns."""
        return drive_operator(self.mode, self.params, self.basis, beta, omega_out * GHZ)
