"""Eigenstates, bound-state census, phase distributions and coupling strengths."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla_dense
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.constants import hbar

from .hamiltonian import (GHZ, CBJJModel, ProductBasis, _first_derivative, _second_derivative,
                          coupling_constants, ladder, lift_fock, lift_phi, washboard)
from .potential import Moments, effective_potential, state_moments, well_and_barrier

DENSE_BELOW = 1024  # dimensions at or below this use LAPACK directly
RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    """Eigensolver failure; ``diagnostics`` holds what is known about the attempt."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoTransitionError(ValueError):
    """Fewer than two bound states are available for a transition."""


@dataclass
class EigenPair:
    """One eigenpair of the (Hermitian) model Hamiltonian.

    ``energy`` is in rad/ns. ``upper_occupation`` is the occupation of the
    upper normal mode of the quadratic expansion and is used for band
    assignment; ``mean_photon`` is the bare <a^dag a>.
    """

    energy: float
    state: np.ndarray
    mean_photon: float = np.nan
    bound_flag: bool = False
    in_well_weight: float = np.nan
    barrier_energy: float = np.nan
    upper_occupation: float = np.nan
    residual: float = np.nan

    @property
    def band(self) -> int:
        return int(np.rint(self.upper_occupation)) if np.isfinite(self.upper_occupation) else -1

    @property
    def energy_ghz(self) -> float:
        return self.energy / (2 * np.pi)


@dataclass(frozen=True)
class CouplingResult:
    """External coupling of the two lowest bound states.

    alpha [C V^(1/2) ...] and beta1, beta2 [V] are the SI constants of the
    capacitive coupling; ``Omega`` is in rad/s, ``omega_out`` in rad/s.
    """

    alpha: float
    beta1: float
    beta2: float
    Omega: complex
    omega_out: float
    q_phi_01: complex
    q_field_01: complex


def hermiticity_error(H) -> float:
    """max|H - H^dag| / max|H|."""
    d = abs(H - H.getH()) if sp.issparse(H) else np.abs(H - H.conj().T)
    scale = abs(H).max()
    return float(d.max() / scale) if scale > 0 else 0.0


def operator_norm(H) -> float:
    """Spectral norm of a Hermitian matrix (largest |eigenvalue|)."""
    if not sp.issparse(H) or H.shape[0] <= DENSE_BELOW:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        return float(np.max(np.abs(sla_dense.eigvalsh(A))))
    v = sla.eigsh(H, k=1, which="LM", return_eigenvectors=False, tol=1e-6)
    return float(abs(v[0]))


def eigensolve(H, n_states: int, sigma: float | None = None, *, check: bool = True,
               maxiter: int | None = None, h_norm: float | None = None) -> list[EigenPair]:
    """Eigenpairs of a Hermitian matrix, sorted by energy.

    Parameters
    ----------
    H : sparse or dense Hermitian matrix
    n_states : int
        Number of pairs to return.
    sigma : float, optional
        If given, the ``n_states`` eigenvalues closest to ``sigma`` are
        returned (shift-invert Lanczos); otherwise the algebraically lowest.
    check : bool
        Verify ``||Hv - Ev|| <= 1e-8 ||H||`` for every pair.

    Raises
    ------
    SolverError
        On non-convergence or a residual above the bound.
    """
    dim = H.shape[0]
    if not 0 < n_states < dim:
        raise SolverError(f"n_states must lie in (0, {dim}), got {n_states}")
    diag = dict(dim=dim, n_states=n_states, sigma=sigma)
    if dim <= DENSE_BELOW:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        vals, vecs = sla_dense.eigh(A)
        if sigma is None:
            idx = np.arange(n_states)
        else:
            idx = np.sort(np.argsort(np.abs(vals - sigma), kind="stable")[:n_states])
        vals, vecs = vals[idx], vecs[:, idx]
        diag["method"] = "dense"
    else:
        Hs = sp.csc_matrix(H)
        v0 = np.ones(dim, dtype=Hs.dtype) / np.sqrt(dim)  # fixed start vector: deterministic
        try:
            if sigma is None:
                vals, vecs = sla.eigsh(Hs, k=n_states, which="SA", v0=v0, maxiter=maxiter)
            else:
                vals, vecs = sla.eigsh(Hs, k=n_states, sigma=sigma, which="LM", v0=v0,
                                       maxiter=maxiter)
        except sla.ArpackNoConvergence as exc:
            diag.update(converged=len(exc.eigenvalues), method="arpack")
            raise SolverError("Lanczos iteration did not converge", diag) from exc
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        diag["method"] = "arpack"
    if check and h_norm is None:
        h_norm = operator_norm(H)
    pairs = []
    for k in range(len(vals)):
        v = vecs[:, k]
        # fix the global phase: largest component real and positive
        j = int(np.argmax(np.abs(v)))
        v = v * (abs(v[j]) / v[j])
        res = float(np.linalg.norm(H @ v - vals[k] * v))
        if check and res > RESIDUAL_TOL * h_norm:
            diag.update(state=k, residual=res, h_norm=h_norm)
            raise SolverError(f"residual {res:.3e} above {RESIDUAL_TOL:g}*||H||", diag)
        pairs.append(EigenPair(energy=float(vals[k]), state=v, residual=res))
    return pairs


# --------------------------------------------------------------------------
# Band assignment
# --------------------------------------------------------------------------

def quadratic_form(model: CBJJModel) -> np.ndarray:
    """Matrix A of the harmonic expansion ``H ~ r^T A r / 2`` about the well bottom.

    ``r = (x, p, X, P)`` with ``x = phi - phi_J``, ``a + a^dag = sqrt(2) X``
    and ``i(a - a^dag) = -sqrt(2) P``.
    """
    c = model.coeffs.internal()
    pJ = model.coeffs.phi_J_hat
    A = np.zeros((4, 4))
    A[0, 0] = c["E_J"] * np.cos(pJ)
    A[1, 1] = 2 * c["E_kin"]
    A[2, 2] = A[3, 3] = c["omega"] + c["eta"] * np.cos(pJ)
    A[1, 2] = A[2, 1] = np.sqrt(2) * c["lam"]
    A[0, 3] = A[3, 0] = -np.sqrt(2) * c["mu"]
    return A


_J4 = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)


def normal_mode_frequencies(model: CBJJModel) -> np.ndarray:
    """The two normal-mode frequencies (rad/ns) of the quadratic expansion, ascending."""
    w = np.linalg.eigvals(_J4 @ quadratic_form(model))
    return np.sort(np.abs(w.imag))[::2]


def upper_mode_number(model: CBJJModel) -> sp.csr_matrix:
    """Number operator of the upper normal mode on the product basis.

    With ``u`` the eigenvector of ``A J`` belonging to ``+i w_+`` and
    normalized to ``Re(i u^T J u*) = 1``, the upper-mode annihilator is a
    linear combination of the quadratures and ``b^dag b = sum u_i* u_j r_i r_j``.
    """
    A = quadratic_form(model)
    ev, U = np.linalg.eig(A @ _J4)
    k = int(np.argmax(ev.imag))
    u = U[:, k]
    u = u / np.sqrt(abs((1j * u @ _J4 @ u.conj()).real))
    b = model.basis
    a = ladder(b.n_fock)
    r = [lift_phi(sp.diags(b.phi - model.coeffs.phi_J_hat), b),
         lift_phi(-1j * _first_derivative(b.n_phi, b.d_phi), b),
         lift_fock((a + a.T) / np.sqrt(2), b),
         lift_fock(-1j * (a - a.T) / np.sqrt(2), b)]
    N = sum(np.conj(u[i]) * u[j] * (r[i] @ r[j]) for i in range(4) for j in range(4))
    # symmetrize; the grid stencils make the raw sum Hermitian only up to rounding
    return (0.5 * (N + N.getH())).tocsr()


# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------

def phase_distribution(state: np.ndarray, basis: ProductBasis):
    """Reduced phase density ``P(phi_k)`` with ``sum P d_phi = ||state||^2``.

    Returns
    -------
    phi, P : ndarray
    """
    Y = basis.reshape(state)
    return basis.phi, (np.abs(Y) ** 2).sum(axis=1) / basis.d_phi


def dressed_barrier(model: CBJJModel, moments: Moments):
    """Position and height (rad/ns) of the downhill barrier of the dressed potential."""
    x = model.basis.phi
    U = effective_potential(model.coeffs, moments, x)
    _, ib = well_and_barrier(U, x, model.coeffs.phi_J_hat)
    if ib is None:
        return None, np.nan
    return float(x[ib]), float(U[ib])


def classify_bound(pairs, model: CBJJModel, threshold: float = 0.9):
    """Flag quasi-bound states in place and return the bound subset.

    A state is bound iff at least ``threshold`` of its phase probability lies
    left of the downhill barrier of its own photon-dressed potential and its
    energy lies below that barrier's top.
    """
    b = model.basis
    for pr in pairs:
        m = state_moments(pr.state, b)
        pr.mean_photon = m.n_bar
        x_b, U_b = dressed_barrier(model, m)
        phi, P = phase_distribution(pr.state, b)
        total = P.sum()
        if x_b is None:
            pr.in_well_weight, pr.barrier_energy, pr.bound_flag = 0.0, np.nan, False
            continue
        pr.in_well_weight = float(P[phi < x_b].sum() / total)
        pr.barrier_energy = U_b
        pr.bound_flag = bool(pr.in_well_weight >= threshold and pr.energy < U_b)
    return [pr for pr in pairs if pr.bound_flag]


def well_bottom(model: CBJJModel) -> float:
    """Bare washboard value at the static junction phase (rad/ns)."""
    return float(washboard(model.coeffs.phi_J_hat, model.I) * model.coeffs.E_J_internal)


def solve_spectrum(model: CBJJModel, n_states: int = 40, sigma_offset_ghz: float = 10.0,
                   threshold: float = 0.9, check: bool = True) -> list[EigenPair]:
    """Eigenpairs near the well, labelled and classified.

    The box also holds a downhill pocket whose states lie below the well,
    so the solver targets the states closest to ``well bottom +
    sigma_offset_ghz`` instead of the global minimum.
    """
    sigma = well_bottom(model) + 2 * np.pi * sigma_offset_ghz
    pairs = eigensolve(model.H, n_states, sigma=sigma, check=check)
    N = upper_mode_number(model)
    for pr in pairs:
        pr.upper_occupation = float(np.vdot(pr.state, N @ pr.state).real)
    classify_bound(pairs, model, threshold)
    return pairs


def lowest_band_bound(pairs) -> list[EigenPair]:
    return [p for p in pairs if p.bound_flag and p.band == 0]


# --------------------------------------------------------------------------
# External coupling
# --------------------------------------------------------------------------

def external_coupling(model: CBJJModel, pairs, omega_out: float | None = None) -> CouplingResult:
    """Coupling strength between the two lowest bound states and the external line.

    ``Omega = alpha (beta1 <0|q_phi|1> + beta2 <0|a + a^dag|1>) / hbar`` in
    rad/s, with ``q_phi`` the junction charge in units of hbar. ``omega_out``
    (rad/s) defaults to the resonant value (E_1 - E_0)/hbar.
    """
    bound = sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)
    if len(bound) < 2:
        raise NoTransitionError(f"need two bound states, found {len(bound)}")
    s0, s1 = bound[0], bound[1]
    if omega_out is None:
        omega_out = (s1.energy - s0.energy) * GHZ
    ops = model.ops
    q01 = complex(np.vdot(s0.state, ops["q_phi"] @ s1.state))
    f01 = complex(np.vdot(s0.state, ops["q_field"] @ s1.state))
    alpha, beta1, beta2 = coupling_constants(model.mode, model.params, omega_out)
    Omega = alpha * (beta1 * q01 + beta2 * f01) / hbar
    return CouplingResult(alpha=alpha, beta1=beta1, beta2=beta2, Omega=Omega,
                          omega_out=omega_out, q_phi_01=q01, q_field_01=f01)


# --------------------------------------------------------------------------
# Single-mode validity
# --------------------------------------------------------------------------

def _mode_coupling_terms(model: CBJJModel) -> sp.csr_matrix:
    """H minus its junction-only part: every term that involves the resonator mode."""
    c = model.coeffs.internal()
    b = model.basis
    T = -c["E_kin"] * _second_derivative(b.n_phi, b.d_phi)
    V = sp.diags(-c["E_J"] * (np.cos(b.phi) + model.I * b.phi))
    return (model.H - lift_phi(T + V, b)).tocsr()


def single_mode_validity(model: CBJJModel, n_states: int = 30) -> dict:
    """Leading-order leakage into the second resonator mode.

    Mode b (index 1) is given the same junction mass as mode a so that both
    share one junction Hamiltonian. With ``Psi_0, Psi_1`` the two lowest
    bound states of junction + mode a (mode b empty) and ``Psi~_1`` the
    first excited state of junction + mode b (mode a empty), returns
    ``g = <Psi~_1 | H_b | Psi>`` for both, the energy gaps, the ratios and
    ``(g_1a1b / Delta_1a1b)**2``. The direct mode-mode term is omitted.
    """
    pa = solve_spectrum(model, n_states)
    bound_a = sorted(lowest_band_bound(pa), key=lambda p: p.energy)
    if len(bound_a) < 2:
        raise NoTransitionError("mode a needs two bound lowest-band states")
    mb = dataclasses.replace(model, mode_index=1)
    # share the junction mass of mode a
    mb.__dict__["coeffs"] = dataclasses.replace(mb.coeffs, M=model.coeffs.M)
    pb = solve_spectrum(mb, n_states)
    bound_b = sorted([p for p in pb if p.bound_flag], key=lambda p: p.energy)
    if len(bound_b) < 2:
        raise NoTransitionError("junction + mode b needs two bound states")
    excited_b = bound_b[1]
    Hb = _mode_coupling_terms(mb)

    ba = model.basis
    # a-states projected on the empty a-mode, then placed in mode b's vacuum
    def vac_b(pair):
        chi = ba.reshape(pair.state)[:, 0]
        out = np.zeros((mb.basis.n_phi, mb.basis.n_fock), dtype=complex)
        out[:, 0] = chi
        return out.ravel()

    g_11 = complex(np.vdot(excited_b.state, Hb @ vac_b(bound_a[1])))
    g_01 = complex(np.vdot(excited_b.state, Hb @ vac_b(bound_a[0])))
    d_11 = bound_a[1].energy - excited_b.energy
    d_01 = bound_a[0].energy - excited_b.energy
    r11, r01 = abs(g_11) / abs(d_11), abs(g_01) / abs(d_01)
    f = 2 * np.pi
    return dict(
        g_1a1b_ghz=abs(g_11) / f, g_01b_ghz=abs(g_01) / f,
        delta_1a1b_ghz=d_11 / f, delta_01b_ghz=d_01 / f,
        ratio_1a1b=r11, ratio_01b=r01, est_population=r11**2,
        omega_b_ghz=mb.coeffs.omega / GHZ / f,
        h_ab_omitted=True,
    )
