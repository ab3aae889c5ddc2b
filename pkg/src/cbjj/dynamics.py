"""Driven propagation with a time-dependent imaginary potential (TDIP).

The state is advanced with the implicit mid-point (Crank-Nicolson) rule

    (1 + i dt/2 K) psi_{n+1} = (1 - i dt/2 K) psi_n,
    K = H - E_ref + s(t_mid) D + F_n - i W_n,

where D is the drive operator, F an optional mean-field friction term and W
the absorbing potential placed beyond the classical turning point of the
photon-dressed potential. ``1 + i dt/2 (H - E_ref - i W_0)`` is factored once
in banded form; the small remainder is handled by fixed-point iteration and
the factorization is refreshed whenever W drifts too far from W_0.

With this rule ``||psi_{n+1}||^2 - ||psi_n||^2 = -2 dt <psi_mid|W|psi_mid>``
exactly, so the recorded loss rate integrates to the norm loss.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .hamiltonian import CBJJModel, ProductBasis
from .potential import (Moments, effective_potential, state_moments, turning_point,
                        well_and_barrier)

__all__ = [
    "CapConfig", "FrictionConfig", "PropagationRecord", "StepSizeError", "IntegratorError",
    "effective_potential", "turning_point", "cap_profile", "propagate", "detection_run",
    "efficiency", "rabi_time", "Moments", "state_moments", "ground_state", "write_record",
    "cap_reflection_test", "calibrate_cap", "BandedLU",
]


class StepSizeError(RuntimeError):
    """The norm grew during a step: the integrator is not resolving the dynamics."""


class IntegratorError(ValueError):
    """Inconsistent inputs to the efficiency or Rabi-time helpers."""


@dataclass(frozen=True)
class CapConfig:
    """Polynomial absorbing potential.

    ``strength`` is the value at the box edge in GHz (ordinary frequency,
    i.e. ``2 pi strength`` rad/ns); ``onset_margin`` (rad) shifts the onset
    beyond the turning point.
    """

    strength: float = 200.0
    power: float = 2.0
    onset_margin: float = 0.0

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("CAP strength must be >= 0")
        if self.power < 1:
            raise ValueError("CAP power must be >= 1")


@dataclass(frozen=True)
class FrictionConfig:
    """Optional dissipation on the junction sector.

    ``momentum_damping`` adds the mean-field term ``gamma <p> phi`` which
    relaxes the mean junction momentum at ``rate`` (1/s). It is Hermitian and
    does not remove norm.
    """

    model: str = "off"
    rate: float = 0.0

    def __post_init__(self):
        if self.model not in ("off", "momentum_damping"):
            raise ValueError(f"unknown friction model {self.model!r}")
        if self.rate < 0:
            raise ValueError("friction rate must be >= 0")


@dataclass
class PropagationRecord:
    """Sampled time series of one propagation.

    Times in ns, ``rate`` (loss rate -d||psi||^2/dt) in 1/ns. ``mean_photon``
    is normalized by the surviving norm.
    """

    times: np.ndarray
    norms: np.ndarray
    mean_photon: np.ndarray
    switching_prob: np.ndarray
    rate: np.ndarray
    turning_points: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ns", "norm2", "mean_photon", "P_switch"])
            for row in zip(self.times, self.norms, self.mean_photon, self.switching_prob):
                w.writerow([f"{v:.10g}" for v in row])


def cap_profile(cap: CapConfig, phi_t: float, phi: np.ndarray, phi_edge: float) -> np.ndarray:
    """Absorbing potential (GHz) sampled on ``phi``; zero up to ``phi_t + onset_margin``."""
    start = phi_t + cap.onset_margin
    if cap.strength == 0 or start >= phi_edge:
        return np.zeros_like(phi, dtype=float)
    s = np.clip((phi - start) / (phi_edge - start), 0.0, None)
    return cap.strength * s**cap.power


def rabi_time(Omega: float) -> float:
    """``pi/|Omega|``; the unit is the inverse of that of ``Omega``."""
    if Omega == 0 or not np.isfinite(Omega):
        raise IntegratorError("Rabi time undefined for Omega = 0")
    return float(np.pi / abs(Omega))


def efficiency(signal: PropagationRecord, dark: PropagationRecord):
    """Detector efficiency ``xi(t) = P_signal - P_dark`` with its maximum and argmax.

    Returns
    -------
    xi : ndarray
    xi_max : float
    t_max : float
    """
    if len(signal.times) != len(dark.times) or not np.allclose(signal.times, dark.times,
                                                               rtol=0, atol=1e-9):
        raise IntegratorError("efficiency needs records on the same time grid")
    xi = signal.switching_prob - dark.switching_prob
    k = int(np.argmax(xi))
    return xi, float(xi[k]), float(signal.times[k])


# --------------------------------------------------------------------------
# banded LU
# --------------------------------------------------------------------------

class BandedLU:
    """LU factors of a banded sparse matrix, via LAPACK gbtrf/gbtrs."""

    def __init__(self, A: sp.spmatrix):
        A = sp.coo_matrix(A)
        self.kl = int(max(0, (A.row - A.col).max()))
        self.ku = int(max(0, (A.col - A.row).max()))
        n = A.shape[0]
        ab = np.zeros((2 * self.kl + self.ku + 1, n), dtype=complex)
        ab[self.kl + self.ku + A.row - A.col, A.col] = A.data
        self.lu, self.piv, info = lapack.zgbtrf(ab, self.kl, self.ku)
        if info != 0:
            raise StepSizeError(f"banded factorization failed (info={info})")

    def solve(self, b):
        x, info = lapack.zgbtrs(self.lu, self.kl, self.ku, b, self.piv)
        if info != 0:
            raise StepSizeError(f"banded solve failed (info={info})")
        return x


# --------------------------------------------------------------------------
# propagation
# --------------------------------------------------------------------------

def junction_energy(psi, model: CBJJModel, U: np.ndarray) -> float:
    """``<T> + <U_eff>`` of the (unnormalized) state, normalized (rad/ns)."""
    b = model.basis
    Y = b.reshape(psi)
    norm2 = np.vdot(psi, psi).real
    T = model.ops["kinetic"]
    kin = np.vdot(psi, T @ psi).real
    P = (np.abs(Y) ** 2).sum(axis=1)
    return float((kin + (P * U).sum()) / norm2)


def _tdip(psi, model: CBJJModel, cap: CapConfig):
    """Turning point and absorbing potential (rad/ns, on the phase grid) for the current state."""
    x = model.basis.phi
    m = state_moments(psi, model.basis)
    U = effective_potential(model.coeffs, m, x)
    E = junction_energy(psi, model, U)
    phi_t = turning_point(U, x, E, model.coeffs.phi_J_hat)
    W = 2 * np.pi * cap_profile(cap, phi_t, x, model.basis.phi_max)
    return phi_t, W, m


def propagate(model: CBJJModel, psi0: np.ndarray, t_final: float, dt: float, *,
              drive: sp.spmatrix | None = None, omega_out: float = 0.0,
              cap: CapConfig | None = CapConfig(), friction: FrictionConfig = FrictionConfig(),
              e_ref: float | None = None, sample_every: float = 0.1,
              fixed_point_tol: float = 1e-13, refactor_threshold: float = 0.05,
              max_fixed_point: int = 50, tdip: bool = True) -> PropagationRecord:
    """Integrate ``i d psi/dt = (H + H_out(t) - i V_im(t)) psi`` on ``[0, t_final]`` ns.

    Parameters
    ----------
    model : CBJJModel
    psi0 : ndarray
        Initial state on ``model.basis``.
    t_final, dt : float
        Duration and step in ns.
    drive : sparse matrix, optional
        Time-independent part of the drive (rad/ns); multiplied by
        ``sin(omega_out t)``.
    omega_out : float
        Drive frequency in rad/ns.
    cap : CapConfig or None
        None switches the absorbing potential off.
    e_ref : float, optional
        Energy subtracted from H (only a global phase); defaults to <psi0|H|psi0>.
    sample_every : float
        Spacing of the recorded samples in ns.
    tdip : bool
        Re-evaluate the turning point every step (True) or keep the initial one.

    Raises
    ------
    StepSizeError
        If the norm grows by more than 1e-6 in a step or the fixed-point
        iteration fails to converge.
    """
    if dt <= 0 or t_final < 0:
        raise ValueError("need dt > 0 and t_final >= 0")
    b = model.basis
    nf = b.n_fock
    dim = b.dim
    psi = np.array(psi0, dtype=complex)
    if psi.shape != (dim,):
        raise ValueError(f"state has shape {psi.shape}, basis needs ({dim},)")
    H = model.H
    if e_ref is None:
        e_ref = float(np.vdot(psi, H @ psi).real / np.vdot(psi, psi).real)
    Hs = (H - e_ref * sp.identity(dim, format="csr")).tocsr()
    I_sp = sp.identity(dim, format="csr")
    h = 0.5 * dt
    use_cap = cap is not None and cap.strength > 0
    damp = friction.model == "momentum_damping" and friction.rate > 0
    gamma_f = friction.rate * 1e-9  # 1/s -> 1/ns
    phi_op = model.ops["phi"].diagonal().real if damp else None
    p_op = model.ops["q_phi"] if damp else None
    D = drive.tocsr() if drive is not None else None

    def cap_now(state):
        if not use_cap:
            return np.nan, np.zeros(b.n_phi), None
        return _tdip(state, model, cap)

    phi_t, W_phi, _ = cap_now(psi)
    phi_t0 = phi_t

    def factor(Wp):
        Wd = np.repeat(Wp, nf)
        return BandedLU((I_sp + 1j * h * (Hs - 1j * sp.diags(Wd))).tocsc()), Wp.copy()

    lu, W0_phi = factor(W_phi)

    n_steps = int(round(t_final / dt))
    every = max(1, int(round(sample_every / dt)))
    times, norms, photons, rates, tps = [], [], [], [], []

    def sample(k, state, rate_val, tp):
        n2 = np.vdot(state, state).real
        m = state_moments(state, b)
        times.append(k * dt)
        norms.append(n2)
        photons.append(m.n_bar)
        rates.append(rate_val)
        tps.append(tp)

    sample(0, psi, 2 * np.vdot(psi, np.repeat(W_phi, nf) * psi).real / max(np.vdot(psi, psi).real, 1e-300), phi_t)
    n_prev = np.vdot(psi, psi).real
    rate_acc = 0.0
    n_refactor = 0
    for k in range(n_steps):
        t_mid = (k + 0.5) * dt
        if use_cap and tdip and k > 0:
            phi_t, W_phi, _ = cap_now(psi)
        elif use_cap and not tdip:
            phi_t = phi_t0
        if use_cap and h * np.max(np.abs(W_phi - W0_phi)) * 2 * np.pi > refactor_threshold:
            lu, W0_phi = factor(W_phi)
            n_refactor += 1
        dW = np.repeat(W_phi - W0_phi, nf)
        W = np.repeat(W_phi, nf)
        # remainder operator Delta acting on a vector
        s = np.sin(omega_out * t_mid) if D is not None else 0.0
        fdiag = None
        if damp:
            nn = np.vdot(psi, psi).real
            p_mean = np.vdot(psi, p_op @ psi).real / nn
            fdiag = gamma_f * p_mean * phi_op

        def delta(v):
            out = -1j * dW * v
            if D is not None and s != 0.0:
                out = out + s * (D @ v)
            if fdiag is not None:
                out = out + fdiag * v
            return out

        rhs = psi - 1j * h * (Hs @ psi - 1j * W * psi + delta(psi))
        new = lu.solve(rhs)
        if D is not None or damp or np.any(dW):
            for it in range(max_fixed_point):
                nxt = lu.solve(rhs - 1j * h * delta(new))
                err = np.linalg.norm(nxt - new)
                new = nxt
                if err <= fixed_point_tol * np.linalg.norm(new):
                    break
            else:
                raise StepSizeError(f"fixed-point iteration stalled at t={t_mid:.4f} ns "
                                    f"(last change {err:.2e})")
        mid = 0.5 * (psi + new)
        rate_val = 2 * np.vdot(mid, W * mid).real
        psi = new
        n_now = np.vdot(psi, psi).real
        if n_now - n_prev > 1e-6:
            raise StepSizeError(f"norm grew by {n_now - n_prev:.2e} at t={t_mid:.4f} ns")
        n_prev = n_now
        rate_acc = rate_val
        if (k + 1) % every == 0:
            sample(k + 1, psi, rate_acc, phi_t)
    meta = dict(dt_ns=dt, t_final_ns=t_final, n_steps=n_steps, refactorizations=n_refactor,
                e_ref_rad_per_ns=e_ref, cap=asdict(cap) if cap is not None else None,
                friction=asdict(friction), tdip=tdip, omega_out_rad_per_ns=omega_out,
                drive=D is not None, dim=dim)
    norms_a = np.array(norms)
    P = 1.0 - norms_a
    return PropagationRecord(times=np.array(times), norms=norms_a, mean_photon=np.array(photons),
                             switching_prob=P, rate=np.array(rates),
                             turning_points=np.array(tps), meta=meta)


# --------------------------------------------------------------------------
# detection runs
# --------------------------------------------------------------------------

def ground_state(model: CBJJModel):
    """Lowest bound eigenpair of the model (raises if none is bound)."""
    from .spectral import solve_spectrum

    pairs = solve_spectrum(model)
    bound = sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)
    if not bound:
        raise RuntimeError(f"no bound state at I={model.I}")
    return bound[0], pairs


def detection_run(model: CBJJModel, beta: float, omega_out: float, t_final: float = 100.0,
                  dt: float = 1e-3, cap: CapConfig = CapConfig(),
                  friction: FrictionConfig = FrictionConfig(), sample_every: float = 0.1,
                  psi0=None) -> PropagationRecord:
    """Propagate from the ground state under a drive of amplitude ``beta``.

    ``omega_out`` in rad/ns. ``beta = 0`` gives the dark-count reference.
    """
    if psi0 is None:
        g, _ = ground_state(model)
        psi0, e_ref = g.state, g.energy
    else:
        e_ref = None
    D = model.drive(beta, omega_out) if beta != 0 else None
    rec = propagate(model, psi0, t_final, dt, drive=D, omega_out=omega_out, cap=cap,
                    friction=friction, e_ref=e_ref, sample_every=sample_every)
    rec.meta.update(beta=beta, I=model.I, n_phi=model.basis.n_phi, n_fock=model.basis.n_fock,
                    phi_min=model.basis.phi_min, phi_max=model.basis.phi_max)
    return rec


def write_record(rec: PropagationRecord, path_csv, extra_meta: dict | None = None):
    """CSV plus a ``.json`` sidecar with the run metadata."""
    rec.to_csv(path_csv)
    meta = dict(rec.meta)
    if extra_meta:
        meta.update(extra_meta)
    with open(os.path.splitext(path_csv)[0] + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


# --------------------------------------------------------------------------
# CAP calibration
# --------------------------------------------------------------------------

def cap_reflection_test(model: CBJJModel, cap: CapConfig, dt: float = 1e-4,
                        t_final: float | None = None, extension: float = 15.0) -> float:
    """Reflection plus transmission error of the absorber for a test wave packet.

    A Gaussian packet on the bare junction (no resonator coupling), centred
    on the barrier top with kinetic energy equal to the plasma frequency, is
    sent downhill. The same packet is also propagated without absorber on a
    grid extended by ``extension`` rad beyond the box edge, where the
    potential is held flat so nothing comes back in time. The returned
    error is the difference of the norms left of the absorber onset at the
    end of the two runs.
    """
    from .hamiltonian import _second_derivative

    b = model.basis
    c = model.coeffs.internal()
    pJ = model.coeffs.phi_J_hat
    h = b.d_phi

    def washboard_on(x, flat_from=None):
        U = -c["E_J"] * (np.cos(x) + model.I * x)
        if flat_from is not None:
            U_edge = -c["E_J"] * (np.cos(flat_from) + model.I * flat_from)
            U = np.where(x > flat_from, U_edge, U)
        return U

    x = b.phi
    U = washboard_on(x)
    i0, ib = well_and_barrier(U, x, pJ)
    x_b = x[ib] if ib is not None else pJ
    w_p = np.sqrt(2 * c["E_kin"] * c["E_J"] * np.cos(pJ))
    phi_t = turning_point(U, x, U[i0] + 0.5 * w_p, pJ)
    onset = phi_t + cap.onset_margin
    k0 = np.sqrt(w_p / c["E_kin"])
    width = 2.0 / k0
    if t_final is None:
        t_final = 4 * (b.phi_max - x_b) / (2 * c["E_kin"] * k0)
    n_steps = int(round(t_final / dt))

    def run(xg, Ug, Wg):
        n = len(xg)
        H1 = -c["E_kin"] * _second_derivative(n, h) + sp.diags(Ug - 1j * Wg)
        A = (sp.identity(n) + 0.5j * dt * H1).tocsc()
        B = (sp.identity(n) - 0.5j * dt * H1).tocsr()
        lu = BandedLU(A)
        psi = np.exp(-((xg - x_b) / width) ** 2 + 1j * k0 * xg)
        psi /= np.linalg.norm(psi)
        for _ in range(n_steps):
            psi = lu.solve(B @ psi)
        return float(np.sum(np.abs(psi[xg < onset]) ** 2))

    W = 2 * np.pi * cap_profile(cap, phi_t, x, b.phi_max)
    with_cap = run(x, U, W)
    n_ext = int(extension / h)
    x_long = np.concatenate([x, x[-1] + h * np.arange(1, n_ext + 1)])
    ref = run(x_long, washboard_on(x_long, flat_from=b.phi_max), np.zeros_like(x_long))
    return abs(with_cap - ref)


def calibrate_cap(model: CBJJModel, strengths=(25, 50, 100, 200, 400, 800, 1600),
                  power: float = 2.0, onset_margin: float = 0.0):
    """Scan strengths and return ``(best CapConfig, {strength: error})``."""
    errs = {}
    for s in strengths:
        errs[s] = cap_reflection_test(model, CapConfig(strength=s, power=power,
                                                       onset_margin=onset_margin))
    best = min(errs, key=errs.get)
    return CapConfig(strength=best, power=power, onset_margin=onset_margin), errs
