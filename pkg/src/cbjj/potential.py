"""Mean-field potential of the phase particle and its landmarks.

Shared by the bound-state classifier and the imaginary-potential propagator.
All energies in rad/ns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import HamiltonianCoefficients, ProductBasis


@dataclass(frozen=True)
class Moments:
    """Resonator moments entering the effective potential.

    ``phi_field`` is the mean of ``i(a - a^dag)``.
    """

    n_bar: float = 0.0
    n2: float = 0.0
    phi_field: float = 0.0


def state_moments(psi: np.ndarray, basis: ProductBasis) -> Moments:
    """Moments of a (possibly unnormalized) state, normalized by its norm squared."""
    Y = basis.reshape(psi)
    w = np.abs(Y) ** 2
    norm2 = w.sum()
    if norm2 <= 0:
        return Moments()
    n = np.arange(basis.n_fock)
    n_bar = float((w * n).sum() / norm2)
    n2 = float((w * n * (n - 1)).sum() / norm2)
    # <i(a - a^dag)> = -2 Im <a>
    sq = np.sqrt(n[1:])
    a_mean = np.vdot(Y[:, :-1], Y[:, 1:] * sq)
    phif = float(-2 * a_mean.imag / norm2)
    return Moments(n_bar=n_bar, n2=n2, phi_field=phif)


def effective_potential(coeffs: HamiltonianCoefficients, moments: Moments, phi) -> np.ndarray:
    """Photon-dressed washboard sampled at ``phi`` (rad/ns).

    Resonator mean field of the assembled Hamiltonian::

        U = w n - E_J (cos(phi) + I phi) + (eta n + kappa <a^dag a^dag a a>) cos(phi)
            + (mu + chi n) <phi_field> sin(phi - phi_J)

    The signs follow the Hamiltonian, so a photon (eta > 0) makes the well
    shallower.
    """
    c = coeffs.internal()
    phi = np.asarray(phi, dtype=float)
    m = moments
    depth = c["E_J"] - c["eta"] * m.n_bar - c["kappa"] * m.n2
    lin = (c["mu"] + c["chi"] * m.n_bar) * m.phi_field
    return (c["omega"] * m.n_bar - depth * np.cos(phi) - c["E_J"] * coeffs.I * phi
            + lin * np.sin(phi - coeffs.phi_J_hat))


def well_and_barrier(U: np.ndarray, phi: np.ndarray, phi_ref: float):
    """Indices of the well minimum nearest ``phi_ref`` and the barrier top downhill of it.

    The barrier is the first local maximum to the right of the well. Returns
    ``(i_well, i_barrier)``; ``i_barrier`` is None when the potential has no
    local maximum there (the well has been washed out).
    """
    i = int(np.clip(np.searchsorted(phi, phi_ref), 1, len(phi) - 2))
    # slide downhill to the local minimum
    while 0 < i < len(U) - 1:
        if U[i - 1] < U[i]:
            i -= 1
        elif U[i + 1] < U[i]:
            i += 1
        else:
            break
    j = i
    while j < len(U) - 1 and U[j + 1] >= U[j]:
        j += 1
    if j == i or j == len(U) - 1:
        return i, None
    return i, j


def turning_point(U: np.ndarray, phi: np.ndarray, energy: float, phi_ref: float) -> float:
    """Outer classical turning point on the downhill side of the barrier.

    Returns the first position beyond the barrier top where ``U`` falls back
    to ``energy`` (linear interpolation between nodes). If the energy lies
    above the barrier, or the potential never comes back down to it inside
    the grid, the barrier position itself is returned. Without a barrier the
    well minimum is used.
    """
    i_well, i_bar = well_and_barrier(U, phi, phi_ref)
    if i_bar is None:
        return float(phi[i_well])
    if energy >= U[i_bar]:
        return float(phi[i_bar])
    below = np.nonzero(U[i_bar:] <= energy)[0]
    if len(below) == 0:
        return float(phi[i_bar])
    k = i_bar + below[0]
    u0, u1 = U[k - 1], U[k]
    s = (u0 - energy) / (u0 - u1) if u0 != u1 else 0.0
    return float(phi[k - 1] + s * (phi[k] - phi[k - 1]))
