import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cbjj import CBJJModel
from cbjj.dynamics import (CapConfig, FrictionConfig, IntegratorError, PropagationRecord,
                           StepSizeError, cap_profile, cap_reflection_test, detection_run,
                           efficiency, ground_state, propagate, rabi_time)
from cbjj.potential import (Moments, effective_potential, state_moments, turning_point,
                            well_and_barrier)


def _record(P, times=None):
    P = np.asarray(P, dtype=float)
    t = np.arange(len(P)) * 0.1 if times is None else np.asarray(times)
    z = np.zeros_like(P)
    return PropagationRecord(times=t, norms=1 - P, mean_photon=z, switching_prob=P, rate=z,
                             turning_points=z)


def test_bare_potential_without_photons(model_092):
    x = model_092.basis.phi
    U = effective_potential(model_092.coeffs, Moments(), x)
    E_J = model_092.coeffs.E_J_internal
    assert U == pytest.approx(-E_J * (np.cos(x) + 0.92 * x), rel=1e-14)


def _barrier_height(model, m):
    x = model.basis.phi
    U = effective_potential(model.coeffs, m, x)
    i, j = well_and_barrier(U, x, model.coeffs.phi_J_hat)
    return None if j is None else U[j] - U[i]


def test_photon_lowers_barrier(model_092):
    h0 = _barrier_height(model_092, Moments())
    h1 = _barrier_height(model_092, Moments(n_bar=1.0))
    assert h1 < h0


def test_mean_field_matches_hamiltonian(small_model):
    """For a state localized at one grid point, <H> minus kinetic equals U_eff."""
    b = small_model.basis
    H = small_model.H
    # (|0> + e^{i t}|1>)/sqrt2 makes <n phi_field> = n <phi_field> exactly
    c = np.zeros(b.n_fock, complex)
    c[0], c[1] = 1 / np.sqrt(2), np.exp(0.7j) / np.sqrt(2)
    k = b.n_phi // 2
    psi = np.zeros((b.n_phi, b.n_fock), complex)
    psi[k] = c
    psi = psi.ravel()
    m = state_moments(psi, b)
    x = b.phi[k]
    U = effective_potential(small_model.coeffs, m, x)
    E = np.vdot(psi, H @ psi).real
    # drop the kinetic diagonal, which the mean field does not contain
    kin = (small_model.ops["kinetic"] @ psi)[k * b.n_fock] / c[0]
    assert E - kin == pytest.approx(float(U), rel=1e-10, abs=1e-8)


def test_barrier_vanishes_at_large_tilt(model_092):
    c = model_092.coeffs.internal()
    E_J = c["E_J"]
    # field pushing downhill with a force well beyond E_J(1 - I)
    pf = -5 * E_J * (1 - 0.92) / c["mu"]
    assert _barrier_height(model_092, Moments(phi_field=pf)) is None
    assert _barrier_height(model_092, Moments(phi_field=0.01 * pf)) is not None


def test_turning_point_rules():
    x = np.linspace(-3, 9, 1201)
    U = -(np.cos(x) + 0.5 * x)
    i, j = well_and_barrier(U, x, 0.5)
    E = U[i] + 0.3 * (U[j] - U[i])
    t = turning_point(U, x, E, 0.5)
    assert x[j] < t < x[-1]
    k = np.searchsorted(x, t)
    assert U[k - 1] >= E >= U[k]
    assert turning_point(U, x, U[j] + 1.0, 0.5) == pytest.approx(x[j])


def test_turning_point_at_092_ground_state(model_092, pairs_092):
    x = model_092.basis.phi
    U = effective_potential(model_092.coeffs, Moments(), x)
    E = min(p.energy for p in pairs_092 if p.bound_flag)
    t = turning_point(U, x, E, model_092.coeffs.phi_J_hat)
    assert model_092.coeffs.phi_J_hat < t < model_092.basis.phi_max


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0, 1e4), p=st.floats(1, 6), m=st.floats(0, 0.3), t=st.floats(1.5, 2.5))
def test_cap_profile(s, p, m, t):
    x = np.linspace(0, 3, 300)
    W = cap_profile(CapConfig(strength=s, power=p, onset_margin=m), t, x, 3.0)
    assert np.all(W >= 0)
    assert np.all(W[x <= t + m] == 0)
    assert np.all(np.diff(W) >= 0)
    assert np.all(cap_profile(CapConfig(strength=0.0), t, x, 3.0) == 0)


def test_cap_config_validation():
    with pytest.raises(ValueError):
        CapConfig(strength=-1)
    with pytest.raises(ValueError):
        CapConfig(power=0.5)
    with pytest.raises(ValueError):
        FrictionConfig(model="stochastic")


def test_rabi_time():
    Om = 2 * np.pi * 29e6
    assert rabi_time(Om) * 1e9 == pytest.approx(17.24, abs=0.01)
    assert rabi_time(2 * Om) == pytest.approx(rabi_time(Om) / 2)
    assert rabi_time(-Om) > 0
    with pytest.raises(IntegratorError):
        rabi_time(0.0)


def test_efficiency_helpers():
    P = np.linspace(0, 0.5, 11) ** 2
    xi, xm, tm = efficiency(_record(P), _record(P))
    assert np.all(xi == 0)
    xi, xm, tm = efficiency(_record(P), _record(0.5 * P))
    assert xi[0] == 0 and xm == pytest.approx(0.125) and tm == pytest.approx(1.0)
    with pytest.raises(IntegratorError):
        efficiency(_record(P), _record(P[:-1]))
    with pytest.raises(IntegratorError):
        efficiency(_record(P), _record(P, times=np.arange(11) * 0.2))


@pytest.fixture(scope="module")
def small_ground(small_model):
    g, pairs = ground_state(small_model)
    bound = sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)
    w = bound[1].energy - bound[0].energy if len(bound) > 1 else 2 * np.pi * 2.45
    return g, w


def test_stationary_state_keeps_its_norm(small_model, small_ground):
    g, _ = small_ground
    rec = propagate(small_model, g.state, 100.0, 1e-2, cap=None, e_ref=g.energy,
                    sample_every=10.0)
    assert np.max(np.abs(rec.norms - 1)) < 1e-8


def test_hermitian_drive_keeps_the_norm(small_model, small_ground):
    g, w = small_ground
    D = small_model.drive(20.0, w)
    rec = propagate(small_model, g.state, 10.0, 2e-3, drive=D, omega_out=w, cap=None,
                    e_ref=g.energy, sample_every=1.0)
    assert np.max(np.abs(rec.norms - 1)) < 1e-8
    assert rec.mean_photon[-1] != rec.mean_photon[0]


def test_switching_probability_monotone_and_rate_consistent(small_model, small_ground):
    g, w = small_ground
    dt = 2e-3
    rec = propagate(small_model, g.state, 5.0, dt, drive=small_model.drive(20.0, w), omega_out=w,
                    cap=CapConfig(), e_ref=g.energy, sample_every=dt)
    P = rec.switching_prob
    assert P[0] == pytest.approx(0, abs=1e-15)
    assert np.all((P >= -1e-14) & (P <= 1))
    assert np.all(np.diff(P) >= -1e-14)
    assert np.all(np.diff(rec.norms) <= 1e-14)
    integrated = np.sum(rec.rate[1:]) * dt
    assert integrated == pytest.approx(P[-1], rel=1e-2)


def test_norm_growth_raises(small_model, small_ground):
    g, _ = small_ground
    gain = 1j * sp.identity(small_model.basis.dim, format="csr")
    with pytest.raises(StepSizeError):
        propagate(small_model, g.state, 1.0, 1e-3, drive=gain, omega_out=1.0, cap=None,
                  e_ref=g.energy)


def test_wrong_state_shape(small_model):
    with pytest.raises(ValueError):
        propagate(small_model, np.ones(3), 1.0, 1e-3)


def test_friction_channel_runs_and_is_off_by_default(small_model, small_ground):
    g, w = small_ground
    D = small_model.drive(20.0, w)
    kw = dict(drive=D, omega_out=w, e_ref=g.energy, sample_every=0.5)
    off = propagate(small_model, g.state, 2.0, 2e-3, **kw)
    zero = propagate(small_model, g.state, 2.0, 2e-3,
                     friction=FrictionConfig("momentum_damping", 0.0), **kw)
    on = propagate(small_model, g.state, 2.0, 2e-3,
                   friction=FrictionConfig("momentum_damping", 2e9), **kw)
    assert np.array_equal(off.norms, zero.norms)
    assert np.all(np.diff(on.norms) <= 0)
    assert on.meta["friction"]["model"] == "momentum_damping"


def test_detection_run_starts_at_zero(small_model, small_ground):
    _, w = small_ground
    rec = detection_run(small_model, 1.0, w, t_final=0.5, dt=1e-3)
    assert rec.switching_prob[0] == pytest.approx(0.0, abs=1e-15)
    assert rec.meta["beta"] == 1.0


def test_frozen_moment_tunneling_rate_increases_with_bias():
    """Junction alone (resonator frozen empty): positive escape rate growing with I."""
    rates = []
    for I in (0.90, 0.92, 0.94):
        m = CBJJModel(I=I, n_phi=512, n_fock=1, trim_above=150)
        g, _ = ground_state(m)
        rec = propagate(m, g.state, 5.0, 2e-3, e_ref=g.energy, sample_every=0.5)
        rates.append(np.mean(rec.rate[-4:]))
    assert rates[0] > 0
    assert np.all(np.diff(rates) > 0)


def test_default_cap_absorbs_test_packet():
    m = CBJJModel(I=0.92, trim_above=300)
    assert cap_reflection_test(m, CapConfig()) < 0.01
