import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import scenario
from tunneldecay.dynamics import (DecaySeries, decompose, fit_exponential_rate,
                                  fit_power_exponent, measured_transition, nonescape_full,
                                  nonescape_single_pole, time_grid, transition_time,
                                  wavefunction_interior, wavefunction_long_time)
from tunneldecay.errors import DynamicsError
from tunneldecay.potentials import InitialState
from tunneldecay.states import ExpansionSet, build_state, overlaps




@pytest.fixture(scope="module")
def row5_states(row5):
    from tunneldecay.potentials import Grid
    from tunneldecay.runner import _box_origin
    prof = row5.profile
    grid = Grid.for_profile(prof, extra_breaks=(0.0, 3.0))
    return grid, [build_state(p, prof, grid) for p in row5.poles.poles[:10]]


def test_time_grid():
    t = time_grid(2.0, 1e-3, 50.0, 600)
    assert t[0] == pytest.approx(2e-3) and t[-1] == pytest.approx(100.0)
    assert np.allclose(np.diff(np.log(t)), np.log(t[1] / t[0]))
    assert time_grid(1.0, include_zero=True)[0] == 0.0
    with pytest.raises(DynamicsError):
        time_grid(1.0, 5.0, 1.0)


def test_split_form_identity(row5, row5_states):
    _, states = row5_states
    t = row5.report.tau_ms * np.array([0.05, 0.5, 1.0, 3.0, 10.0])
    a = wavefunction_interior(t, row5.expansion, states, form="m")
    b = wavefunction_interior(t, row5.expansion, states, form="split")
    assert np.max(np.abs(a - b) / np.max(np.abs(a), axis=1, keepdims=True)) < 1e-10


def test_long_time_wavefunction(row5, row5_states):
    # at 30 tau the interior wave should be the t^-3/2 term within 5%
    _, states = row5_states
    t = np.array([30.0]) * row5.report.tau_ms
    full = wavefunction_interior(t, row5.expansion, states, closure=True)
    asym = wavefunction_long_time(t, row5.expansion, states)
    assert np.linalg.norm(full - asym) / np.linalg.norm(full) < 0.05


def test_long_time_wavefunction_converges_as_inverse_t(row5, row5_states):
    # the gap to the leading term is the next order of the asymptotic series
    _, states = row5_states
    gaps = []
    for m in (60.0, 120.0, 240.0):
        t = np.array([m]) * row5.report.tau_ms
        full = wavefunction_interior(t, row5.expansion, states, closure=True)
        asym = wavefunction_long_time(t, row5.expansion, states)
        gaps.append(np.linalg.norm(full - asym) / np.linalg.norm(full))
    assert gaps[0] < 0.05
    assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.05)
    assert gaps[1] / gaps[2] == pytest.approx(2.0, rel=0.05)


def test_nonescape_basic(row5):
    tau = row5.report.tau_ms
    s = nonescape_full(time_grid(tau, include_zero=True), row5.expansion, tau=tau)
    assert s.P_full[0] == 1.0
    assert s.imag_residual < 1e-10
    ok = s.t >= s.meta["unreliable_below_ms"]
    assert np.all(s.P_full[ok] > 0) and np.all(s.P_full[ok] <= 1 + 1e-3)
    with pytest.raises(DynamicsError):
        nonescape_full(np.array([-1.0]), row5.expansion)


def test_non_hermitian_gram_is_reported(row5):
    ex = row5.expansion
    bad = ExpansionSet(ex.kappas, ex.C, ex.I, ex.J + 0.3j * np.triu(np.ones_like(ex.J), 1),
                       ex.diffusivity)
    with pytest.raises(DynamicsError, match="imaginary"):
        nonescape_full(np.array([0.1, 1.0]), bad)


@settings(max_examples=1000)
@given(st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=6), st.floats(-2.0, 1.7))
def test_nonescape_real_for_real_states(row5, row5_states, amps, logt):
    grid, states = row5_states
    L = grid.x[-1]
    psi = sum(a * np.sin((j + 1) * np.pi * grid.x / L) for j, a in enumerate(amps))
    nrm = np.sqrt(grid.integrate(psi ** 2))
    if nrm < 1e-3:
        return
    ex = overlaps(states, InitialState(w=L, x0=0.0, grid=grid, values=psi / nrm))
    t = np.array([10.0 ** logt]) * row5.report.tau_ms
    s = nonescape_full(t, ex, tau=row5.report.tau_ms)
    assert s.imag_residual <= 1e-10


def test_single_pole_components(row7):
    ex = row7.expansion
    tau = row7.report.tau_ms
    t = time_grid(tau, 0.5, 30.0, 200)
    d = decompose(ex, t)
    assert np.allclose(d.P_e / (abs(ex.C[0]) ** 2 * ex.I1), np.exp(-t / tau), rtol=1e-12)
    assert np.allclose(d.P_ne * t ** 3, d.P_ne[0] * t[0] ** 3, rtol=1e-12)
    with pytest.raises(DynamicsError):
        nonescape_single_pole(np.array([0.0]), ex.kappas[0], ex.C[0], ex.I1, ex.Y1, 1.0)


def test_decomposition_matches_full_expansion(row7):
    # R = 0.30: ten-pole P against P^e + P^{e,ne} + P^{ne} on [0.5, 30] tau
    tau = row7.report.tau_ms
    t = time_grid(tau, 0.5, 30.0, 200)
    full = nonescape_full(t, row7.expansion, tau=tau)
    d = decompose(row7.expansion, t)
    assert np.max(np.abs(full.P_full - d.total) / full.P_full) < 0.05


def test_one_pole_identity(row7):
    # exactly one pole: equal to the decomposition within 5% for t >= 0.5 tau
    ex = row7.expansion.truncate(1)
    tau = row7.report.tau_ms
    t = time_grid(tau, 0.5, 60.0, 200)
    one = nonescape_full(t, ex, tau=tau)
    rel = np.abs(one.P_full - decompose(ex, t).total) / one.P_full
    assert rel.max() < 0.05


def test_one_pole_identity_is_asymptotic(row7):
    # the closed forms carry the leading M asymptote only, so the gap shrinks with t
    ex = row7.expansion.truncate(1)
    tau = row7.report.tau_ms
    t = tau * np.array([15.0, 30.0, 60.0])
    one = nonescape_full(t, ex, tau=tau)
    rel = np.abs(one.P_full - decompose(ex, t).total) / one.P_full
    assert rel[0] < 0.05 and rel[0] > rel[1] > rel[2]


def test_interference_frequency(row5, row7):
    freqs = []
    for res in (scenario("table1_row1"), row5, row7):
        ex = res.expansion
        tau = res.report.tau_ms
        t = tau * np.linspace(0.5, 12.0, 4096)
        d = decompose(ex, t)
        env = np.exp(-0.5 * t / tau) * t ** -1.5
        sig = d.P_ene / env
        power = np.abs(np.fft.rfft(sig - sig.mean()))
        f = np.fft.rfftfreq(t.size, t[1] - t[0])
        peak = f[np.argmax(power)]
        assert abs(peak - res.report.E1_kHz) <= f[1]
        freqs.append(peak)
    # lower R, slower oscillation
    assert freqs[0] > freqs[1] > freqs[2]


def _series(t, P, tau=1.0):
    return DecaySeries(t=t, P_full=P, tau=tau, n_poles=0)


def test_fits_on_synthetic_curves():
    t = np.geomspace(0.1, 100.0, 400)
    fe = fit_exponential_rate(_series(t, np.exp(-t)), (1.0, 5.0))
    assert fe.value == pytest.approx(1.0, rel=1e-12) and fe.regime == "exponential"
    fp = fit_power_exponent(_series(t, 7.0 * t ** -3.0), (20.0, 40.0))
    assert fp.value == pytest.approx(-3.0, rel=1e-12)
    with pytest.raises(DynamicsError):
        fit_power_exponent(_series(t, t ** -3.0), (20.0, 20.01))
    # exponential meets A t^-3 where t^3 e^-t = A... solved directly
    A = 1e-6
    P = np.exp(-t) + A * t ** -3.0
    m = measured_transition(_series(t, P), (1.0, 5.0), (60.0, 100.0))
    assert np.exp(-m) == pytest.approx(A * m ** -3.0, rel=1e-6)


def test_nonexponential_flag(row7):
    assert fit_exponential_rate(row7.series, (1.0, 5.0)).regime == "nonexponential"


def test_transition_formula():
    assert transition_time(1.0).t0 == 12.25
    assert transition_time(27.36).t0 == pytest.approx(30.0, abs=0.3)
    assert transition_time(70.0).t0 == pytest.approx(35.0, abs=0.5)
    assert transition_time(np.e).winter == pytest.approx(5.0)
    with pytest.raises(DynamicsError):
        transition_time(0.0)
