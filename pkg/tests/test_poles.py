import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tunneldecay.errors import IncompletePoleSetError, PoleSearchError
from tunneldecay.poles import (boundary_scale, count_poles, find_poles, outgoing_mismatch,
                               pole_trajectory, polish_pole)
from tunneldecay.potentials import LI6, BathtubParams, PotentialProfile, build_profile

# square well of width A followed by a rectangular barrier (D_W um, V0 kHz)
A, D_W, V0 = 2.0, 0.3, 20.0
TOY = PotentialProfile.from_segments([(A, 0.0), (D_W, V0)])


def toy_mismatch(E):
    """Closed-form u'(L) - i k u(L) with u = sin(k x) in the well."""
    k = np.sqrt(LI6.wavenumber_sq(E) + 0j)
    q = np.sqrt(LI6.wavenumber_sq(V0) - k * k + 0j)
    s, c = np.sin(k * A), k * np.cos(k * A)
    u = s * np.cosh(q * D_W) + c * np.sinh(q * D_W) / q
    du = s * q * np.sinh(q * D_W) + c * np.cosh(q * D_W)
    return du - 1j * k * u


def winding(f, x0, x1, y0, y1, n=400):
    t = np.linspace(0, 1, n, endpoint=False)
    zs = np.concatenate([x0 + (x1 - x0) * t + 1j * y0, x1 + 1j * (y0 + (y1 - y0) * t),
                         x1 - (x1 - x0) * t + 1j * y1, x0 + 1j * (y1 - (y1 - y0) * t)])
    v = f(zs)
    return int(round(np.sum(np.angle(np.roll(v, -1) / v)) / (2 * np.pi)))


def bisect_roots(f, box, tol=1e-9):
    x0, x1, y0, y1 = box
    n = winding(f, *box)
    if n == 0:
        return []
    if max(x1 - x0, y1 - y0) < tol:
        return [complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))]
    if x1 - x0 >= y1 - y0:
        xm = 0.5 * (x0 + x1) + 1e-3 * (x1 - x0) * np.pi / 10
        return bisect_roots(f, (x0, xm, y0, y1), tol) + bisect_roots(f, (xm, x1, y0, y1), tol)
    ym = 0.5 * (y0 + y1) + 1e-3 * (y1 - y0) * np.e / 10
    return bisect_roots(f, (x0, x1, y0, ym), tol) + bisect_roots(f, (x0, x1, ym, y1), tol)


def test_toy_profile_against_transcendental_oracle():
    window, depth = (0.05, 30.0), 12.0
    ref = sorted(bisect_roots(toy_mismatch, (window[0], window[1], -depth, -1e-9)),
                 key=lambda e: e.real)
    ps = find_poles(TOY, window, depth)
    E = np.array([complex(LI6.energy_khz(p.kappa)) for p in ps])
    assert len(ref) == len(ps) >= 2
    assert np.max(np.abs(E - np.array(ref)) / np.abs(np.array(ref))) < 1e-7


def test_free_profile_has_no_poles():
    free = build_profile("constant", (3.0, 0.0))
    k = np.array([0.5 - 0.1j, 2.0 - 1.0j])
    # V = 0: u = sin(kx)/k, mismatch = exp(-ikL) (no zeros)
    f = outgoing_mismatch(k, free)
    assert np.allclose(f, np.exp(-1j * k * 3.0), rtol=1e-12)
    assert count_poles(free, (0.0, 50.0), 20.0)[0] == 0


@settings(max_examples=1000)
@given(st.floats(0.01, 4.0), st.floats(-3.0, 3.0))
def test_mismatch_time_reversal_symmetry(a, b):
    k = complex(a, b)
    lhs = outgoing_mismatch(-np.conj(k), TOY)
    rhs = np.conj(outgoing_mismatch(k, TOY))
    assert abs(lhs - rhs) <= 1e-12 * boundary_scale(k, TOY)


@pytest.fixture(scope="module")
def row1_profile():
    return build_profile("bathtub", BathtubParams(V2=5.56, w=2.7, b=0.53, sigma=0.1))


def test_pole_invariants(row1_profile):
    ps = find_poles(row1_profile, (0.0, 300.0), 80.0)
    n, _ = count_poles(row1_profile, (0.0, 300.0), 80.0)
    assert len(ps) == n
    E = np.array([p.energy for p in ps])
    assert np.all(np.diff(E) > 0)
    for p in ps:
        assert p.kappa.real > 0 and p.kappa.imag < 0 and p.width > 0
        Ec = complex(LI6.energy_khz(p.kappa))
        assert abs(complex(p.energy, -p.width / 2) - Ec) <= 1e-10 * abs(Ec)
        assert p.residual < 1e-10
    # lifetime and width bookkeeping
    p1 = ps[0]
    assert p1.lifetime == pytest.approx(1 / (2 * np.pi * p1.width))
    assert p1.R == pytest.approx(p1.energy / p1.width)


def test_subdivided_counts_add_up(row1_profile):
    whole = count_poles(row1_profile, (0.0, 300.0), 80.0)[0]
    lo = count_poles(row1_profile, (0.0, 150.0), 80.0)[0]
    hi = count_poles(row1_profile, (150.0, 300.0), 80.0)[0]
    assert whole == lo + hi


def test_seed_refinement_stable(row1_profile):
    a = find_poles(row1_profile, (0.0, 20.0), 10.0, seed_grid=(40, 20)).kappas
    b = find_poles(row1_profile, (0.0, 20.0), 10.0, seed_grid=(80, 40)).kappas
    assert a.shape == b.shape and np.allclose(a, b, rtol=1e-10)


def test_incomplete_set_reported(row1_profile):
    # one seed cannot find every pole and refinements are disabled
    with pytest.raises(IncompletePoleSetError):
        find_poles(row1_profile, (0.0, 300.0), 80.0, seed_grid=(1, 1), refinements=0)


def test_trajectory_barrier_width_sweep():
    values = [0.53, 0.42, 0.26, 0.17]

    def prof(b):
        return build_profile("bathtub", BathtubParams(V2=5.56, w=2.7, b=b, sigma=0.1))

    k0 = find_poles(prof(values[0]), (0.0, 5.0), 2.0)[0].kappa
    track = pole_trajectory(prof, values, k0)
    widths = [p.width for p in track]
    assert len(track) == len(values)
    assert np.all(np.diff(widths) > 0)
    # a zero-length sweep repeats the pole
    same = pole_trajectory(prof, [0.53, 0.53], k0)
    assert same[0].kappa == pytest.approx(same[1].kappa, rel=1e-12)


def test_polish_failure():
    with pytest.raises(PoleSearchError):
        find_poles(TOY, (5.0, 1.0), 1.0)
    p = polish_pole(TOY, find_poles(TOY, (0.05, 30.0), 12.0)[0].kappa * (1 + 1e-3))
    assert p.residual < 1e-10
