import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tunneldecay.config import bundled_config
from tunneldecay.errors import ProfileError
from tunneldecay.poles import lowest_pole
from tunneldecay.potentials import (LI6, BathtubParams, Grid, HeidelbergParams, PotentialProfile,
                                    bathtub, box_initial_state, build_profile, effective_height)
from tunneldecay.runner import make_profile


def test_units():
    # hbar / 2m for lithium-6 in um^2/ms
    assert LI6.diffusivity == pytest.approx(5.279, rel=1e-3)
    E = 0.3 - 0.01j
    assert LI6.energy_khz(LI6.kappa_from_energy(E)) == pytest.approx(E, rel=1e-14)
    k = LI6.kappa_from_energy(E)
    assert k.real > 0 and k.imag < 0


def test_constant_profile():
    p = build_profile("constant", (3.0, 0.0))
    assert p.n_segments == 1 and p.L == 3.0
    assert p(4.0) == 0.0 and np.isinf(p(-1.0))


@pytest.mark.parametrize("row,ve", [(1, 4.19), (7, 0.66)])
def test_effective_height_table_rows(row, ve):
    assert effective_height(make_profile(bundled_config(f"table1_row{row}"))) == \
        pytest.approx(ve, abs=0.01)


def test_effective_height_rectangular():
    p = PotentialProfile.from_segments([(1.0, 0.0), (0.5, 5.56), (0.2, 1.0)])
    assert effective_height(p) == 5.56
    with pytest.raises(ProfileError):
        effective_height(PotentialProfile.from_segments([(1.0, 3.0), (1.0, 0.0)]))


def test_bathtub_shape():
    prm = BathtubParams(V2=5.56, w=2.7, b=0.53, sigma=0.1)
    assert bathtub(prm, -5.0) == pytest.approx(prm.V1, rel=1e-6)
    assert bathtub(prm, 0.0) == pytest.approx(prm.V1 / 2, rel=1e-9)
    # flat bottom up to the tanh tails, which leave a residue ~exp(-1/sigma)
    assert 0 < bathtub(prm, prm.w / 2) < 1e-4 * prm.V2
    assert bathtub(prm, prm.L + 10 * prm.smoothing) < 1e-6 * prm.V2
    p = build_profile("bathtub", prm)
    # profile extends past w + b until the tail has dropped to tail_tol * V2
    assert p.L > prm.L
    assert p.heights[-1] < 2e-4 * prm.V2
    with pytest.raises(ProfileError):
        build_profile("bathtub", prm, n_segments=8)
    with pytest.raises(ProfileError):
        BathtubParams(V2=-1.0, w=2.7, b=0.5, sigma=0.1)


def test_profile_refinement_convergence():
    prm = BathtubParams(V2=5.56, w=2.7, b=0.53, sigma=0.1)
    k = [lowest_pole(build_profile("bathtub", prm, n), (0, 3), 1.0).kappa for n in (1024, 2048)]
    assert abs(k[1] - k[0]) / abs(k[0]) < 1e-5


def test_heidelberg_energy_reference_invariance():
    base = HeidelbergParams(B_grad=18.92, x_R=9.987218883975226)
    shifted = HeidelbergParams(B_grad=18.92, x_R=9.987218883975226, energy_offset=3.7)
    k0 = lowest_pole(build_profile("heidelberg", base), (0, 1), 0.2).kappa
    k1 = lowest_pole(build_profile("heidelberg", shifted), (0, 1), 0.2).kappa
    assert abs(k1 - k0) < 1e-10 * abs(k0)


def test_heidelberg_no_well():
    with pytest.raises(ProfileError, match="no metastable well"):
        build_profile("heidelberg", HeidelbergParams(B_grad=40.0, x_R=9.987))


@settings(max_examples=200)
@given(st.floats(0.5, 3.0), st.floats(0.0, 0.6))
def test_box_state_norm(w, frac):
    p = build_profile("bathtub", BathtubParams(V2=6.04, w=3.0, b=0.07, sigma=0.03))
    x0 = frac * (p.L - w)
    g = Grid.for_profile(p, extra_breaks=(x0, x0 + w))
    s = box_initial_state(w, x0, g)
    assert s.norm == pytest.approx(1.0, abs=1e-12)
    assert np.all(s.values[(g.x < x0) | (g.x > x0 + w)] == 0.0)


def test_box_outside_domain():
    p = build_profile("constant", (3.0, 0.0))
    with pytest.raises(ProfileError):
        box_initial_state(2.0, 1.5, Grid.for_profile(p))
