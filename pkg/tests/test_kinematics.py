import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmirror.errors import (
    FrequencyOrder,
    OutOfDispersionRange,
    ParseError,
    PhaseMatchImpossible,
)
from qmirror.kinematics import (
    C_LIGHT,
    CrystalMedium,
    PairState,
    Photon,
    check_coherence,
    conjugate_photon,
    cross_convert,
    emission_angles,
    load_dispersion_table,
    split_pump,
)


def make_pump(omega=2.0, n=1.6, helicity=+1):
    return Photon(omega=omega, k=np.array([0.0, 0.0, n * omega]), helicity=helicity)


# a slab whose index falls with frequency, so the emission triangle
# closes at finite cone angles (k_p < k_s + k_i)
FALLING = CrystalMedium(
    omegas=np.array([0.25, 1.0, 2.0, 3.0]),
    indices=np.array([1.66, 1.64, 1.60, 1.56]),
)


# ---------------------------------------------------------------- photons

def test_photon_validation():
    with pytest.raises(ValueError):
        Photon(omega=-1.0, k=np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        Photon(omega=1.0, k=np.array([0.0, 0.0, 1.0]), helicity=0)
    with pytest.raises(ValueError):
        Photon(omega=1.0, k=np.zeros(3))
    with pytest.raises(ValueError):
        Photon(omega=1.0, k=np.array([1.0, 2.0]))


def test_photon_is_frozen_and_k_readonly():
    p = Photon(omega=1.0, k=np.array([0.0, 0.0, 1.0]))
    with pytest.raises(Exception):
        p.omega = 2.0
    with pytest.raises(ValueError):
        p.k[0] = 5.0


def test_on_shell():
    w = 3.0e15
    p = Photon(omega=w, k=np.array([0.0, 0.0, w / C_LIGHT]))
    assert p.is_on_shell()
    q = Photon(omega=w, k=np.array([0.0, 0.0, 1.5 * w / C_LIGHT]))
    assert not q.is_on_shell()
    r = Photon(omega=2.0, k=np.array([0.0, 0.0, 2.0]))
    assert r.is_on_shell(c=1.0)


# ---------------------------------------------------------------- medium

def test_medium_validation():
    with pytest.raises(ValueError):
        CrystalMedium(omegas=np.array([1.0]), indices=np.array([1.5]))
    with pytest.raises(ValueError):
        CrystalMedium(omegas=np.array([1.0, 0.5]), indices=np.array([1.5, 1.5]))
    with pytest.raises(ValueError):
        CrystalMedium(omegas=np.array([1.0, 2.0]), indices=np.array([0.9, 1.5]))
    with pytest.raises(ValueError):
        CrystalMedium.constant_index(1.5, thickness=0.0)


def test_index_interpolation_and_range():
    assert FALLING.index_at(1.0) == pytest.approx(1.64)
    assert FALLING.index_at(1.5) == pytest.approx(1.62)
    with pytest.raises(OutOfDispersionRange):
        FALLING.index_at(0.1)
    with pytest.raises(OutOfDispersionRange):
        FALLING.index_at(3.5)


def test_wavenumber_uses_index():
    m = CrystalMedium.constant_index(1.5)
    assert m.wavenumber(2.0, c=1.0) == pytest.approx(3.0)


def test_dispersion_table_io(tmp_path):
    path = tmp_path / "n.tsv"
    path.write_text("# comment line\n0.5\t1.70\n1.0 1.65\n2.0\t1.60\n")
    omegas, indices = load_dispersion_table(path)
    assert omegas.tolist() == [0.5, 1.0, 2.0]
    assert indices.tolist() == [1.70, 1.65, 1.60]

    bad = tmp_path / "bad.tsv"
    bad.write_text("1.0 1.5\n0.5 1.6\n")
    with pytest.raises(ParseError):
        load_dispersion_table(bad)
    bad.write_text("1.0 1.5\n")
    with pytest.raises(ParseError):
        load_dispersion_table(bad)
    bad.write_text("1.0 1.5 2.0\n2.0 1.6 2.0\n")
    with pytest.raises(ParseError):
        load_dispersion_table(bad)


# ------------------------------------------------------- emission angles

def test_emission_angles_collinear_degenerate():
    assert emission_angles(2.0, 1.0, 1.0) == (0.0, 0.0)


def test_emission_angles_known_case():
    # k_p=2, k_s=1.2, k_i=1.0: cos(theta_ps) = (4 + 1.44 - 1)/(2*2*1.2)
    theta_ps, theta_pi = emission_angles(2.0, 1.2, 1.0)
    assert theta_ps == pytest.approx(math.acos(0.925), rel=1e-15)
    # reconstruct the vectors and confirm componentwise closure
    ks = 1.2 * np.array([math.sin(theta_ps), 0.0, math.cos(theta_ps)])
    ki = 1.0 * np.array([-math.sin(theta_pi), 0.0, math.cos(theta_pi)])
    assert np.allclose(ks + ki, [0.0, 0.0, 2.0], atol=1e-12)


def test_emission_angles_impossible():
    with pytest.raises(PhaseMatchImpossible):
        emission_angles(3.0, 1.0, 1.0)
    with pytest.raises(PhaseMatchImpossible):
        emission_angles(1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        emission_angles(0.0, 1.0, 1.0)


def test_emission_angles_boundary_accepted():
    # exactly degenerate triangles sit on the boundary and must pass
    theta_ps, theta_pi = emission_angles(2.0, 1.5, 0.5)
    assert theta_ps == 0.0 and theta_pi == 0.0


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
    st.floats(0.01, 0.99),
)
def test_emission_angles_roundtrip(k_s, k_i, frac):
    # k_p strictly inside (|k_s-k_i|, k_s+k_i) closes; reconstruct and
    # check.  The exact boundary is covered separately: arccos loses
    # half the digits there, which is why vector construction shares
    # one transverse magnitude in split_pump.
    lo, hi = abs(k_s - k_i), k_s + k_i
    k_p = lo + frac * (hi - lo)
    if k_p <= 0.0:
        return
    theta_ps, theta_pi = emission_angles(k_p, k_s, k_i)
    ks = k_s * np.array([math.sin(theta_ps), 0.0, math.cos(theta_ps)])
    ki = k_i * np.array([-math.sin(theta_pi), 0.0, math.cos(theta_pi)])
    assert np.linalg.norm(ks + ki - [0.0, 0.0, k_p]) < 1e-12 * max(k_p, 1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
    st.floats(1e-6, 10.0),
)
def test_emission_angles_rejects_outside(k_s, k_i, excess):
    with pytest.raises(PhaseMatchImpossible):
        emission_angles(k_s + k_i + excess, k_s, k_i)


# ------------------------------------------------------------ split_pump

def test_split_degenerate_collinear():
    m = CrystalMedium.constant_index(1.5)
    pump = make_pump(omega=2.0, n=1.5)
    pair = split_pump(pump, 1.0, m, c=1.0)
    assert pair.theta_ps == 0.0 and pair.theta_pi == 0.0
    assert np.allclose(pair.signal.k, [0.0, 0.0, 1.5])
    assert np.allclose(pair.idler.k, [0.0, 0.0, 1.5])


def test_split_conserves_exactly():
    pump = make_pump(omega=2.0, n=1.60)
    pair = split_pump(pump, 0.9, FALLING, c=1.0)
    assert pair.signal.omega + pair.idler.omega == pump.omega
    assert pair.conservation_residual(pump) < 1e-12
    assert pair.theta_ps > 0.0 and pair.theta_pi > 0.0


def test_split_helicity_convention():
    pump = make_pump(helicity=-1)
    pair = split_pump(pump, 1.0, FALLING, c=1.0)
    assert pair.signal.helicity == -1
    assert pair.idler.helicity == +1


def test_split_frequency_order():
    pump = make_pump()
    with pytest.raises(FrequencyOrder):
        split_pump(pump, 2.0, FALLING, c=1.0)
    with pytest.raises(FrequencyOrder):
        split_pump(pump, 0.0, FALLING, c=1.0)
    with pytest.raises(FrequencyOrder):
        split_pump(pump, 2.5, FALLING, c=1.0)


def test_split_out_of_table():
    pump = make_pump(omega=2.2, n=1.59)
    with pytest.raises(OutOfDispersionRange):
        split_pump(pump, 2.0, FALLING, c=1.0)  # idler at 0.2 leaves the table


def test_split_azimuth_rotates_daughters():
    pump = make_pump()
    a = split_pump(pump, 0.9, FALLING, azimuth=0.0, c=1.0)
    b = split_pump(pump, 0.9, FALLING, azimuth=1.1, c=1.0)
    # angles and magnitudes invariant, transverse direction rotated
    assert b.theta_ps == a.theta_ps
    assert np.linalg.norm(b.signal.k) == pytest.approx(np.linalg.norm(a.signal.k))
    assert not np.allclose(a.signal.k, b.signal.k)
    assert b.conservation_residual(pump) < 1e-12


def test_split_tilted_pump_axis():
    axis = np.array([0.3, -0.2, 0.93])
    axis /= np.linalg.norm(axis)
    pump = Photon(omega=2.0, k=1.60 * 2.0 * axis)
    pair = split_pump(pump, 1.1, FALLING, azimuth=0.4, c=1.0)
    assert pair.conservation_residual(pump) < 1e-12
    # cone angles measured from the actual pump direction
    cos_ps = float(pair.signal.k @ axis) / np.linalg.norm(pair.signal.k)
    assert math.acos(min(1.0, cos_ps)) == pytest.approx(pair.theta_ps, abs=1e-12)


# -------------------------------------------------- conjugation/crossing

def test_conjugate_photon_involution_exact():
    p = Photon(omega=1.3, k=np.array([0.2, -0.4, 1.1]), helicity=-1)
    q = conjugate_photon(conjugate_photon(p))
    assert q.omega == p.omega
    assert (q.k == p.k).all()
    assert q.helicity == p.helicity


def test_conjugate_photon_reverses():
    p = Photon(omega=1.3, k=np.array([0.2, -0.4, 1.1]), helicity=+1)
    q = conjugate_photon(p)
    assert (q.k == -p.k).all()
    assert q.helicity == -1
    assert q.omega == p.omega


def test_cross_convert_known_case():
    pump = Photon(omega=3.0, k=np.array([0.0, 0.0, 3.0]))
    returned = Photon(omega=2.0, k=np.array([0.5, 0.0, 1.9]))
    out = cross_convert(pump, returned)
    assert out.omega == 1.0
    assert np.allclose(out.k, [0.5, 0.0, 4.9])


def test_cross_convert_frequency_order():
    pump = Photon(omega=3.0, k=np.array([0.0, 0.0, 3.0]))
    with pytest.raises(FrequencyOrder):
        cross_convert(pump, Photon(omega=3.5, k=np.array([0.0, 0.0, 3.5])))
    with pytest.raises(FrequencyOrder):
        cross_convert(pump, Photon(omega=3.0, k=np.array([0.0, 0.0, 3.0])))


def test_crossing_closes_the_split():
    # conjugating one daughter and crossing it back yields the partner
    pump = make_pump(omega=2.0, n=1.60)
    pair = split_pump(pump, 0.8, FALLING, azimuth=2.2, c=1.0)
    rec = cross_convert(pump, conjugate_photon(pair.signal))
    assert rec.omega == pytest.approx(pair.idler.omega, rel=1e-15)
    assert np.allclose(rec.k, pair.idler.k, atol=1e-12)
    assert rec.helicity == pair.idler.helicity


# --------------------------------------------------------- pair state

def test_pair_state_residual_against_pump():
    pump = make_pump(omega=2.0, n=1.60)
    pair = split_pump(pump, 1.0, FALLING, c=1.0)
    assert pair.conservation_residual(pump) < 1e-12
    wrong = Photon(omega=2.0, k=np.array([0.1, 0.0, 3.2]))
    assert pair.conservation_residual(wrong) > 1e-3
    assert pair.pump_omega == 2.0


# --------------------------------------------------------- coherence

def test_check_coherence_simple():
    # falling index: n(pump) < n(lower converted frequency)
    assert check_coherence(FALLING, 2.0, 1.0)
    assert not check_coherence(FALLING, 1.0, 2.0)
    with pytest.raises(OutOfDispersionRange):
        check_coherence(FALLING, 5.0, 1.0)


def test_check_coherence_matches_phase_velocity_form():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        om = np.sort(rng.uniform(0.1, 5.0, size=4))
        om += np.arange(4) * 1e-6  # enforce strict increase
        ns = rng.uniform(1.0, 2.5, size=4)
        medium = CrystalMedium(omegas=om, indices=ns)
        w_p = rng.uniform(om[0], om[-1])
        w_f = rng.uniform(om[0], om[-1])
        fast = 1.0 / medium.index_at(w_p) >= 1.0 / medium.index_at(w_f)
        assert check_coherence(medium, w_p, w_f) == fast
