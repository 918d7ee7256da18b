import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raylaunch.antenna import (
    AntennaSpec, DirectionAngles, antenna_axes, antenna_to_world, pattern_amplitude, pattern_gain_db,
    world_to_antenna_frame,
)

TX1 = AntennaSpec(12.5, "sector", 65.0, 22.0, 30.0, orientation_deg=330.0, tilt_deg=10.0)
TX2 = AntennaSpec(12.5, "sector", 65.0, 22.0, 30.0, orientation_deg=124.0, tilt_deg=1.0)
RX = AntennaSpec(4.0, "omni", hpbw_el=78.0)


def deg(az, el):
    return DirectionAngles(math.radians(az), math.radians(el))


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_boresight_maps_to_origin():
    fwd = antenna_axes(TX1)[0]
    a = world_to_antenna_frame(fwd, TX1)
    assert abs(a.azimuth) < 1e-12 and abs(a.elevation) < 1e-12
    # boresight points 330 deg from north, 10 deg below the horizon
    assert math.degrees(math.atan2(fwd[0], fwd[1])) % 360 == pytest.approx(330.0)
    assert math.degrees(math.asin(-fwd[2])) == pytest.approx(10.0)


def test_north_default():
    a = world_to_antenna_frame([0, 1.0, 0], AntennaSpec())
    assert a.azimuth == 0.0 and a.elevation == 0.0


def test_axes_orthonormal():
    for spec in (TX1, TX2, RX):
        ax = antenna_axes(spec)
        np.testing.assert_allclose(ax @ ax.T, np.eye(3), atol=1e-15)
        assert np.linalg.det(ax) == pytest.approx(1.0)


def test_round_trip(rng):
    for _ in range(500):
        spec = AntennaSpec(orientation_deg=rng.uniform(0, 360), tilt_deg=rng.uniform(-30, 30))
        d = unit(rng.normal(size=3))
        np.testing.assert_allclose(antenna_to_world(world_to_antenna_frame(d, spec), spec), d, atol=1e-12)


def test_angle_ranges(rng):
    for _ in range(500):
        a = world_to_antenna_frame(unit(rng.normal(size=3)), TX2)
        assert -math.pi < a.azimuth <= math.pi
        assert -math.pi / 2 <= a.elevation <= math.pi / 2
    back = world_to_antenna_frame(-antenna_axes(AntennaSpec())[0], AntennaSpec())
    assert back.azimuth == math.pi


def test_boresight_gain():
    assert pattern_gain_db(deg(0, 0), TX1) == 12.5
    assert abs(pattern_amplitude(deg(0, 0), TX1)) ** 2 == pytest.approx(10 ** 1.25)


def test_half_power_points():
    assert pattern_gain_db(deg(32.5, 0), TX1) == pytest.approx(12.5 - 3.0, abs=0.01)
    assert pattern_gain_db(deg(-32.5, 0), TX1) == pytest.approx(12.5 - 3.0, abs=0.01)
    assert pattern_gain_db(deg(0, 11), TX1) == pytest.approx(12.5 - 3.0, abs=0.01)


def test_combined_offsets_add_in_db():
    assert pattern_gain_db(deg(32.5, 11), TX1) == pytest.approx(12.5 - 6.0, abs=0.01)


def test_front_back_floor():
    assert pattern_gain_db(deg(180, 0), TX1) == pytest.approx(12.5 - 30.0)
    assert pattern_gain_db(deg(120, 40), TX1) == pytest.approx(12.5 - 30.0)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2))
def test_sector_bounds_and_symmetry(az, el):
    g = pattern_gain_db(DirectionAngles(az, el), TX1)
    assert 12.5 - 30.0 <= g <= 12.5
    assert g == pattern_gain_db(DirectionAngles(-az, el), TX1)
    assert g == pattern_gain_db(DirectionAngles(az, -el), TX1)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2))
def test_omni_azimuth_invariant(az1, az2, el):
    assert pattern_gain_db(DirectionAngles(az1, el), RX) == pattern_gain_db(DirectionAngles(az2, el), RX)


def test_omni_elevation_taper():
    assert pattern_gain_db(deg(0, 0), RX) == 4.0
    assert pattern_gain_db(deg(77, 39), RX) == pytest.approx(1.0, abs=1e-12)


def test_isotropic_constant(rng):
    spec = AntennaSpec(2.0, "isotropic")
    for _ in range(50):
        d = unit(rng.normal(size=3))
        assert pattern_gain_db(world_to_antenna_frame(d, spec), spec) == 2.0


def test_amplitude_is_real():
    a = pattern_amplitude(deg(20, -5), TX2)
    assert a.imag == 0.0 and a.real > 0


@pytest.mark.parametrize("kw", [dict(hpbw_az=0.0), dict(hpbw_el=180.0), dict(gain_dbi=float("inf")),
                                dict(pattern="dish"), dict(polarization="circular")])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        AntennaSpec(**kw)


def test_polarization_vectors():
    assert AntennaSpec(polarization="vertical").pol_vector.tolist() == [1.0, 0.0]
    assert AntennaSpec(polarization="horizontal").pol_vector.tolist() == [0.0, 1.0]


def test_moved_keeps_everything_else():
    m = TX1.moved((1, 2, 3))
    assert m.position == (1.0, 2.0, 3.0) and m.orientation_deg == 330.0 and TX1.position == (0.0, 0.0, 0.0)
