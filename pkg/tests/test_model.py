import math

import pytest
from hypothesis import given, strategies as st

from seeknet.model import (Beacon, DuplicateNodeId, EnergyState, GeoPosition, NodeConfig,
                           Packet, Segment, Session, UnsupportedDataRate, check_rate,
                           distance_between, from_lat_lon, validate_ids)

coord = st.floats(min_value=-5e3, max_value=5e3, allow_nan=False)
points = st.builds(GeoPosition, coord, coord)


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0), (0, 0), 0.0),
    ((0, 0), (3, 4), 5.0),
    ((100, 0), (-50, 0), 150.0),
])
def test_distance_examples(a, b, expected):
    assert distance_between(GeoPosition(*a), GeoPosition(*b)) == pytest.approx(expected)


def test_distance_ignores_altitude():
    assert distance_between(GeoPosition(0, 0, 10.0), GeoPosition(3, 4, 500.0)) == 5.0


def test_non_finite_position_rejected():
    with pytest.raises(ValueError):
        GeoPosition(math.nan, 0.0)
    with pytest.raises(ValueError):
        GeoPosition(0.0, math.inf)


@given(points, points, points)
def test_distance_is_a_metric(a, b, c):
    ab = distance_between(a, b)
    assert ab >= 0
    assert ab == distance_between(b, a)
    assert (ab == 0) == (a.x == b.x and a.y == b.y)
    assert distance_between(a, c) <= ab + distance_between(b, c) + 1e-9


def test_lat_lon_projection_small_offsets():
    # one thousandth of a degree of latitude is about 111 m
    p = from_lat_lon(40.001, -75.0, 40.0, -75.0)
    assert p.x == pytest.approx(0.0, abs=1e-9)
    assert p.y == pytest.approx(111.19, abs=0.05)


def test_energy_state_ratio_and_floor():
    e = EnergyState(100.0, 100.0)
    assert e.ratio == 1.0
    e.consume(30.0)
    assert e.ratio == pytest.approx(0.7)
    e.consume(500.0)
    assert e.residual_j == 0.0 and e.depleted
    e.set_ratio(0.1)
    assert e.ratio == pytest.approx(0.1)


@given(st.lists(st.one_of(
    st.tuples(st.just("consume"), st.floats(0, 1e3, allow_nan=False)),
    st.tuples(st.just("ratio"), st.floats(-1, 2, allow_nan=False))), max_size=30))
def test_residual_never_exceeds_initial(ops):
    e = EnergyState(50.0, 50.0)
    for op, v in ops:
        if op == "consume":
            e.consume(v)
        else:
            e.set_ratio(v)
        assert 0.0 <= e.residual_j <= e.initial_j


def test_energy_state_validation():
    with pytest.raises(ValueError):
        EnergyState(0.0, 0.0)
    with pytest.raises(ValueError):
        EnergyState(10.0, 11.0)


def test_packet_invariants():
    p = Packet(3, 1, 0, 1000, 0.0)
    assert p.key == (1, 3)
    with pytest.raises(ValueError):
        Packet(0, 1, 1, 1000, 0.0)
    with pytest.raises(ValueError):
        Packet(0, 1, 0, 0, 0.0)


def test_segment_requires_common_next_hop():
    a = Packet(0, 1, 0, 1000, 0.0, assigned_next_hop=2)
    b = Packet(1, 1, 0, 1000, 0.0, assigned_next_hop=3)
    assert len(Segment([a], 2)) == 1
    with pytest.raises(ValueError):
        Segment([a, b], 2)
    with pytest.raises(ValueError):
        Segment([], 2)


def test_beacon_invariants():
    pos = GeoPosition(0, 0)
    Beacon(1, pos, 0.5, 0, 0.0)
    with pytest.raises(ValueError):
        Beacon(1, pos, 1.5, 0, 0.0)
    with pytest.raises(ValueError):
        Beacon(1, pos, 0.5, -1, 0.0)


def test_session_invariants():
    with pytest.raises(ValueError):
        Session(1, 0, 0.0)
    with pytest.raises(ValueError):
        Session(1, 0, 10.0, start=5.0, stop=5.0)


def test_duplicate_ids_and_rates():
    e = EnergyState(1.0, 1.0)
    nodes = [NodeConfig(1, GeoPosition(0, 0), e), NodeConfig(1, GeoPosition(1, 0), e)]
    with pytest.raises(DuplicateNodeId):
        validate_ids(nodes)
    for r in (1, 2, 5.5, 11):
        assert check_rate(r) == float(r)
    with pytest.raises(UnsupportedDataRate):
        check_rate(3)
