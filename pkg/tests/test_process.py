import numpy as np
import pytest
from hypothesis import given, strategies as st

from zerorange.errors import ImpossibleEvent, ModelError, OccupancyOverflow
from zerorange.process import (ANNIHILATE_LEFT, ANNIHILATE_RIGHT, CREATE_LEFT, CREATE_RIGHT,
                               Configuration, Event, EventKind, ModelParams, all_events,
                               apply_event, event_of_slot, event_rate, slot_of, slot_rates,
                               total_rate)
from zerorange.rates import capped, constant, linear


def test_configuration_basics():
    eta = Configuration([2, 0, 1])
    assert eta.N == 4
    assert eta.total == 3
    assert eta[1] == 2 and eta[3] == 1
    with pytest.raises(IndexError):
        eta[0]
    with pytest.raises(ModelError):
        Configuration([1, -1])
    with pytest.raises(ModelError):
        Configuration([3])


def test_configuration_serialization():
    eta = Configuration([5, 0, 7, 1])
    assert Configuration.from_json(eta.to_json()) == eta
    data = eta.to_bytes()
    assert len(data) == 8 + 4 * 4
    assert data[:8] == (4).to_bytes(8, "little")
    assert Configuration.from_bytes(data) == eta
    with pytest.raises(OccupancyOverflow):
        Configuration([2**32, 0]).to_bytes()


def test_params_validation():
    with pytest.raises(ModelError):
        ModelParams(2)
    with pytest.raises(ModelError):
        ModelParams(10, theta=0.5)
    with pytest.raises(ModelError):
        ModelParams(10, alpha=-1.0)
    p = ModelParams(10)
    assert p.specialized and p.kappa == 1
    assert ModelParams(10, theta=2).kappa == 0
    assert not ModelParams(10, beta=0.1).specialized


def test_event_validation():
    with pytest.raises(ModelError):
        Event.jump(1, -1).validate(5)
    with pytest.raises(ModelError):
        Event.jump(4, 1).validate(5)
    with pytest.raises(ModelError):
        Event.jump(2, 2)
    Event.jump(2, 1).validate(5)


def test_slot_layout_round_trip():
    N = 7
    evs = list(all_events(N))
    assert len(evs) == 2 * (N - 2) + 4
    slots = {slot_of(ev, N) for ev in evs}
    assert len(slots) == len(evs)
    for ev in evs:
        assert event_of_slot(slot_of(ev, N), N) == ev


def test_event_rate_examples():
    p = ModelParams(10, theta=1, alpha=1.0)
    eta = Configuration([0] * 8 + [3])
    assert event_rate(eta, Event.jump(1, 1), p) == 0
    assert event_rate(eta, CREATE_LEFT, p) == pytest.approx(10.0)
    assert event_rate(eta, ANNIHILATE_RIGHT, p) == pytest.approx(30.0)
    nd = p.with_(diffusive=False)
    assert event_rate(eta, ANNIHILATE_RIGHT, nd) == pytest.approx(0.3)


def test_general_boundary_rates():
    p = ModelParams(5, theta=2, alpha=1.0, beta=2.0, lam=3.0, delta=4.0, g=capped(2),
                    diffusive=False)
    eta = Configuration([3, 0, 0, 1])
    assert event_rate(eta, CREATE_LEFT, p) == pytest.approx(1 / 25)
    assert event_rate(eta, CREATE_RIGHT, p) == pytest.approx(2 / 25)
    assert event_rate(eta, ANNIHILATE_LEFT, p) == pytest.approx(3 * 2 / 25)
    assert event_rate(eta, ANNIHILATE_RIGHT, p) == pytest.approx(4 * 1 / 25)


def test_apply_event_examples():
    eta = Configuration([2, 0, 1])
    out = apply_event(eta, Event.jump(1, 1))
    assert out == Configuration([1, 1, 1]) and out.total == 3
    out = apply_event(eta, CREATE_LEFT)
    assert out == Configuration([3, 0, 1]) and out.total == 4
    with pytest.raises(ImpossibleEvent):
        apply_event(Configuration([2, 0, 0]), ANNIHILATE_RIGHT)
    with pytest.raises(ImpossibleEvent):
        apply_event(Configuration([2, 0, 0]), Event.jump(2, 1))
    # the input is never mutated
    assert eta == Configuration([2, 0, 1])


def test_total_rate_examples():
    p = ModelParams(4, theta=1, alpha=1.0, diffusive=False)
    assert total_rate(Configuration([2, 0, 1]), p) == pytest.approx(3.5)
    assert total_rate(Configuration([0, 0, 0]), p.with_(alpha=0.0)) == 0.0


configs = st.lists(st.integers(0, 6), min_size=2, max_size=9)


@given(configs, st.sampled_from([linear(), constant(), capped(3)]),
       st.sampled_from([1.0, 1.5, 2.0]), st.booleans())
def test_total_rate_is_sum_of_event_rates(occ, g, theta, diffusive):
    eta = Configuration(occ)
    p = ModelParams(eta.N, theta, alpha=0.7, beta=0.3, lam=0.2, delta=1.1, g=g,
                    diffusive=diffusive)
    brute = sum(event_rate(eta, ev, p) for ev in all_events(p.N))
    assert total_rate(eta, p) == pytest.approx(brute, rel=1e-12, abs=1e-15)
    assert slot_rates(eta, p).sum() == pytest.approx(brute, rel=1e-12, abs=1e-15)


@given(configs, st.data())
def test_apply_event_bookkeeping(occ, data):
    eta = Configuration(occ)
    p = ModelParams(eta.N, alpha=1.0, beta=1.0, lam=1.0, delta=1.0)
    possible = [ev for ev in all_events(p.N) if event_rate(eta, ev, p) > 0]
    ev = data.draw(st.sampled_from(possible))
    out = apply_event(eta, ev)
    assert out.total == out.occupancy.sum()
    change = {EventKind.BULK: 0, EventKind.CREATE_LEFT: 1, EventKind.CREATE_RIGHT: 1,
              EventKind.ANNIHILATE_LEFT: -1, EventKind.ANNIHILATE_RIGHT: -1}[ev.kind]
    assert out.total == eta.total + change
    assert np.count_nonzero(out.occupancy != eta.occupancy) <= 2
