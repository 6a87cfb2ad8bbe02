import numpy as np
import pytest

from zerorange import oracle as orc
from zerorange.errors import StateSpaceTooLarge
from zerorange.process import ModelParams
from zerorange.rates import capped, linear

P = ModelParams(3, theta=1, alpha=0.5, g=linear())


def test_tv_at_cap_30():
    r = orc.truncated_chain_tv(P, 30)
    assert r.n_states == 31**2
    assert r.tv <= 1e-6
    assert r.stationary.sum() == pytest.approx(1.0, abs=1e-14)
    assert r.product.sum() == pytest.approx(1.0, abs=1e-14)


def test_tv_strictly_decreasing():
    tvs = [orc.truncated_chain_tv(P, K).tv_exact for K in (10, 20, 30)]
    assert tvs[0] > tvs[1] > tvs[2] > 0
    # frozen from an earlier 256-bit run
    assert float(tvs[0]) == pytest.approx(3.29e-10, rel=0.01)


def test_cap_zero_is_point_mass():
    r = orc.truncated_chain_tv(ModelParams(3, alpha=0.0), 0)
    assert r.tv == 0.0 and r.n_states == 1


def test_state_space_cap():
    with pytest.raises(StateSpaceTooLarge):
        orc.truncated_chain_tv(ModelParams(4, alpha=0.5), 40, state_cap=1000)


def test_three_sites_and_capped_rates():
    p = ModelParams(4, alpha=0.3, g=capped(2))
    r = orc.truncated_chain_tv(p, 12)
    # tail of a geometric-like pmf above 12 is ~ (phi/2)^13
    assert r.tv < 10 * orc.tail_mass_bound(p, 12) + 1e-15


def test_tv_tracks_tail_mass():
    for K in (10, 20):
        tail = orc.tail_mass_bound(P, K)
        r = orc.truncated_chain_tv(P, K)
        assert r.tv <= 10 * tail
