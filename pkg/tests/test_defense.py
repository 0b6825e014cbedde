import numpy as np
import pytest
from hypothesis import given, strategies as st

from entfed.clustering import cosine_similarity
from entfed.defense import (
    FLAG, KEEP, EnterpriseStatus, FilterThresholds, angle_filter, select_enterprises,
    selection_size, strike_update, zone,
)
from entfed.errors import ContractError


@pytest.mark.parametrize("cs, decision, band", [
    (0.0, KEEP, "green"),
    (0.96, FLAG, "yellow"),
    (-0.95, FLAG, "blue"),
    (0.7, KEEP, "green"),
    (-0.7, KEEP, "green"),
])
def test_filter_bands(cs, decision, band):
    th = FilterThresholds()
    assert angle_filter(cs, th) == decision
    assert zone(cs, th) == band


def test_filter_out_of_range():
    with pytest.raises(ContractError):
        angle_filter(1.5)


def test_threshold_validation():
    with pytest.raises(ContractError):
        FilterThresholds(0.5, 0.1)
    with pytest.raises(ContractError):
        FilterThresholds(-1.2, 0.5)


@given(st.floats(-1, 1), st.floats(-1, 0), st.floats(0.01, 1))
def test_filter_is_pure_band_test(cs, lo, hi):
    th = FilterThresholds(lo, hi)
    assert (angle_filter(cs, th) == KEEP) == (lo <= cs <= hi)


def test_five_flags_blacklist():
    s = EnterpriseStatus()
    for i in range(4):
        s = strike_update(s, True)
        assert not s.blacklisted and s.consecutive_strikes == i + 1
    s = strike_update(s, True)
    assert s.blacklisted


def test_keep_resets_counter():
    s = EnterpriseStatus()
    for _ in range(4):
        s = strike_update(s, True)
    s = strike_update(s, False)
    assert s == EnterpriseStatus(0, False)
    assert strike_update(EnterpriseStatus(), False) == EnterpriseStatus()


def test_blacklisted_cannot_update():
    with pytest.raises(ContractError):
        strike_update(EnterpriseStatus(5, True), False)


def test_sign_flip_flagged_every_round():
    rng = np.random.default_rng(0)
    s = EnterpriseStatus()
    rounds = 0
    while not s.blacklisted:
        g = rng.normal(size=30)
        cs = cosine_similarity(-g, g)
        assert angle_filter(cs) == FLAG
        s = strike_update(s, True)
        rounds += 1
    assert rounds == 5


def test_selection_examples():
    ids = list(range(100))
    assert select_enterprises(ids, 1.0, 3, 0) == ids
    picked = select_enterprises(ids, 0.2, 3, 0)
    assert len(picked) == len(set(picked)) == 20
    assert picked == select_enterprises(ids, 0.2, 3, 0)
    assert picked != select_enterprises(ids, 0.2, 4, 0)
    assert selection_size(0.2, 7) == 2


def test_selection_errors():
    with pytest.raises(ContractError):
        select_enterprises([], 0.5, 0, 0)
    with pytest.raises(ContractError):
        select_enterprises([1, 2], 0.0, 0, 0)


def test_selection_only_from_population():
    pop = [3, 8, 11, 40]
    for r in range(50):
        assert set(select_enterprises(pop, 0.5, r, 1)) <= set(pop)


def test_selection_uniform_over_many_rounds():
    n, frac, rounds = 20, 0.2, 10_000
    counts = np.zeros(n)
    for r in range(rounds):
        counts[select_enterprises(range(n), frac, r, 0)] += 1
    p = selection_size(frac, n) / n
    sigma = np.sqrt(rounds * p * (1 - p))
    assert np.abs(counts - rounds * p).max() <= 3 * sigma
