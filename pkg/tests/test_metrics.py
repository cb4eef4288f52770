import math

import pytest
from hypothesis import given, strategies as st

from lmacsim.metrics import (AccountingError, DelayStats, EnergyLedger, Mode,
                             Powers, nearest_rank)


def test_full_sleep_ledger():
    led = EnergyLedger(1)
    led.record_mode(0, Mode.SLEEP, 0.0, 500.0)
    assert led.times[0][Mode.SLEEP] == 500.0
    assert led.energy(0) == pytest.approx(0.045)


def test_full_idle_energy():
    led = EnergyLedger(1)
    led.record_mode(0, Mode.IDLE, 0.0, 500.0)
    assert led.energy(0) == pytest.approx(22.5)


def test_alternating_modes_sum_to_sim_time():
    led = EnergyLedger(1)
    t = 0.0
    for k in range(100):
        led.record_mode(0, Mode.IDLE if k % 2 else Mode.SLEEP, t, t + 5.0)
        t += 5.0
    assert led.total_time(0) == pytest.approx(500.0, abs=1e-9)


def test_overlap_is_a_fault():
    led = EnergyLedger(1)
    led.record_mode(0, Mode.IDLE, 0.0, 2.0)
    with pytest.raises(AccountingError):
        led.record_mode(0, Mode.SLEEP, 1.0, 3.0)
    with pytest.raises(AccountingError):
        led.record_mode(0, Mode.SLEEP, 3.0, 2.5)


@given(st.lists(st.tuples(st.sampled_from(list(Mode)), st.floats(0, 10)), max_size=60))
def test_random_mode_sequences_partition_time(seq):
    led = EnergyLedger(1)
    t = 0.0
    for mode, dur in seq:
        led.record_mode(0, mode, t, t + dur)
        t += dur
    assert led.total_time(0) == pytest.approx(t, abs=1e-9)
    assert all(v >= 0 for v in led.times[0].values())


@given(st.lists(st.tuples(st.sampled_from(list(Mode)), st.floats(0, 10)), min_size=1, max_size=30),
       st.sampled_from(["tx", "rx", "idle", "sleep"]), st.floats(0, 1))
def test_raising_a_power_never_lowers_energy(seq, which, bump):
    base = Powers()
    higher = Powers(**{**base.__dict__, which: getattr(base, which) + bump})
    a, b = EnergyLedger(1, base), EnergyLedger(1, higher)
    t = 0.0
    for mode, dur in seq:
        a.record_mode(0, mode, t, t + dur)
        b.record_mode(0, mode, t, t + dur)
        t += dur
    assert b.energy(0) >= a.energy(0)


def test_mixed_ledger_is_linear_combination():
    p = Powers(tx=1.0, rx=2.0, idle=3.0, sleep=4.0)
    led = EnergyLedger(1, p)
    led.record_mode(0, Mode.TX, 0, 1)
    led.record_mode(0, Mode.RX, 1, 3)
    led.record_mode(0, Mode.IDLE, 3, 6)
    led.record_mode(0, Mode.SLEEP, 6, 10)
    assert led.energy(0) == pytest.approx(1 * 1 + 2 * 2 + 3 * 3 + 4 * 4)
    assert led.awake_fraction(0) == pytest.approx(0.6)


def test_single_delay():
    d = DelayStats()
    d.record_delivery(7, 1.0, 1.2)
    mean, p95, mx = d.finalize()
    assert mean == pytest.approx(0.2) and p95 == pytest.approx(0.2) and mx == pytest.approx(0.2)


def test_nearest_rank_p95_of_ten():
    vals = [0.1 * k for k in range(1, 11)]
    assert nearest_rank(vals, 95) == vals[-1]
    d = DelayStats()
    for i, v in enumerate(vals):
        d.record_delivery(i, 0.0, v)
    assert d.finalize()[1] == pytest.approx(1.0)
    assert d.finalize()[0] == pytest.approx(0.55)


def test_no_deliveries_means_absent_delays():
    assert DelayStats().finalize() == (None, None, None)


def test_duplicate_delivery_is_a_fault():
    d = DelayStats()
    d.record_delivery(1, 0.0, 1.0)
    with pytest.raises(AccountingError):
        d.record_delivery(1, 0.0, 2.0)


def test_delivery_before_generation_is_a_fault():
    with pytest.raises(AccountingError):
        DelayStats().record_delivery(1, 2.0, 1.0)


def test_nearest_rank_small_sets():
    assert nearest_rank([3.0], 95) == 3.0
    assert nearest_rank([1.0, 2.0], 50) == 1.0
    assert math.isclose(nearest_rank([1.0, 2.0, 3.0, 4.0], 75), 3.0)
