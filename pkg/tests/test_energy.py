"""Ledger counters, the quadratic cost law, and savings reports."""

import pytest

from ecotrain.energy import (CALIBRATED_8BIT_RATIOS, EnergyLedger, cost_ratio,
                             energy_of, savings_report)
from ecotrain.errors import ConfigError


def test_record_accumulates():
    led = EnergyLedger()
    led.record("multiply", 5, 8)
    led.record("multiply", 5, 8)
    led2 = EnergyLedger()
    led2.record("multiply", 10, 8)
    assert led.counters == led2.counters


def test_record_zero_is_noop():
    led = EnergyLedger()
    led.record("add", 0, 32)
    assert led.counters == {}


def test_record_validation():
    led = EnergyLedger()
    with pytest.raises(ConfigError):
        led.record("multiply", -1, 32)
    with pytest.raises(ConfigError):
        led.record("multiply", 1, 7)
    with pytest.raises(ConfigError):
        led.record("divide", 1, 32)


def test_counters_monotone():
    led = EnergyLedger()
    led.record("add", 3, 32)
    before = dict(led.counters)
    led.record("add", 2, 32)
    assert all(led.counters[k] >= v for k, v in before.items())


def test_quadratic_ratios():
    assert cost_ratio(32, "multiply") == 1.0
    assert cost_ratio(8, "multiply") == 1.0 / 16.0   # 93.75% savings
    assert cost_ratio(1, "multiply") == 1.0 / 1024.0
    assert energy_of(100, 32, "add") == 100 * 0.9


def test_paper_calibrated_override():
    for op, ratio in CALIBRATED_8BIT_RATIOS.items():
        assert cost_ratio(8, op, "paper_calibrated") == ratio
    # other widths fall back to the quadratic law
    assert cost_ratio(16, "multiply", "paper_calibrated") == 0.25
    led = EnergyLedger(model="paper_calibrated")
    led.record("multiply", 100, 8)
    assert led.energy() == 100 * 3.7 * 0.05


def test_flops_exclude_data_moves():
    led = EnergyLedger()
    led.record("multiply", 10, 32)
    led.record("add", 10, 32)
    led.record("data_move", 99, 32)
    assert led.flops() == 20


def test_pause_resume():
    led = EnergyLedger()
    led.pause()
    led.record("add", 5, 32)
    led.resume()
    assert led.flops() == 0
    led.record("add", 5, 32)
    assert led.flops() == 5
    with pytest.raises(ConfigError):
        led.resume()


def test_savings_baseline_vs_itself():
    t = {"flops": 100, "energy": 50.0}
    rep = savings_report(t, t)
    assert rep.computational_savings == 0.0
    assert rep.energy_savings == 0.0


def test_savings_half_batches():
    base = {"flops": 1000, "energy": 400.0}
    run = {"flops": 500, "energy": 200.0}
    rep = savings_report(run, base)
    assert rep.computational_savings == 0.5
    assert rep.energy_savings == 0.5


def test_savings_rejects_zero_baseline():
    with pytest.raises(ConfigError):
        savings_report({"flops": 1, "energy": 1.0}, {"flops": 0, "energy": 1.0})


def test_snapshot_and_copy_are_stable():
    led = EnergyLedger()
    led.record("multiply", 7, 8)
    led.record("add", 3, 16)
    snap = led.snapshot()
    assert snap["counters"] == {"add@16": 3, "multiply@8": 7}
    dup = led.copy()
    dup.record("add", 1, 16)
    assert led.counters[("add", 16)] == 3  # copy does not alias
