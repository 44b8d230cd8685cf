import cmath
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apfsim.control import StrategyKind
from apfsim.metrics import (COMPARE_FIELDS, FundamentalAbsent, MismatchedScenarios,
                            compare_report, evaluate, format_table, harmonic_spectrum,
                            power_factor, signed_norm, thd, windowed_rms)
from apfsim.plant import DisturbanceSpec, ScenarioConfig, simulate

FS = 50_000.0
PERIOD = 1000


def three_phase(amplitude, shift=0.0, n=4 * PERIOD):
    t = np.arange(n) / FS
    return np.column_stack([amplitude * np.sin(2 * np.pi * 50 * t - k * 2 * np.pi / 3 - shift)
                            for k in range(3)])


def brute_thd(x, cycles, max_h=40):
    n = len(x)

    def bin_amp(k):
        acc = sum(x[j] * cmath.exp(-2j * math.pi * k * j / n) for j in range(n))
        return abs(acc)

    fund = bin_amp(cycles)
    harm = [bin_amp(h * cycles) for h in range(2, max_h + 1) if h * cycles < n // 2]
    return 100 * math.sqrt(sum(a * a for a in harm)) / fund


# --- windowed_rms ------------------------------------------------------------

def test_rms_constant():
    assert np.allclose(windowed_rms(np.full(3000, -2.5), PERIOD), 2.5)


def test_rms_sine():
    t = np.arange(3 * PERIOD) / FS
    r = windowed_rms(4 * np.sin(2 * np.pi * 50 * t), PERIOD)
    assert np.allclose(r[PERIOD:], 4 / math.sqrt(2), rtol=0.005)


def test_rms_brute_force():
    t = np.arange(2500) / FS
    x = np.sin(2 * np.pi * 50 * t) + 0.3 * np.sin(2 * np.pi * 50 * math.sqrt(7) * t)
    r = windowed_rms(x, PERIOD)
    for k in (0, 10, 999, 1000, 1777, 2499):
        lo = max(0, k - PERIOD + 1)
        seg = x[lo:k + 1]
        assert r[k] == pytest.approx(math.sqrt(sum(v * v for v in seg) / len(seg)), rel=1e-9)


# --- power factor ------------------------------------------------------------

def test_pf_resistive():
    v = three_phase(155.0)
    pf = power_factor(v, v / 10, PERIOD)
    assert np.allclose(pf[PERIOD:], 1.0, atol=0.005)


def test_pf_lagging_60():
    v = three_phase(155.0)
    i = three_phase(10.0, shift=math.radians(60))
    pf = power_factor(v, i, PERIOD)
    assert np.allclose(pf[PERIOD:], 0.5, atol=0.01)


def test_pf_zero_current():
    v = three_phase(155.0)
    assert not np.any(power_factor(v, np.zeros_like(v), PERIOD))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_pf_bounded(seed):
    rng = np.random.default_rng(seed)
    v, i = rng.normal(size=(500, 3)), rng.normal(size=(500, 3)) * rng.uniform(0, 5)
    pf = power_factor(v, i, 100)
    assert np.all((pf >= 0) & (pf <= 1))


# --- THD ---------------------------------------------------------------------

def test_thd_pure():
    t = np.arange(2 * PERIOD) / FS
    assert thd(np.sin(2 * np.pi * 50 * t), FS) == pytest.approx(0.0, abs=0.1)


def test_thd_third_harmonic():
    t = np.arange(2 * PERIOD) / FS
    x = np.sin(2 * np.pi * 50 * t) + 0.1 * np.sin(2 * np.pi * 150 * t + 0.3)
    assert thd(x, FS) == pytest.approx(10.0, abs=0.2)


def test_thd_clipped_matches_brute_dft():
    fs = 5000.0
    t = np.arange(200) / fs  # two periods
    x = np.clip(np.sin(2 * np.pi * 50 * t), -0.6, 0.6)
    assert thd(x, fs) == pytest.approx(brute_thd(x, cycles=2), abs=0.1)


def test_thd_shift_invariant():
    t = np.arange(3 * PERIOD) / FS
    x = np.maximum(np.sin(2 * np.pi * 50 * t), 0) + 0.05 * np.sin(2 * np.pi * 350 * t)
    assert thd(x[:2 * PERIOD], FS) == pytest.approx(thd(x[PERIOD:], FS), abs=0.01)


def test_thd_errors():
    with pytest.raises(FundamentalAbsent):
        thd(np.ones(PERIOD), FS)
    with pytest.raises(ValueError):
        thd(np.sin(np.arange(1234) / 10.0), FS)


def test_spectrum_amplitudes():
    t = np.arange(PERIOD) / FS
    x = 1.5 + 3 * np.sin(2 * np.pi * 50 * t) + 0.5 * np.cos(2 * np.pi * 250 * t)
    amp = harmonic_spectrum(x, FS, 50.0, 6)
    assert amp == pytest.approx([1.5, 3, 0, 0, 0, 0.5, 0], abs=1e-9)


def test_signed_norm():
    q = np.array([[0.0, 3.0, -4.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.allclose(signed_norm(q), [-5.0, 1.0, 0.0])


# --- report ------------------------------------------------------------------

@pytest.fixture(scope="module")
def traces():
    return [simulate(ScenarioConfig(strategy=k)) for k in StrategyKind]


def test_report_invariants(traces):
    rep = evaluate(traces[0])
    assert np.all((rep.pf >= 0) & (rep.pf <= 1))
    assert np.all(rep.thd >= 0)
    assert rep.thd.shape[1] == 3
    assert rep.time.shape == rep.pf.shape == rep.p.shape == rep.q.shape


def test_identical_traces_identical_rows(traces):
    rows = compare_report(traces[0], traces[0])
    assert rows[0] == rows[1]
    assert tuple(rows[0]) == COMPARE_FIELDS


def test_mismatched_scenarios(traces):
    other = simulate(ScenarioConfig(duration=0.1))
    with pytest.raises(MismatchedScenarios):
        compare_report(traces[0], other)


def test_hybrid_beats_plain_in_disturbance(traces):
    hybrid, plain = compare_report(*traces)
    assert hybrid["min_pf_disturbance"] > plain["min_pf_disturbance"]


def test_no_disturbance_rows_agree():
    cfg = ScenarioConfig(disturbance=DisturbanceSpec(amplitude=0.0))
    rows = compare_report(*(simulate(dataclasses.replace(cfg, strategy=k)) for k in StrategyKind))
    for key in COMPARE_FIELDS[1:]:
        assert rows[0][key] == pytest.approx(rows[1][key], abs=0.01, rel=0.01)


def test_format_table():
    rows = [{"strategy": "a", "x": 1.0}, {"strategy": "b", "x": 0.5}]
    lines = format_table(rows).splitlines()
    assert len(lines) == 2
    assert lines[0].split() == ["strategy", "a", "b"]
    assert lines[1].split() == ["x", "1", "0.5"]
