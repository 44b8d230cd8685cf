import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from apfsim.power import (InvalidCutoff, LowPassState, instantaneous_imaginary_power,
                          instantaneous_real_power, lowpass_design, lowpass_step,
                          split_power)
from apfsim.transform import ThreePhaseSample, abc_to_ab0

FS = 50_000.0
finite = st.floats(-1e3, 1e3, allow_nan=False)
vec = st.tuples(finite, finite, finite)


def run(state: LowPassState, x):
    return np.array([lowpass_step(state, v) for v in x])


def steady_amplitude(f, cutoff=8.0, fs=FS, seconds=1.5):
    t = np.arange(int(seconds * fs)) / fs
    y = run(lowpass_design(cutoff, fs), np.sin(2 * np.pi * f * t))
    tail = y[-int(round(fs / f)) * max(1, int(f // 8)):]
    return 0.5 * (tail.max() - tail.min())


# --- p and q -----------------------------------------------------------------

def test_real_power_examples():
    assert instantaneous_real_power((1, 0, 0), (2, 0, 0)) == 2
    assert instantaneous_real_power((1, 0, 0), (0, 3, 0)) == 0


def test_imaginary_power_examples():
    assert instantaneous_imaginary_power((1, 0, 0), (0, 1, 0)) == pytest.approx((0, 0, 1))
    assert instantaneous_imaginary_power((1, 2, 3), (2, 4, 6)) == pytest.approx((0, 0, 0))


@given(vec, vec)
def test_p_is_dot_product(v, i):
    expected = math.fsum(a * b for a, b in zip(v, i))
    scale = math.hypot(*v) * math.hypot(*i)
    assert instantaneous_real_power(v, i) == pytest.approx(expected, abs=1e-12 * scale + 1e-300)


@given(vec, vec)
def test_q_is_cross_product(v, i):
    q = instantaneous_imaginary_power(v, i)
    scale = math.hypot(*v) * math.hypot(*i)
    assert q == pytest.approx(np.cross(v, i), abs=1e-12 * scale + 1e-300)
    # matrix form: q = M(v) i with M skew-symmetric
    va, vb, v0 = v
    m = np.array([[0, -v0, vb], [v0, 0, -va], [-vb, va, 0]])
    assert q == pytest.approx(m @ np.array(i), abs=1e-12 * scale + 1e-300)


@given(vec, vec)
def test_q_antisymmetric_and_bounded(v, i):
    q1 = np.array(instantaneous_imaginary_power(v, i))
    q2 = np.array(instantaneous_imaginary_power(i, v))
    scale = math.hypot(*v) * math.hypot(*i)
    assert np.allclose(q1, -q2, atol=1e-12 * scale + 1e-300)
    assert np.linalg.norm(q1) <= scale * (1 + 1e-12) + 1e-300


@given(vec, vec)
def test_p_in_phase_coordinates(v, i):
    va, ia = abc_to_ab0(ThreePhaseSample(*v)), abc_to_ab0(ThreePhaseSample(*i))
    scale = math.hypot(*v) * math.hypot(*i)
    assert instantaneous_real_power(va, ia) == pytest.approx(
        sum(a * b for a, b in zip(v, i)), abs=1e-10 * scale + 1e-300)


# --- filter design ------------------------------------------------------------

def test_coefficients_match_scipy_butter():
    b, a = signal.butter(2, 8.0, fs=FS)
    mine_b, mine_a = lowpass_design(8.0, FS).ba
    assert np.allclose(mine_b, b, rtol=1e-9, atol=0)
    assert np.allclose(mine_a, a, rtol=1e-9, atol=1e-15)


def test_invalid_cutoff():
    for fc in (0.0, -1.0, FS / 2, FS):
        with pytest.raises(InvalidCutoff):
            lowpass_design(fc, FS)


def test_dc_gain():
    y = run(lowpass_design(8.0, FS), np.full(int(0.5 * FS), 3.7))
    assert y[-1] == pytest.approx(3.7, abs=1e-6)


def test_50hz_attenuation():
    analytic = 1 / math.sqrt(1 + (50 / 8) ** 4)
    assert steady_amplitude(50.0) == pytest.approx(analytic, rel=0.05)


def test_cutoff_gain():
    assert steady_amplitude(8.0, seconds=3.0) == pytest.approx(1 / math.sqrt(2), rel=0.03)


def test_impulse_sums_to_one():
    x = np.zeros(int(1.0 * FS))
    x[0] = 1.0
    assert run(lowpass_design(8.0, FS), x).sum() == pytest.approx(1.0, abs=1e-6)


def test_zero_input_stays_zero():
    assert not np.any(run(lowpass_design(8.0, FS), np.zeros(1000)))


def test_step_matches_continuous_filter():
    # continuous-time 2nd-order Butterworth, simulated independently
    wc = 2 * np.pi * 8.0
    t = np.arange(int(0.5 * FS)) / FS
    _, y_ref, _ = signal.lsim(([wc ** 2], [1, math.sqrt(2) * wc, wc ** 2]), np.ones_like(t), t)
    y = run(lowpass_design(8.0, FS), np.ones_like(t))
    assert np.max(np.abs(y - y_ref)) < 1e-3
    settled = y[t >= 0.25]
    assert np.all(np.abs(settled - 1.0) <= 0.02)
    # 63% crossing sits where a ~8 Hz second-order response puts it
    t63 = t[np.argmax(y >= 0.632)]
    assert 0.015 < t63 < 0.04


def test_reset_clears_state():
    lp = lowpass_design(8.0, FS)
    run(lp, np.ones(100))
    lp.reset()
    assert lp.z1 == lp.z2 == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_filter_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=400), rng.normal(size=400)
    lhs = run(lowpass_design(8.0, FS), a * x + b * y)
    rhs = a * run(lowpass_design(8.0, FS), x) + b * run(lowpass_design(8.0, FS), y)
    assert np.allclose(lhs, rhs, atol=1e-9)


# --- split_power --------------------------------------------------------------

def test_split_constant():
    out = list(split_power(np.full(int(0.5 * FS), 250.0)))
    assert abs(out[-1][1]) < 1e-4


def test_split_100hz():
    t = np.arange(int(1.0 * FS)) / FS
    p = 100 + 30 * np.sin(2 * np.pi * 100 * t)
    out = np.array(list(split_power(p)))
    tail = out[-int(FS / 100) * 5:]
    assert np.all(np.abs(tail[:, 0] - 100) <= 1)
    assert 0.5 * np.ptp(tail[:, 1]) == pytest.approx(30, abs=1)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=200))
def test_split_identity(values):
    # p_tilde is p - p_bar itself; the sum back is exact up to one rounding
    for p, (p_bar, p_tilde) in zip(values, split_power(values)):
        assert p_tilde == p - p_bar
        assert abs(p_bar + p_tilde - p) <= 2 * np.finfo(float).eps * max(abs(p), abs(p_bar))
