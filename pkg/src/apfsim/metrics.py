"""Power-quality metrics over simulation traces and the strategy comparison."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .plant import SimulationTrace, source_power
from .power import lowpass_design


class FundamentalAbsent(ValueError):
    pass


class MismatchedScenarios(ValueError):
    pass


def _trailing_mean(x: np.ndarray, n: int) -> np.ndarray:
    """Mean over the trailing `n` samples (fewer at the start)."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - n, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def windowed_rms(x, window: int) -> np.ndarray:
    """Sliding RMS over the trailing `window` samples."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum(_trailing_mean(x * x, window), 0.0))


def power_factor(v: np.ndarray, i: np.ndarray, window: int) -> np.ndarray:
    """Collective power factor P / S over a trailing window.

    `v` and `i` are (N, 3) phase arrays. S is the product of the
    collective RMS voltage and current; zero current gives PF 0.
    """
    v = np.asarray(v, dtype=float)
    i = np.asarray(i, dtype=float)
    p = _trailing_mean(np.sum(v * i, axis=1), window)
    v2 = _trailing_mean(np.sum(v * v, axis=1), window)
    i2 = _trailing_mean(np.sum(i * i, axis=1), window)
    s = np.sqrt(np.maximum(v2, 0.0) * np.maximum(i2, 0.0))
    pf = np.zeros_like(s)
    ok = s > 1e-12 * max(float(np.max(s, initial=0.0)), 1e-300)
    pf[ok] = np.abs(p[ok]) / s[ok]
    return np.minimum(pf, 1.0)


def harmonic_spectrum(x, sample_rate: float, fundamental: float, max_harmonic: int) -> np.ndarray:
    """Amplitudes of harmonics 0..max_harmonic over a whole-period window."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cycles = n * fundamental / sample_rate
    if abs(cycles - round(cycles)) > 1e-6 or round(cycles) < 1:
        raise ValueError(f"window holds {cycles:.4f} periods; need a whole number")
    cycles = int(round(cycles))
    spec = np.fft.rfft(x)
    # Parseval over the one-sided spectrum
    weights = np.full(spec.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    energy = float(np.dot(x, x))
    if energy > 0 and abs(np.sum(weights * np.abs(spec) ** 2) / n - energy) > 1e-6 * energy:
        raise ArithmeticError("Parseval check failed")
    bins = np.arange(max_harmonic + 1) * cycles
    bins = bins[bins < spec.size]
    amp = 2.0 * np.abs(spec[bins]) / n
    amp[0] /= 2.0
    return amp


def thd(x, sample_rate: float, fundamental: float = 50.0, max_harmonic: int = 40) -> float:
    """Total harmonic distortion in percent over the whole of `x`."""
    x = np.asarray(x, dtype=float)
    amp = harmonic_spectrum(x, sample_rate, fundamental, max_harmonic)
    norm = math.sqrt(float(np.dot(x, x)))
    if amp.size < 2 or amp[1] < 1e-9 * norm or amp[1] == 0.0:
        raise FundamentalAbsent("fundamental component too small for THD")
    return 100.0 * math.sqrt(float(np.sum(amp[2:] ** 2))) / amp[1]


def thd_windows(x, sample_rate: float, fundamental: float, start: int, stop: int,
                max_harmonic: int = 40) -> np.ndarray:
    """THD of consecutive one-period windows of x[start:stop]."""
    period = int(round(sample_rate / fundamental))
    out = []
    for a in range(start, stop - period + 1, period):
        out.append(thd(x[a:a + period], sample_rate, fundamental, max_harmonic))
    return np.array(out)


def smoothed(x, cutoff: float, sample_rate: float) -> np.ndarray:
    b, a = lowpass_design(cutoff, sample_rate).ba
    return lfilter(b, a, np.asarray(x, dtype=float))


def signed_norm(q: np.ndarray) -> np.ndarray:
    """|q| carrying the sign of the component with the largest magnitude."""
    q = np.asarray(q, dtype=float)
    dom = np.argmax(np.abs(q), axis=1)
    sign = np.sign(q[np.arange(q.shape[0]), dom])
    sign[sign == 0] = 1.0
    return sign * np.linalg.norm(q, axis=1)


@dataclass
class MetricsReport:
    time: np.ndarray
    p: np.ndarray          # smoothed source real power, W
    q: np.ndarray          # smoothed signed |q| of the source, VA
    pf: np.ndarray
    neutral_rms: np.ndarray
    thd: np.ndarray        # (n_windows, 3) per-phase THD %, steady region
    summary: dict


def _span(trace: SimulationTrace, t0: float, t1: float) -> slice:
    cfg = trace.config
    n = trace.data.shape[0]
    return slice(min(max(cfg.samples(t0), 0), n), min(max(cfg.samples(t1), 0), n))


def evaluate(trace: SimulationTrace) -> MetricsReport:
    """Compute the metric traces and scalar summaries for one run.

    Regions: pre-APF [one period, apf_on); post-APF from one PF window after
    turn-on; disturbance from its start to its end plus one PF window;
    steady state from ``metrics.settle_time`` to the end of the run.
    """
    cfg = trace.config
    fs = trace.sample_rate
    f0 = cfg.source.frequency
    m = cfg.metrics
    win = cfg.samples(m.pf_window)
    v, i_s = trace.phases("v"), trace.phases("is")
    p_inst, q_vec = source_power(trace)
    p_s = smoothed(p_inst, cfg.control.lowpass_cutoff, fs)
    q_s = smoothed(signed_norm(q_vec), cfg.control.lowpass_cutoff, fs)
    pf = power_factor(v, i_s, win)
    n_rms = windowed_rms(trace["is_N"], win)

    period = 1.0 / f0
    apf_on = cfg.converter.apf_on_time
    d = cfg.disturbance
    pre = _span(trace, period, apf_on)
    post = _span(trace, apf_on + m.pf_window, cfg.duration)
    steady = _span(trace, max(m.settle_time, apf_on + m.pf_window), cfg.duration)
    per = int(round(fs / f0))
    # whole periods only, anchored at the end of the run
    steady = slice(steady.stop - (steady.stop - steady.start) // per * per, steady.stop)
    dist = _span(trace, d.start, d.end + m.pf_window) if d.end > d.start else slice(0, 0)

    thd_rows = np.column_stack([
        thd_windows(i_s[:, k], fs, f0, steady.start, steady.stop, m.max_harmonic)
        for k in range(3)
    ]) if steady.stop - steady.start >= per else np.empty((0, 3))

    # excursion is judged on a one-period mean so the 8 Hz smoothing tail
    # of the APF turn-on does not leak into the disturbance window
    q_fast = _trailing_mean(signed_norm(q_vec), win)
    q_ref = float(np.mean(q_fast[steady])) if steady.stop > steady.start else 0.0
    q_ripple = float(np.ptp(q_fast[steady])) if steady.stop > steady.start else 0.0
    q_exc = float(np.max(np.abs(q_fast[dist] - q_ref))) if dist.stop > dist.start else 0.0
    p_load = np.mean(np.sum(v * trace.phases("iload"), axis=1)[steady]) if steady.stop > steady.start else 0.0

    def rms(x, sl):
        return float(np.sqrt(np.mean(x[sl] ** 2))) if sl.stop > sl.start else float("nan")

    summary = {
        "strategy": cfg.strategy.value,
        "min_pf_post": float(np.min(pf[post])) if post.stop > post.start else float("nan"),
        "min_pf_disturbance": float(np.min(pf[dist])) if dist.stop > dist.start else float("nan"),
        "pf_steady": float(np.mean(pf[steady])) if steady.stop > steady.start else float("nan"),
        "q_excursion_disturbance": q_exc,
        "q_ripple_steady": q_ripple,
        "thd_mean_steady": float(np.mean(thd_rows)) if thd_rows.size else float("nan"),
        "thd_max_steady": float(np.max(thd_rows)) if thd_rows.size else float("nan"),
        "neutral_rms_pre": rms(trace["is_N"], pre),
        "neutral_rms_steady": rms(trace["is_N"], steady),
        "p_source_steady": float(np.mean(p_inst[steady])) if steady.stop > steady.start else float("nan"),
        "p_load_steady": float(p_load),
    }
    return MetricsReport(trace.time, p_s, q_s, pf, n_rms, thd_rows, summary)


COMPARE_FIELDS = (
    "strategy", "min_pf_disturbance", "min_pf_post", "pf_steady",
    "q_excursion_disturbance", "q_ripple_steady", "thd_mean_steady",
    "thd_max_steady", "neutral_rms_pre", "neutral_rms_steady",
)


def _scenario_key(cfg):
    return dataclasses.replace(cfg, strategy=None)


def compare_report(trace_a: SimulationTrace, trace_b: SimulationTrace) -> list[dict]:
    if _scenario_key(trace_a.config) != _scenario_key(trace_b.config):
        raise MismatchedScenarios("traces come from different scenarios")
    rows = []
    for tr in (trace_a, trace_b):
        s = evaluate(tr).summary
        rows.append({k: s[k] for k in COMPARE_FIELDS})
    return rows


def format_table(rows: list[dict]) -> str:
    """One line per metric, one column per strategy."""
    if not rows:
        return ""
    cols = list(rows[0].keys())
    cells = [[r[c] if isinstance(r[c], str) else f"{r[c]:.6g}" for c in cols] for r in rows]
    name_w = max(len(c) for c in cols)
    val_w = max(len(x) for row in cells for x in row)
    lines = []
    for j, c in enumerate(cols):
        vals = "  ".join(f"{row[j]:>{val_w}}" for row in cells)
        lines.append(f"{c:<{name_w}}  {vals}")
    return "\n".join(lines)
