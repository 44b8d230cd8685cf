"""Fixed-step simulation of the three-phase four-wire test system.

Topology (one phase, neutral solidly connected):

    EMF ──┬──────────── line R_L, L_L ─── load
          │  (bus)
          ├── APF leg (Ideal: current source; Switched: ±Vdc/2 behind L_f, R_f)
          └── disturbance current (line 1 only)

The APF and the measurement point sit on the stiff source bus; the line
impedance is part of each load feeder. Source current obeys
``i_s = i_load + i_dist - i_inj`` exactly at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .control import BOTH_OFF, LOWER_ON, UPPER_ON, Controller, HysteresisState, StrategyKind
from .emd import EmdConfig
from .transform import ThreePhaseSample, abc_to_ab0_array

TWO_PI_3 = 2.0 * math.pi / 3.0


class ConfigInvalid(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SourceSpec:
    voltage_rms: float = 110.0
    frequency: float = 50.0
    amplitude_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    phase_offset_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def peak(self) -> float:
        return math.sqrt(2.0) * self.voltage_rms


@dataclass(frozen=True)
class LineSpec:
    resistance: float = 0.07
    inductance: float = 0.045


@dataclass(frozen=True)
class Linear:
    resistance: float
    inductance: float = 0.0
    kind = "linear"


@dataclass(frozen=True)
class HalfWaveRectified:
    resistance: float
    kind = "half_wave_rectified"


@dataclass(frozen=True)
class ClippedResistive:
    resistance: float
    clip_fraction: float = 0.7
    kind = "clipped_resistive"


LoadSpec = Union[Linear, HalfWaveRectified, ClippedResistive]


def default_loads() -> tuple[LoadSpec, LoadSpec, LoadSpec]:
    return (HalfWaveRectified(8.0), Linear(12.0, 0.02), ClippedResistive(10.0, 0.7))


@dataclass(frozen=True)
class DisturbanceSpec:
    line: int = 1
    start: float = 0.088
    end: float = 0.094
    # None -> 0.3 x nominal peak current of the target line's feeder
    amplitude: float | None = None
    center: float = 750.0
    bandwidth: float = 500.0
    tones: int = 12
    ramp: float = 0.5e-3


@dataclass(frozen=True)
class ConverterSpec:
    mode: str = "ideal"
    vdc: float = 400.0
    filter_inductance: float = 3e-3
    filter_resistance: float = 0.05
    hysteresis_band: float = 0.5
    apf_on_time: float = 0.04
    inverted_polarity: bool = False
    # comparator evaluations per simulation step (switched mode)
    substeps: int = 10


@dataclass(frozen=True)
class ControlSpec:
    window: float = 0.02
    hop: float = 0.005
    lowpass_cutoff: float = 8.0
    fundamental_tolerance: float = 0.3
    subtract_residual: bool = False
    force_zero_residual: bool = False


@dataclass(frozen=True)
class MetricsSpec:
    settle_time: float = 0.25
    pf_window: float = 0.02
    max_harmonic: int = 40


@dataclass(frozen=True)
class ScenarioConfig:
    source: SourceSpec = field(default_factory=SourceSpec)
    line: LineSpec = field(default_factory=LineSpec)
    loads: tuple = field(default_factory=default_loads)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    converter: ConverterSpec = field(default_factory=ConverterSpec)
    emd: EmdConfig = field(default_factory=EmdConfig)
    control: ControlSpec = field(default_factory=ControlSpec)
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    strategy: StrategyKind = StrategyKind.EMD_HYBRID
    dt: float = 2e-5
    duration: float = 0.4
    seed: int = 0

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def samples(self, seconds: float) -> int:
        return int(round(seconds / self.dt))


# --- source -----------------------------------------------------------------

def source_voltages(t: float, spec: SourceSpec = SourceSpec()) -> ThreePhaseSample:
    w = 2.0 * math.pi * spec.frequency
    a, off = spec.amplitude_scale, spec.phase_offset_deg
    vp = spec.peak
    return ThreePhaseSample(
        a[0] * vp * math.sin(w * t + math.radians(off[0])),
        a[1] * vp * math.sin(w * t - TWO_PI_3 + math.radians(off[1])),
        a[2] * vp * math.sin(w * t + TWO_PI_3 + math.radians(off[2])),
    )


# --- loads ------------------------------------------------------------------

def _rl_step(i: float, v_prev: float, v: float, r: float, l: float, dt: float) -> float:
    # trapezoidal companion of L di/dt = v - R i
    a = l / dt
    return ((a - 0.5 * r) * i + 0.5 * (v_prev + v)) / (a + 0.5 * r)


class LoadBranch:
    """One phase feeder: optional line RL in series with a load element.

    Without line impedance the load laws are algebraic in the terminal
    voltage; with it the series current is the integrated state.
    """

    def __init__(self, spec: LoadSpec, line: LineSpec | None = None, v_peak: float = 155.56):
        self.spec = spec
        self.r_line = line.resistance if line else 0.0
        self.l_line = line.inductance if line else 0.0
        self.v_peak = v_peak
        self.i = 0.0
        self.v_prev = 0.0

    def step(self, v: float, dt: float) -> float:
        spec = self.spec
        if isinstance(spec, Linear):
            r, l = spec.resistance + self.r_line, spec.inductance + self.l_line
            i = v / r if l == 0.0 else _rl_step(self.i, self.v_prev, v, r, l, dt)
        elif isinstance(spec, HalfWaveRectified):
            r = spec.resistance + self.r_line
            if self.l_line == 0.0:
                i = max(v, 0.0) / r
            else:
                i = max(_rl_step(self.i, self.v_prev, v, r, self.l_line, dt), 0.0)
        elif isinstance(spec, ClippedResistive):
            limit = spec.clip_fraction * self.v_peak / spec.resistance
            r = spec.resistance + self.r_line
            if self.l_line == 0.0:
                vc = spec.clip_fraction * self.v_peak
                i = min(max(v, -vc), vc) / spec.resistance
            else:
                i = _rl_step(self.i, self.v_prev, v, r, self.l_line, dt)
            i = min(max(i, -limit), limit)
        else:
            raise TypeError(f"unknown load spec {spec!r}")
        self.i, self.v_prev = i, v
        return i


def load_current(v_pcc: ThreePhaseSample, state: list[LoadBranch], dt: float) -> ThreePhaseSample:
    return ThreePhaseSample(*(b.step(v, dt) for b, v in zip(state, v_pcc)))


def nominal_peak_current(load: LoadSpec, line: LineSpec, source: SourceSpec) -> float:
    w = 2.0 * math.pi * source.frequency
    l = line.inductance + (load.inductance if isinstance(load, Linear) else 0.0)
    return source.peak / abs(complex(load.resistance + line.resistance, w * l))


# --- disturbance --------------------------------------------------------------

class Disturbance:
    """Seeded band-limited burst: a sum of random tones in
    [center - bandwidth/2, center + bandwidth/2] with raised-cosine edges.
    """

    def __init__(self, spec: DisturbanceSpec, amplitude: float, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        lo = max(spec.center - 0.5 * spec.bandwidth, 1.0)
        hi = spec.center + 0.5 * spec.bandwidth
        self.freqs = rng.uniform(lo, hi, spec.tones)
        self.phases = rng.uniform(0.0, 2.0 * math.pi, spec.tones)
        self.weights = rng.uniform(0.5, 1.0, spec.tones)
        self.amplitude = amplitude
        self.scale = 0.0
        if spec.end > spec.start and amplitude > 0:
            grid = np.arange(spec.start, spec.end, 1e-6)
            peak = np.max(np.abs(self._raw(grid) * self._ramp(grid)))
            self.scale = amplitude / peak if peak > 0 else 0.0

    def _raw(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.sum(self.weights * np.sin(2 * np.pi * self.freqs * t + self.phases), axis=-1)

    def _ramp(self, t):
        s = self.spec
        t = np.asarray(t, dtype=float)
        rise = np.clip((t - s.start) / s.ramp, 0.0, 1.0) if s.ramp > 0 else 1.0
        fall = np.clip((s.end - t) / s.ramp, 0.0, 1.0) if s.ramp > 0 else 1.0
        return 0.5 * (1 - np.cos(np.pi * rise)) * 0.5 * (1 - np.cos(np.pi * fall))

    def values(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = self.spec
        inside = (t >= s.start) & (t <= s.end)
        out = np.zeros(t.shape)
        if self.scale == 0.0 or not np.any(inside):
            return out
        out[inside] = self.scale * self._raw(t[inside]) * self._ramp(t[inside])
        return np.clip(out, -self.amplitude, self.amplitude)

    def __call__(self, t: float) -> float:
        return float(self.values(np.array([t]))[0])


def disturbance_current(t: float, spec: DisturbanceSpec, amplitude: float | None = None,
                        seed: int = 0) -> float:
    amp = spec.amplitude if amplitude is None else amplitude
    return Disturbance(spec, amp or 0.0, seed)(t)


def resolve_disturbance(cfg: ScenarioConfig) -> Disturbance:
    d = cfg.disturbance
    amp = d.amplitude
    if amp is None:
        amp = 0.3 * nominal_peak_current(cfg.loads[d.line - 1], cfg.line, cfg.source)
    return Disturbance(d, amp, cfg.seed)


# --- converter ----------------------------------------------------------------

class Converter:
    """Four-leg split-capacitor APF.

    The DC-link midpoint is stiff and tied to the system neutral, so the
    three phase legs set the injected currents and the neutral conductor
    of the converter carries their sum.
    """

    def __init__(self, spec: ConverterSpec):
        self.spec = spec
        self.i = [0.0, 0.0, 0.0]
        self.hyst = HysteresisState(spec.hysteresis_band, inverted_polarity=spec.inverted_polarity)
        self.shoot_through = False

    @property
    def switches(self) -> list[int]:
        return self.hyst.legs

    def output(self) -> ThreePhaseSample:
        return ThreePhaseSample(*self.i)

    def step(self, refs: ThreePhaseSample, v_pcc: ThreePhaseSample, enabled: bool,
             dt: float, v_next: ThreePhaseSample | None = None) -> ThreePhaseSample:
        """Return the injected current at this step and advance the state."""
        spec = self.spec
        if not enabled:
            self.i = [0.0, 0.0, 0.0]
            self.hyst.legs = [BOTH_OFF, BOTH_OFF, BOTH_OFF]
            return ThreePhaseSample(0.0, 0.0, 0.0)
        if spec.mode == "ideal":
            self.i = list(refs)
            self.hyst.legs = [BOTH_OFF, BOTH_OFF, BOTH_OFF]
            return ThreePhaseSample(*refs)
        now = ThreePhaseSample(*self.i)
        v_next = v_pcc if v_next is None else v_next
        half = 0.5 * spec.vdc
        h = dt / spec.substeps
        # reference held over the step, bus voltage interpolated
        for j in range(spec.substeps):
            legs = self.hyst.update(self.i, refs)
            self.shoot_through |= any(up and low for up, low in self.gates)
            a, b = j / spec.substeps, (j + 1) / spec.substeps
            for k in range(3):
                v_leg = half if legs[k] == UPPER_ON else -half
                v_bus = v_pcc[k] + 0.5 * (a + b) * (v_next[k] - v_pcc[k])
                v_avg = v_leg - v_bus
                self.i[k] = _rl_step(self.i[k], v_avg, v_avg, spec.filter_resistance,
                                     spec.filter_inductance, h)
        return now

    @property
    def gates(self) -> list[tuple[bool, bool]]:
        """(upper, lower) gate signals per phase leg."""
        return [(s == UPPER_ON, s == LOWER_ON) for s in self.hyst.legs]


def converter_step(refs, v_pcc, state: Converter, enabled: bool, dt: float):
    injected = state.step(refs, v_pcc, enabled, dt)
    return injected, sum(injected)


# --- simulation ---------------------------------------------------------------

TRACE_COLUMNS = (
    "time",
    "v_R", "v_S", "v_T",
    "is_R", "is_S", "is_T", "is_N",
    "iload_R", "iload_S", "iload_T", "iload_N",
    "idist",
    "iapf_R", "iapf_S", "iapf_T", "iapf_N",
    "iref_R", "iref_S", "iref_T", "iref_N",
    "in_R", "in_S", "in_T",
    "sw_R", "sw_S", "sw_T",
    "p", "p_bar", "p_tilde", "q_alpha", "q_beta", "q_zero",
)


@dataclass
class SimulationTrace:
    config: ScenarioConfig
    data: np.ndarray  # (n_steps, len(TRACE_COLUMNS))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, TRACE_COLUMNS.index(name)]

    def phases(self, prefix: str) -> np.ndarray:
        """(N, 3) array for columns ``prefix_R``, ``prefix_S``, ``prefix_T``."""
        idx = [TRACE_COLUMNS.index(f"{prefix}_{p}") for p in "RST"]
        return self.data[:, idx]

    @property
    def time(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.config.dt


def validate(cfg: ScenarioConfig) -> None:
    if not cfg.dt > 0:
        raise ConfigInvalid("dt", "must be positive")
    if not cfg.duration > cfg.converter.apf_on_time:
        raise ConfigInvalid("duration", "must exceed converter.apf_on_time")
    if cfg.source.voltage_rms <= 0 or cfg.source.frequency <= 0:
        raise ConfigInvalid("source", "voltage_rms and frequency must be positive")
    if cfg.line.resistance < 0 or cfg.line.inductance < 0:
        raise ConfigInvalid("line", "resistance and inductance must be >= 0")
    if len(cfg.loads) != 3:
        raise ConfigInvalid("loads", "exactly three per-phase loads required")
    for k, load in enumerate(cfg.loads):
        if not load.resistance > 0:
            raise ConfigInvalid(f"loads[{k}].resistance", "must be positive")
        if isinstance(load, ClippedResistive) and not 0 < load.clip_fraction <= 1:
            raise ConfigInvalid(f"loads[{k}].clip_fraction", "must be in (0, 1]")
        if isinstance(load, Linear) and load.inductance < 0:
            raise ConfigInvalid(f"loads[{k}].inductance", "must be >= 0")
    d = cfg.disturbance
    if d.line not in (1, 2, 3):
        raise ConfigInvalid("disturbance.line", "must be 1, 2 or 3")
    if d.start > d.end:
        raise ConfigInvalid("disturbance.start", "must not exceed disturbance.end")
    if d.amplitude is not None and d.amplitude < 0:
        raise ConfigInvalid("disturbance.amplitude", "must be >= 0")
    c = cfg.converter
    if c.mode not in ("ideal", "switched"):
        raise ConfigInvalid("converter.mode", "must be 'ideal' or 'switched'")
    if not c.filter_inductance > 0:
        raise ConfigInvalid("converter.filter_inductance", "must be positive")
    if c.substeps < 1:
        raise ConfigInvalid("converter.substeps", "must be >= 1")
    if not c.hysteresis_band > 0:
        raise ConfigInvalid("converter.hysteresis_band", "must be positive")
    if c.mode == "switched" and not 0.5 * c.vdc > cfg.source.peak * max(cfg.source.amplitude_scale):
        raise ConfigInvalid("converter.vdc", "Vdc/2 must exceed the peak bus voltage")
    ctl = cfg.control
    for name in ("window", "hop"):
        n = getattr(ctl, name) / cfg.dt
        if abs(n - round(n)) > 1e-6 or round(n) < 1:
            raise ConfigInvalid(f"control.{name}", "must be a positive multiple of dt")
    if ctl.hop > ctl.window:
        raise ConfigInvalid("control.hop", "must not exceed control.window")
    if ctl.window < 0.5 / cfg.source.frequency - 1e-12:
        raise ConfigInvalid("control.window", "must cover at least half a fundamental period")
    if not 0 < ctl.lowpass_cutoff < 0.5 / cfg.dt:
        raise ConfigInvalid("control.lowpass_cutoff", "must be in (0, Nyquist)")


def build_controller(cfg: ScenarioConfig, kind: StrategyKind | None = None) -> Controller:
    fs = 1.0 / cfg.dt
    emd = cfg.emd
    if emd.fundamental != cfg.source.frequency:
        emd = EmdConfig(emd.sd_threshold, emd.max_sift_iterations, emd.max_imfs,
                        emd.boundary_extension, cfg.source.frequency)
    return Controller(
        kind or cfg.strategy, fs,
        nominal_voltage_sq=3.0 * cfg.source.voltage_rms ** 2,
        emd=emd,
        window=cfg.samples(cfg.control.window),
        hop=cfg.samples(cfg.control.hop),
        period=int(round(fs / cfg.source.frequency)),
        cutoff=cfg.control.lowpass_cutoff,
        fundamental_tolerance=cfg.control.fundamental_tolerance,
        subtract_residual=cfg.control.subtract_residual,
        force_zero_residual=cfg.control.force_zero_residual,
    )


def simulate(cfg: ScenarioConfig, controller: Controller | None = None) -> SimulationTrace:
    validate(cfg)
    dt, n = cfg.dt, cfg.n_steps
    ctl = controller or build_controller(cfg)
    loads = [LoadBranch(spec, cfg.line, cfg.source.peak) for spec in cfg.loads]
    conv = Converter(cfg.converter)
    dist = resolve_disturbance(cfg)
    t_grid = np.arange(n) * dt
    d_values = dist.values(t_grid)
    line_idx = cfg.disturbance.line - 1
    apf_on = cfg.samples(cfg.converter.apf_on_time)

    out = np.empty((n, len(TRACE_COLUMNS)))
    v_next = source_voltages(0.0, cfg.source)
    for k in range(n):
        t = t_grid[k]
        v = v_next
        v_next = source_voltages(t + dt, cfg.source)
        i_load = load_current(v, loads, dt)
        d = float(d_values[k])
        meas = list(i_load)
        meas[line_idx] += d
        meas = ThreePhaseSample(*meas)

        co = ctl.tick(v, meas)
        ref = co.reference
        inj = conv.step(ref, v, k >= apf_on, dt, v_next)
        sw = conv.switches
        i_s = (meas[0] - inj[0], meas[1] - inj[1], meas[2] - inj[2])
        ps = co.power
        out[k] = (
            t,
            v[0], v[1], v[2],
            i_s[0], i_s[1], i_s[2], -(i_s[0] + i_s[1] + i_s[2]),
            i_load[0], i_load[1], i_load[2], -(meas[0] + meas[1] + meas[2]),
            d,
            inj[0], inj[1], inj[2], inj[0] + inj[1] + inj[2],
            ref[0], ref[1], ref[2], co.neutral_reference,
            co.i_n[0], co.i_n[1], co.i_n[2],
            sw[0], sw[1], sw[2],
            ps.p, ps.p_bar, ps.p_tilde, ps.q[0], ps.q[1], ps.q[2],
        )
    return SimulationTrace(cfg, out)


def source_power(trace: SimulationTrace) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous source real power and imaginary power vector (N, 3)."""
    v = abc_to_ab0_array(trace.phases("v"))
    i = abc_to_ab0_array(trace.phases("is"))
    return np.sum(v * i, axis=1), np.cross(v, i)
