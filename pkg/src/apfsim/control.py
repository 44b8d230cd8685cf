"""APF control: EMD current split, p-q compensating currents, hysteresis switching."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .emd import EmdConfig, ImfSet, decompose, zero_crossing_rate
from .power import (LowPassState, PowerSample, instantaneous_imaginary_power,
                    instantaneous_real_power, lowpass_design)
from .transform import AlphaBeta0Sample, ThreePhaseSample, ab0_to_abc, abc_to_ab0


class VoltageCollapse(ArithmeticError):
    pass


class StrategyKind(str, enum.Enum):
    EMD_HYBRID = "emd_hybrid"
    PLAIN_MODIFIED_PQ = "plain_modified_pq"


@dataclass
class CurrentSplit:
    """Fundamental (`i_m`) and residual (`i_n`) parts, arrays shaped (3, N)."""
    i_m: np.ndarray
    i_n: np.ndarray


def classify_components(imfs: ImfSet, fundamental: float, sample_rate: float,
                        tolerance: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Split an IMF set into (fundamental_part, residual_part).

    The IMF whose zero-crossing rate lies within ``tolerance`` of the
    fundamental joins the residue on the fundamental side; when several
    qualify the most energetic one is taken. Everything else is residual.
    """
    residue = np.asarray(imfs.residue, dtype=float)
    best, best_energy = None, -1.0
    for k, imf in enumerate(imfs.imfs):
        rate = zero_crossing_rate(imf, sample_rate)
        if abs(rate - fundamental) <= tolerance * fundamental:
            energy = float(np.dot(imf, imf))
            if energy > best_energy:
                best, best_energy = k, energy
    fundamental_part = residue.copy()
    residual_part = np.zeros_like(residue)
    for k, imf in enumerate(imfs.imfs):
        if k == best:
            fundamental_part = fundamental_part + imf
        else:
            residual_part = residual_part + imf
    return fundamental_part, residual_part


def residual_current(i_l: np.ndarray, sample_rate: float, cfg: EmdConfig = EmdConfig(),
                     tolerance: float = 0.3) -> np.ndarray:
    """Per-phase EMD residual of a (3, N) window of line currents."""
    i_l = np.asarray(i_l, dtype=float)
    out = np.empty_like(i_l)
    for k in range(i_l.shape[0]):
        imfs = decompose(i_l[k], cfg, sample_rate)
        _, out[k] = classify_components(imfs, cfg.fundamental, sample_rate, tolerance)
    return out


def split_current(i_l: np.ndarray, sample_rate: float, cfg: EmdConfig = EmdConfig(),
                  tolerance: float = 0.3) -> CurrentSplit:
    i_l = np.asarray(i_l, dtype=float)
    i_n = residual_current(i_l, sample_rate, cfg, tolerance)
    return CurrentSplit(i_m=i_l - i_n, i_n=i_n)


def compensating_current_m(v: AlphaBeta0Sample, p_tilde: float, q, floor: float = 0.0) -> AlphaBeta0Sample:
    """Current carrying real power `p_tilde` and the realisable part of `q`.

    Returns ``(p_tilde * v + q x v) / |v|^2``. Raises VoltageCollapse when
    ``|v|^2`` is below `floor`.
    """
    va, vb, v0 = v
    qa, qb, q0 = q
    vv = va * va + vb * vb + v0 * v0
    if vv <= floor or vv == 0.0:
        raise VoltageCollapse(f"|v|^2 = {vv:.3g} below floor {floor:.3g}")
    # q x v
    ca = qb * v0 - q0 * vb
    cb = q0 * va - qa * v0
    c0 = qa * vb - qb * va
    return AlphaBeta0Sample(
        (p_tilde * va + ca) / vv,
        (p_tilde * vb + cb) / vv,
        (p_tilde * v0 + c0) / vv,
    )


def compose_reference(i_cm: ThreePhaseSample, i_cn: ThreePhaseSample,
                      subtract_residual: bool = False) -> ThreePhaseSample:
    """Total reference; the source then supplies I_L - I_Cref.

    ``subtract_residual=True`` gives I_Cm - I_Cn instead.
    """
    if subtract_residual:
        return ThreePhaseSample(i_cm[0] - i_cn[0], i_cm[1] - i_cn[1], i_cm[2] - i_cn[2])
    return ThreePhaseSample(i_cm[0] + i_cn[0], i_cm[1] + i_cn[1], i_cm[2] + i_cn[2])


def neutral_reference(i_neutral: float) -> float:
    return -i_neutral


UPPER_ON = 1
LOWER_ON = -1
BOTH_OFF = 0


def hysteresis_step(i_actual: float, i_ref: float, state: int, hb: float,
                    inverted_polarity: bool = False) -> int:
    """Three-level hysteresis comparator for one converter leg.

    Above the band the leg is forced to decrease its output current, below
    it to increase it, inside it the previous state is held. The physical
    mapping is decrease -> lower switch ON. With `inverted_polarity` the
    comparison is made on the current drawn by the converter (sign
    reversed), which turns an "above band -> upper ON" rule into
    the same physical behaviour.
    """
    if hb <= 0:
        raise ValueError("hysteresis band must be positive")
    if inverted_polarity:
        if -i_actual > -i_ref + hb:
            return UPPER_ON
        if -i_actual < -i_ref - hb:
            return LOWER_ON
        return state
    if i_actual > i_ref + hb:
        return LOWER_ON
    if i_actual < i_ref - hb:
        return UPPER_ON
    return state


@dataclass
class HysteresisState:
    hb: float
    legs: list[int] = field(default_factory=lambda: [BOTH_OFF, BOTH_OFF, BOTH_OFF])
    inverted_polarity: bool = False

    def update(self, i_actual, i_ref) -> list[int]:
        for k in range(len(self.legs)):
            self.legs[k] = hysteresis_step(i_actual[k], i_ref[k], self.legs[k],
                                           self.hb, self.inverted_polarity)
        return self.legs


@dataclass
class ControlOutput:
    reference: ThreePhaseSample
    neutral_reference: float
    i_n: ThreePhaseSample
    power: PowerSample


class Controller:
    """One control strategy instance with its own filter and EMD window state.

    Call :meth:`tick` once per simulation step with the measured line
    currents (load plus disturbance) and the PCC voltages.

    For the EMD strategy a trailing window of line currents is decomposed
    every `hop` samples. The fundamental part is periodic, so its value at
    sample n is read from the latest window one period earlier (same phase
    angle); the residual is whatever the measured current adds to it. A
    non-periodic burst therefore reaches I_n without delay.
    """

    def __init__(self, kind: StrategyKind, sample_rate: float, *,
                 nominal_voltage_sq: float,
                 emd: EmdConfig = EmdConfig(),
                 window: int = 1000, hop: int = 250, period: int = 1000,
                 cutoff: float = 8.0, fundamental_tolerance: float = 0.3,
                 subtract_residual: bool = False, force_zero_residual: bool = False):
        if hop < 1 or hop > window:
            raise ValueError("hop must be in [1, window]")
        self.kind = StrategyKind(kind)
        self.sample_rate = sample_rate
        self.emd = emd
        self.window, self.hop, self.period = window, hop, period
        self.tolerance = fundamental_tolerance
        self.subtract_residual = subtract_residual
        self.force_zero_residual = force_zero_residual
        self.floor = 0.01 * nominal_voltage_sq
        self.lowpass: LowPassState = lowpass_design(cutoff, sample_rate)
        self._buf = np.zeros((3, window))
        self._n = 0
        self._since = 0
        self._fundamental: np.ndarray | None = None
        self._last_icm = AlphaBeta0Sample(0.0, 0.0, 0.0)

    def _estimate_residual(self, i_l: ThreePhaseSample) -> ThreePhaseSample:
        if self.kind is StrategyKind.PLAIN_MODIFIED_PQ or self.force_zero_residual:
            return ThreePhaseSample(0.0, 0.0, 0.0)
        if self._fundamental is None:
            return ThreePhaseSample(0.0, 0.0, 0.0)
        # window holds samples [n_k - window + 1, n_k]; n = n_k + since + 1
        idx = self.window + self._since - self.period
        idx = min(max(idx, 0), self.window - 1)
        col = self._fundamental[:, idx]
        return ThreePhaseSample(i_l[0] - col[0], i_l[1] - col[1], i_l[2] - col[2])

    def _push(self, i_l: ThreePhaseSample) -> None:
        if self.kind is not StrategyKind.EMD_HYBRID or self.force_zero_residual:
            return
        self._buf[:, :-1] = self._buf[:, 1:]
        self._buf[:, -1] = i_l
        self._n += 1
        self._since += 1
        if self._n >= self.window and (self._fundamental is None or self._since >= self.hop):
            residual = residual_current(self._buf, self.sample_rate, self.emd, self.tolerance)
            self._fundamental = self._buf - residual
            self._since = 0

    def tick(self, v: ThreePhaseSample, i_l: ThreePhaseSample) -> ControlOutput:
        i_n = self._estimate_residual(i_l)
        self._push(i_l)
        i_m = ThreePhaseSample(i_l[0] - i_n[0], i_l[1] - i_n[1], i_l[2] - i_n[2])

        v_ab0 = abc_to_ab0(v)
        i_ab0 = abc_to_ab0(i_m)
        p = instantaneous_real_power(v_ab0, i_ab0)
        q = instantaneous_imaginary_power(v_ab0, i_ab0)
        p_bar = self.lowpass.step(p)
        p_tilde = p - p_bar
        try:
            i_cm_ab0 = compensating_current_m(v_ab0, p_tilde, q, self.floor)
            self._last_icm = i_cm_ab0
        except VoltageCollapse:
            i_cm_ab0 = self._last_icm
        i_cm = ab0_to_abc(i_cm_ab0)
        ref = compose_reference(i_cm, i_n, self.subtract_residual)
        load_neutral = -(i_l[0] + i_l[1] + i_l[2])
        return ControlOutput(
            reference=ref,
            neutral_reference=neutral_reference(load_neutral),
            i_n=i_n,
            power=PowerSample(p, p_bar, p_tilde, q),
        )
