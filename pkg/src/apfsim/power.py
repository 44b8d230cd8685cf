"""Instantaneous real/imaginary power and the low-pass split of p."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .transform import AlphaBeta0Sample


class InvalidCutoff(ValueError):
    pass


class PowerSample(NamedTuple):
    p: float
    p_bar: float
    p_tilde: float
    q: tuple[float, float, float]


def instantaneous_real_power(v: AlphaBeta0Sample, i: AlphaBeta0Sample) -> float:
    return i[0] * v[0] + i[1] * v[1] + i[2] * v[2]


def instantaneous_imaginary_power(v: AlphaBeta0Sample, i: AlphaBeta0Sample) -> tuple[float, float, float]:
    """Imaginary power vector q = v x i in (alpha, beta, 0) ordering."""
    va, vb, v0 = v
    ia, ib, i0 = i
    return (
        -v0 * ib + vb * i0,
        v0 * ia - va * i0,
        -vb * ia + va * ib,
    )


@dataclass
class LowPassState:
    """Direct-form II transposed biquad with unity leading denominator term."""
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float
    z1: float = 0.0
    z2: float = 0.0

    def step(self, x: float) -> float:
        y = self.b0 * x + self.z1
        self.z1 = self.b1 * x - self.a1 * y + self.z2
        self.z2 = self.b2 * x - self.a2 * y
        return y

    def reset(self) -> None:
        self.z1 = self.z2 = 0.0

    @property
    def ba(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.b0, self.b1, self.b2]),
                np.array([1.0, self.a1, self.a2]))


def lowpass_design(cutoff: float, sample_rate: float) -> LowPassState:
    """Second-order Butterworth low-pass, bilinear transform pre-warped at `cutoff`."""
    if not 0.0 < cutoff < sample_rate / 2.0:
        raise InvalidCutoff(f"cutoff {cutoff} Hz outside (0, {sample_rate / 2} Hz)")
    k = math.tan(math.pi * cutoff / sample_rate)
    k2 = k * k
    norm = 1.0 / (1.0 + math.sqrt(2.0) * k + k2)
    b0 = k2 * norm
    return LowPassState(
        b0=b0,
        b1=2.0 * b0,
        b2=b0,
        a1=2.0 * (k2 - 1.0) * norm,
        a2=(1.0 - math.sqrt(2.0) * k + k2) * norm,
    )


def lowpass_step(state: LowPassState, x: float) -> float:
    return state.step(x)


def split_power(p_stream, cutoff: float = 8.0, sample_rate: float = 50_000.0,
                state: LowPassState | None = None):
    """Yield ``(p_bar, p_tilde)`` for each sample of `p_stream`.

    ``p_bar + p_tilde == p`` holds exactly at every sample.
    """
    lp = state if state is not None else lowpass_design(cutoff, sample_rate)
    for p in p_stream:
        p_bar = lp.step(p)
        yield p_bar, p - p_bar
