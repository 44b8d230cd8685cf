"""Power-invariant Clarke transform between R-S-T and alpha-beta-0 coordinates."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

_K = math.sqrt(2.0 / 3.0)
_H = math.sqrt(3.0) / 2.0
_Z = 1.0 / math.sqrt(2.0)

# orthonormal, so the inverse is the transpose
CLARKE = _K * np.array([
    [1.0, -0.5, -0.5],
    [0.0, _H, -_H],
    [_Z, _Z, _Z],
])


class ThreePhaseSample(NamedTuple):
    r: float
    s: float
    t: float


class AlphaBeta0Sample(NamedTuple):
    alpha: float
    beta: float
    zero: float


def abc_to_ab0(x: ThreePhaseSample) -> AlphaBeta0Sample:
    r, s, t = x
    return AlphaBeta0Sample(
        _K * (r - 0.5 * s - 0.5 * t),
        _K * _H * (s - t),
        _K * _Z * (r + s + t),
    )


def ab0_to_abc(x: AlphaBeta0Sample) -> ThreePhaseSample:
    a, b, z = x
    zz = _Z * z
    return ThreePhaseSample(
        _K * (a + zz),
        _K * (-0.5 * a + _H * b + zz),
        _K * (-0.5 * a - _H * b + zz),
    )


def abc_to_ab0_array(x: np.ndarray) -> np.ndarray:
    """Vectorised transform of an (N, 3) array of phase values."""
    return np.asarray(x, dtype=float) @ CLARKE.T


def ab0_to_abc_array(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) @ CLARKE
