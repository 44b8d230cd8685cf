"""Empirical mode decomposition by envelope sifting.

Signals are plain 1-D float arrays. Boundary effects are handled by even
mirror extension before every sift; the extension is trimmed afterwards so
every returned array has the length of its input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

# relative floor for the SD denominator, as a fraction of max(h_prev**2)
SD_GUARD = 1e-12


class EmdError(ValueError):
    pass


class TooFewKnots(EmdError):
    """Not enough extrema to build an envelope."""


class NotSiftable(EmdError):
    """The very first sift of a signal failed."""


class ExtensionTooLong(EmdError):
    pass


@dataclass(frozen=True)
class EmdConfig:
    sd_threshold: float = 0.25
    max_sift_iterations: int = 50
    max_imfs: int = 10
    # samples; None means one period of `fundamental` at the signal's sample rate
    boundary_extension: int | None = None
    fundamental: float = 50.0

    def __post_init__(self):
        if not self.sd_threshold > 0:
            raise ValueError("sd_threshold must be positive")
        if self.max_sift_iterations < 1 or self.max_imfs < 0:
            raise ValueError("iteration caps must be positive")
        if self.boundary_extension is not None and self.boundary_extension < 0:
            raise ValueError("boundary_extension must be >= 0")

    def extension_for(self, n_samples: int, sample_rate: float) -> int:
        if self.boundary_extension is not None:
            n = self.boundary_extension
        else:
            n = int(round(sample_rate / self.fundamental))
        return max(0, min(n, n_samples - 1))


@dataclass
class ImfSet:
    imfs: list[np.ndarray]
    residue: np.ndarray
    sift_counts: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        total = self.residue.copy()
        for imf in self.imfs:
            total = total + imf
        return total


def find_extrema(s) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    A flat run counts as one extremum located at its first sample, and only
    when the signal moves the same way on both sides of the run (a shelf is
    not an extremum). Endpoints are never extrema.
    """
    s = np.asarray(s, dtype=float)
    if s.size < 3:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(s) != 0) + 1))
    if starts.size < 3:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    step = np.sign(np.diff(s[starts]))
    rising_in, falling_out = step[:-1] > 0, step[1:] < 0
    maxima = starts[1:-1][rising_in & falling_out]
    minima = starts[1:-1][~rising_in & ~falling_out]
    return maxima, minima


def count_zero_crossings(s) -> int:
    s = np.asarray(s, dtype=float)
    nz = s[s != 0.0]
    if nz.size < 2:
        return 0
    return int(np.count_nonzero(np.signbit(nz[1:]) != np.signbit(nz[:-1])))


def mirror_extend(s, n: int) -> np.ndarray:
    """Even reflection of `s` about both endpoints, `n` samples on each side."""
    s = np.asarray(s, dtype=float)
    if n < 0 or n >= s.size:
        raise ExtensionTooLong(f"extension {n} must be in [0, {s.size - 1}]")
    if n == 0:
        return s.copy()
    return np.pad(s, n, mode="reflect")


def spline_envelope(knot_indices, s) -> np.ndarray:
    """Natural cubic spline through ``s[knot_indices]``, sampled at every index."""
    s = np.asarray(s, dtype=float)
    knots = np.asarray(knot_indices, dtype=int)
    if knots.size < 2:
        raise TooFewKnots(f"need at least 2 knots, got {knots.size}")
    spline = CubicSpline(knots, s[knots], bc_type="natural")
    return spline(np.arange(s.size, dtype=float))


def sd_criterion(h_prev, h_cur) -> float:
    h_prev = np.asarray(h_prev, dtype=float)
    h_cur = np.asarray(h_cur, dtype=float)
    if h_prev.shape != h_cur.shape:
        raise ValueError("h_prev and h_cur differ in length")
    denom = h_prev * h_prev
    peak = denom.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    keep = denom >= SD_GUARD * peak
    diff = h_prev[keep] - h_cur[keep]
    return float(np.sum(diff * diff / denom[keep]))


def envelope_mean(s, extension: int) -> np.ndarray:
    """Mean of upper and lower envelopes of `s`, computed on the mirrored signal.

    Knots falling exactly on a reflection axis are discarded: even
    reflection turns any endpoint with non-zero slope into a false extremum.
    """
    s = np.asarray(s, dtype=float)
    ext = mirror_extend(s, extension)
    maxima, minima = find_extrema(ext)
    if extension > 0:
        # the reflection axes are artefacts of the extension, not extrema
        axes = (extension, extension + s.size - 1)
        maxima = maxima[(maxima != axes[0]) & (maxima != axes[1])]
        minima = minima[(minima != axes[0]) & (minima != axes[1])]
    if maxima.size < 2 or minima.size < 2:
        raise TooFewKnots(
            f"{maxima.size} maxima / {minima.size} minima after extension")
    upper = spline_envelope(maxima, ext)
    lower = spline_envelope(minima, ext)
    mean = 0.5 * (upper + lower)
    return mean[extension:extension + s.size]


def sift_once(s, extension: int = 0) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s - envelope_mean(s, extension)


def is_imf(h) -> bool:
    """Extrema and zero-crossing counts differ by at most one."""
    maxima, minima = find_extrema(h)
    n_ext = maxima.size + minima.size
    return abs(count_zero_crossings(h) - n_ext) <= 1


def extract_imf(s, cfg: EmdConfig = EmdConfig(), extension: int = 0) -> tuple[np.ndarray, int]:
    """Sift `s` until it qualifies as an IMF.

    Stops once the SD between consecutive sifts drops below
    ``cfg.sd_threshold`` and the candidate satisfies the extrema/zero-crossing
    condition, or when ``cfg.max_sift_iterations`` is reached. If a later sift
    runs out of knots the last valid candidate is returned.
    """
    try:
        h = sift_once(s, extension)
    except TooFewKnots as exc:
        raise NotSiftable(str(exc)) from exc
    iterations = 1
    h_prev = np.asarray(s, dtype=float)
    while True:
        if sd_criterion(h_prev, h) < cfg.sd_threshold and is_imf(h):
            break
        if iterations >= cfg.max_sift_iterations:
            break
        try:
            h_next = sift_once(h, extension)
        except TooFewKnots:
            break
        h_prev, h = h, h_next
        iterations += 1
    return h, iterations


def _n_extrema(x) -> int:
    maxima, minima = find_extrema(x)
    return maxima.size + minima.size


def decompose(s, cfg: EmdConfig = EmdConfig(), sample_rate: float | None = None) -> ImfSet:
    """Full EMD of `s`.

    Extraction stops when the residue has fewer than two maxima or two
    minima, when ``cfg.max_imfs`` is reached, or when a candidate IMF would
    not reduce the residue's extremum count. With a `sample_rate` it also
    stops once the residue oscillates slower than half of
    ``cfg.fundamental``: a one-period mirror cannot resolve such modes and
    sifting them only produces boundary artefacts. The result reconstructs the
    input exactly up to rounding.
    """
    x = np.asarray(s, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("decompose needs a 1-D signal of at least 4 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    if sample_rate is None:
        extension = cfg.boundary_extension if cfg.boundary_extension is not None else x.size // 4
        extension = min(extension, x.size - 1)
    else:
        extension = cfg.extension_for(x.size, sample_rate)

    imfs: list[np.ndarray] = []
    counts: list[int] = []
    residue = x.copy()
    n_ext = _n_extrema(residue)
    while len(imfs) < cfg.max_imfs:
        maxima, minima = find_extrema(residue)
        if maxima.size < 2 or minima.size < 2:
            break
        if sample_rate is not None and n_ext * sample_rate / (2.0 * x.size) < 0.5 * cfg.fundamental:
            break
        try:
            imf, iterations = extract_imf(residue, cfg, extension)
        except NotSiftable:
            break
        next_residue = residue - imf
        next_ext = _n_extrema(next_residue)
        if next_ext >= n_ext:
            break
        imfs.append(imf)
        counts.append(iterations)
        residue, n_ext = next_residue, next_ext
    return ImfSet(imfs=imfs, residue=residue, sift_counts=counts)


def zero_crossing_rate(s, sample_rate: float) -> float:
    """Dominant frequency estimate in Hz: sign changes / (2 * duration)."""
    s = np.asarray(s, dtype=float)
    if s.size < 2:
        raise ValueError("need at least 2 samples")
    duration = s.size / sample_rate
    return count_zero_crossings(s) / (2.0 * duration)
