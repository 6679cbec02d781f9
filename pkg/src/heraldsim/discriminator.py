"""Amplitude-multiplexed pulse-height discrimination.

The summed output of the pixel array is modeled as a pulse height linear in
the number of simultaneously fired pixels plus additive Gaussian noise.  A
trigger window (two thresholds feeding a coincidence gate) accepts a pulse
when its height falls in [low, high).  Sweeping the thresholds over a
click-number-resolved source produces count-rate plateaus, one per occupied
click level, which is how the photon-number outputs are identified on the
real discriminator.

The per-click amplitudes and the noise floor of the physical device are not
published; they are free parameters here.  The default noise of 5% of the
unit amplitude is a modeling choice that yields clearly separated plateaus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector_model import DetectionMatrix
from .errors import ParameterError
from .photon_stats import as_distribution

#: Modeling default for the Gaussian pulse-height noise, as a fraction of
#: the single-click amplitude.
DEFAULT_NOISE_FRACTION = 0.05


@dataclass(frozen=True)
class AmplitudeModel:
    """Pulse height = baseline + clicks * unit_amplitude + Gaussian(0, noise_sigma)."""

    unit_amplitude: float
    noise_sigma: float
    baseline: float = 0.0

    def __post_init__(self):
        if not self.unit_amplitude > 0:
            raise ParameterError(f"unit_amplitude must be > 0, got {self.unit_amplitude!r}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")

    def level(self, clicks: int) -> float:
        return self.baseline + clicks * self.unit_amplitude


@dataclass(frozen=True)
class TriggerWindow:
    """Accepted pulse-height range [low_threshold, high_threshold)."""

    low_threshold: float
    high_threshold: float = math.inf

    def __post_init__(self):
        if not self.low_threshold < self.high_threshold:
            raise ParameterError("low_threshold must be below high_threshold")


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def trigger_probability(clicks: int, window: TriggerWindow, model: AmplitudeModel) -> float:
    """Probability that a pulse with the given click count fires the window."""
    if clicks < 0:
        raise ParameterError(f"clicks must be >= 0, got {clicks}")
    level = model.level(clicks)
    if model.noise_sigma == 0.0:
        return 1.0 if window.low_threshold <= level < window.high_threshold else 0.0
    upper = 1.0 if math.isinf(window.high_threshold) else _norm_cdf((window.high_threshold - level) / model.noise_sigma)
    lower = _norm_cdf((window.low_threshold - level) / model.noise_sigma)
    return upper - lower


def click_number_rates(source, det: DetectionMatrix) -> np.ndarray:
    """Per-pulse probability of each click outcome, Q(k) = sum_n P(n) p(n, k)."""
    src = as_distribution(source)
    if src.probs.size != det.entries.shape[0]:
        raise ParameterError("source cutoff must equal the detection matrix's incident dimension")
    return src.probs @ det.entries


def threshold_sweep(source, det: DetectionMatrix, model: AmplitudeModel, rep_rate: float, low_grid, high_grid) -> np.ndarray:
    """Count-rate surface over a grid of low and high thresholds.

    surface[l][h] = rep_rate * sum_k Q(k) * trigger_probability(k, [low_l, high_h)).

    The surface is monotone non-increasing in the low threshold and
    non-decreasing in the high threshold.
    """
    if rep_rate <= 0:
        raise ParameterError(f"rep_rate must be > 0, got {rep_rate!r}")
    low_grid = np.asarray(low_grid, dtype=float)
    high_grid = np.asarray(high_grid, dtype=float)
    if low_grid.ndim != 1 or high_grid.ndim != 1 or low_grid.size == 0 or high_grid.size == 0:
        raise ParameterError("threshold grids must be non-empty 1-D vectors")
    if np.any(np.diff(low_grid) < 0) or np.any(np.diff(high_grid) < 0):
        raise ParameterError("threshold grids must be monotone ascending")
    q = click_number_rates(source, det)
    surface = np.zeros((low_grid.size, high_grid.size))
    for k, qk in enumerate(q):
        if qk == 0.0:
            continue
        level = model.level(k)
        if model.noise_sigma == 0.0:
            below_high = (level < high_grid).astype(float)
            above_low = (low_grid <= level).astype(float)
        else:
            below_high = np.array(
                [1.0 if math.isinf(h) else _norm_cdf((h - level) / model.noise_sigma) for h in high_grid]
            )
            above_low = np.array([1.0 - _norm_cdf((lo - level) / model.noise_sigma) for lo in low_grid])
        # P(low <= height < high) = P(height >= low) - P(height >= high)
        surface += rep_rate * qk * (above_low[:, None] - (1.0 - below_high)[None, :])
    return np.clip(surface, 0.0, None)


def count_plateaus(rates: np.ndarray, rel_flatness: float = 1e-3, min_run: int = 3, level_floor_frac: float = 1e-6) -> int:
    """Number of flat plateaus in a 1-D threshold sweep.

    A plateau is a maximal run of at least ``min_run`` consecutive grid
    points whose step-to-step change is below ``rel_flatness`` of the sweep
    maximum and whose level stays above ``level_floor_frac`` of the maximum
    (so the empty region beyond the highest occupied amplitude does not
    count as a plateau).
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size < min_run:
        return 0
    scale = rates.max()
    if scale <= 0:
        return 0
    flat = np.abs(np.diff(rates)) < rel_flatness * scale
    plateaus = 0
    run = 0
    for i, is_flat in enumerate(flat):
        if is_flat and rates[i] > level_floor_frac * scale:
            run += 1
        else:
            if run >= min_run - 1:
                plateaus += 1
            run = 0
    if run >= min_run - 1:
        plateaus += 1
    return plateaus


def write_surface_csv(low_grid, high_grid, surface: np.ndarray, path):
    """Emit the count-rate surface as CSV rows (low, high, rate_hz)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("low,high,rate_hz\n")
        for i, lo in enumerate(low_grid):
            for j, hi in enumerate(high_grid):
                fh.write(f"{lo:.12g},{hi:.12g},{surface[i, j]:.12g}\n")
