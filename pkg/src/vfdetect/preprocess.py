"""Four-step filter chain applied to every episode before decomposition.

mean removal -> moving average -> Butterworth high-pass (drift)
-> Butterworth low-pass.  Every stage is causal and length-preserving.
IIR stages are designed here as second-order sections and run with
:func:`scipy.signal.sosfilt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

__all__ = [
    "FilterChainConfig",
    "remove_mean",
    "moving_average",
    "butterworth_sos",
    "highpass_drift",
    "butterworth_lowpass",
    "preprocess_pipeline",
    "sos_poles",
]


@dataclass(frozen=True)
class FilterChainConfig:
    ma_order: int = 5
    hp_cutoff_hz: float = 1.0
    hp_order: int = 2
    lp_cutoff_hz: float = 20.0
    lp_order: int = 12

    def validate(self, fs: float) -> None:
        if self.ma_order < 1:
            raise ValueError("ma_order must be >= 1")
        if not 0 < self.hp_cutoff_hz < self.lp_cutoff_hz < fs / 2:
            raise ValueError(
                f"need 0 < hp_cutoff ({self.hp_cutoff_hz}) < lp_cutoff "
                f"({self.lp_cutoff_hz}) < fs/2 ({fs / 2})"
            )
        for name in ("hp_order", "lp_order"):
            order = getattr(self, name)
            if order < 2 or order % 2:
                raise ValueError(f"{name} must be even and >= 2, got {order}")


def remove_mean(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("cannot remove the mean of an empty signal")
    return x - x.mean()


def moving_average(x, order: int = 5) -> np.ndarray:
    """Causal boxcar of ``order`` taps, zero initial state."""
    if order < 1:
        raise ValueError(f"moving average order must be >= 1, got {order}")
    x = np.asarray(x, dtype=float)
    return np.convolve(x, np.full(order, 1.0 / order))[: len(x)]


def butterworth_sos(order: int, fc: float, fs: float, btype: str = "lowpass") -> np.ndarray:
    """Digital Butterworth filter as an ``(order/2, 6)`` SOS array.

    Analog prototype poles are mapped with the bilinear transform after
    pre-warping ``fc``; each conjugate pole pair becomes one biquad with
    its double zero at z = -1 (low-pass) or z = +1 (high-pass).  Sections
    are normalized to unit gain at DC or Nyquist respectively.
    """
    if order < 2 or order % 2:
        raise ValueError(f"order must be even and >= 2, got {order}")
    if not 0 < fc < fs / 2:
        raise ValueError(f"cutoff {fc} Hz must lie in (0, {fs / 2}) Hz")
    if btype not in ("lowpass", "highpass"):
        raise ValueError(f"unknown filter type {btype!r}")

    k2 = 2.0 * fs
    wc = k2 * np.tan(np.pi * fc / fs)
    sections = []
    # upper-half-plane poles of the analog prototype
    for k in range(order // 2):
        theta = np.pi * (2 * k + order + 1) / (2 * order)
        s = wc * np.exp(1j * theta)
        z = (k2 + s) / (k2 - s)
        a1, a2 = -2.0 * z.real, abs(z) ** 2
        if btype == "lowpass":
            g = (1.0 + a1 + a2) / 4.0
            b = [g, 2.0 * g, g]
        else:
            g = (1.0 - a1 + a2) / 4.0
            b = [g, -2.0 * g, g]
        sections.append(b + [1.0, a1, a2])
    sos = np.array(sections)
    poles = sos_poles(sos)
    if np.any(np.abs(poles) >= 1.0):
        raise RuntimeError("Butterworth design produced an unstable section")
    return sos


def sos_poles(sos: np.ndarray) -> np.ndarray:
    return np.concatenate([np.roots(row[3:]) for row in np.atleast_2d(sos)])


def highpass_drift(x, fc: float = 1.0, fs: float = 250.0, order: int = 2) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return sps.sosfilt(butterworth_sos(order, fc, fs, "highpass"), x)


def butterworth_lowpass(x, fc: float = 20.0, fs: float = 250.0, order: int = 12) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return sps.sosfilt(butterworth_sos(order, fc, fs, "lowpass"), x)


def preprocess_pipeline(
    x, cfg: FilterChainConfig | None = None, *, fs: float | None = None
) -> np.ndarray:
    """Run the whole chain on an :class:`EcgEpisode` or on raw samples.

    Raw samples need ``fs``; an episode carries its own rate.
    """
    cfg = cfg or FilterChainConfig()
    if hasattr(x, "samples"):
        fs = x.sampling_rate_hz
        x = x.samples
    if fs is None:
        raise ValueError("fs is required when filtering raw samples")
    cfg.validate(fs)
    y = remove_mean(x)
    y = moving_average(y, cfg.ma_order)
    y = highpass_drift(y, cfg.hp_cutoff_hz, fs, cfg.hp_order)
    return butterworth_lowpass(y, cfg.lp_cutoff_hz, fs, cfg.lp_order)
