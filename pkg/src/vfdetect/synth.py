"""Synthetic ECG-like test signals.

None of this is physiological modeling; the generators only need to
produce the two shapes the detector separates: a rhythm dominated by a
few-Hz oscillation with no sharp complexes ("VF-like"), and a train of
narrow QRS-like spikes with slower P/T bumps ("QRS-like").
"""

from __future__ import annotations

import numpy as np

from .ingest import EcgEpisode, EcgRecord, RecordHeader, Rhythm, RhythmAnnotation, SignalSpec

__all__ = [
    "tone",
    "tone_mixture",
    "vf_like",
    "qrs_like",
    "make_corpus",
    "make_record",
]


def _t(n: int, fs: float) -> np.ndarray:
    return np.arange(n) / fs


def tone(n: int, fs: float, freq: float, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    return amplitude * np.sin(2 * np.pi * freq * _t(n, fs) + phase)


def tone_mixture(n: int, fs: float, freqs, amplitudes=None, phases=None) -> np.ndarray:
    amplitudes = np.ones(len(freqs)) if amplitudes is None else amplitudes
    phases = np.zeros(len(freqs)) if phases is None else phases
    return sum(tone(n, fs, f, a, p) for f, a, p in zip(freqs, amplitudes, phases))


def _wander(n, fs, rng, amp):
    return amp * np.sin(2 * np.pi * rng.uniform(0.05, 0.4) * _t(n, fs) + rng.uniform(0, 2 * np.pi))


def vf_like(n: int, fs: float, rng: np.random.Generator, noise: float = 0.05) -> np.ndarray:
    """A 3-7 Hz oscillation with drifting frequency and amplitude."""
    t = _t(n, fs)
    f0 = rng.uniform(3.0, 7.0)
    # slow frequency drift, integrated into the phase
    df = 0.6 * np.sin(2 * np.pi * rng.uniform(0.1, 0.4) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 + df) / fs + rng.uniform(0, 2 * np.pi)
    am = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 0.8) * t + rng.uniform(0, 2 * np.pi))
    x = rng.uniform(0.3, 1.0) * am * np.sin(phase)
    return x + _wander(n, fs, rng, 0.1) + noise * rng.standard_normal(n)


def qrs_like(n: int, fs: float, rng: np.random.Generator, noise: float = 0.05) -> np.ndarray:
    """Narrow biphasic spikes at 50-110 bpm with P and T waves."""
    t = _t(n, fs)
    rr = 60.0 / rng.uniform(50, 110)
    beats = np.arange(rng.uniform(0, rr), t[-1] + rr, rr)
    beats = beats + rng.normal(0, 0.02 * rr, beats.size)
    amp = rng.uniform(0.6, 1.5)
    width = rng.uniform(0.008, 0.014)
    x = np.zeros(n)
    for b in beats:
        d = t - b
        x += amp * np.exp(-0.5 * (d / width) ** 2)
        x -= 0.25 * amp * np.exp(-0.5 * ((d - 2.5 * width) / width) ** 2)
        x += 0.15 * amp * np.exp(-0.5 * ((d + 0.16) / 0.025) ** 2)
        x += 0.3 * amp * np.exp(-0.5 * ((d - 0.3) / 0.05) ** 2)
    return x + _wander(n, fs, rng, 0.1) + noise * rng.standard_normal(n)


def make_corpus(
    n_vf: int = 500,
    n_not_vf: int = 500,
    fs: float = 250.0,
    episode_length_s: float = 5.0,
    noise: float = 0.05,
    seed: int = 0,
) -> list[EcgEpisode]:
    """Interleaved VF-like and QRS-like episodes, deterministic per seed."""
    rng = np.random.default_rng(seed)
    n = int(round(episode_length_s * fs))
    kinds = [Rhythm.VF] * n_vf + [Rhythm.NOT_VF] * n_not_vf
    rng.shuffle(kinds)
    out = []
    for i, kind in enumerate(kinds):
        gen = vf_like if kind is Rhythm.VF else qrs_like
        out.append(
            EcgEpisode(
                samples=gen(n, fs, rng, noise),
                sampling_rate_hz=fs,
                episode_length_s=episode_length_s,
                label=kind,
                source=f"synth{seed}",
                start=i,
            )
        )
    return out


def make_record(
    segments, fs: float = 250.0, seed: int = 0, noise: float = 0.05, name: str = "synth"
) -> EcgRecord:
    """A one-channel record from ``(rhythm, seconds)`` segments.

    NOISE segments are white noise; each segment boundary gets a rhythm
    annotation.
    """
    rng = np.random.default_rng(seed)
    parts, annotations, pos = [], [], 0
    for rhythm, seconds in segments:
        n = int(round(seconds * fs))
        if rhythm is Rhythm.VF:
            parts.append(vf_like(n, fs, rng, noise))
        elif rhythm is Rhythm.NOT_VF:
            parts.append(qrs_like(n, fs, rng, noise))
        else:
            parts.append(0.5 * rng.standard_normal(n))
        annotations.append(RhythmAnnotation(pos, rhythm))
        pos += n
    x = np.concatenate(parts)
    header = RecordHeader(
        record_name=name,
        n_signals=1,
        sampling_rate_hz=fs,
        n_samples=len(x),
        signals=(SignalSpec(file_name=f"{name}.dat", storage_format=212),),
    )
    return EcgRecord(header=header, channels=[x], annotations=annotations)
