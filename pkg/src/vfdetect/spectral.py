"""DFT and the frequency-domain similarity features.

For a signal ``s`` and a component ``c`` (the selected IMF or the
residue), feature ``i`` is::

    Re(S[i] * conj(C[i])) / (||S|| * ||C||)

with ``S``, ``C`` their DFTs.  By Parseval the features of one block sum
to the time-domain cosine similarity of ``s`` and ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DftCoefficients",
    "FeatureVector",
    "dft",
    "cosine_similarity",
    "frequency_similarity",
    "frequency_similarity_features",
]


def _norm(v: np.ndarray) -> float:
    """Euclidean norm that survives very small and very large entries."""
    m = float(np.max(np.abs(v), initial=0.0))
    if m == 0.0 or not np.isfinite(m):
        return m
    return m * float(np.linalg.norm(v / m))


@dataclass(frozen=True)
class DftCoefficients:
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return _norm(self.values)


@dataclass(frozen=True)
class FeatureVector:
    imf_similarity: np.ndarray
    r_similarity: np.ndarray

    def concat(self) -> np.ndarray:
        """IMF block first, then the residue block (length 2N)."""
        return np.concatenate([self.imf_similarity, self.r_similarity])


def dft(x) -> DftCoefficients:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft needs a non-empty 1-D signal")
    return DftCoefficients(np.fft.fft(x))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``; 0 if either is all zeros."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = _norm(a), _norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


def frequency_similarity(signal_dft: DftCoefficients, comp_dft: DftCoefficients) -> np.ndarray:
    if signal_dft.n != comp_dft.n:
        raise ValueError(f"DFT length mismatch: {signal_dft.n} vs {comp_dft.n}")
    ns, nc = signal_dft.norm(), comp_dft.norm()
    if ns == 0.0 or nc == 0.0:
        return np.zeros(signal_dft.n)
    # normalize before multiplying so tiny spectra do not underflow
    return (signal_dft.values / ns * np.conj(comp_dft.values / nc)).real


def frequency_similarity_features(
    signal_dft: DftCoefficients, imf_dft: DftCoefficients, r_dft: DftCoefficients
) -> FeatureVector:
    return FeatureVector(
        imf_similarity=frequency_similarity(signal_dft, imf_dft),
        r_similarity=frequency_similarity(signal_dft, r_dft),
    )
