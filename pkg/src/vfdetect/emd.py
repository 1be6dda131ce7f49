"""Empirical mode decomposition and IMF selection by noise-level crossings.

Sifting uses natural cubic-spline envelopes through the local extrema,
with the two extrema nearest each edge mirrored across it, and stops on
the Cauchy-type standard-deviation criterion together with the
extrema/zero-crossing condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "EmdConfig",
    "ImfSet",
    "SelectedComponents",
    "MonotoneResidue",
    "count_extrema_zero_crossings",
    "local_extrema",
    "envelope_mean",
    "sift",
    "decompose",
    "noise_level_crossing_ratio",
    "select_components",
]

log = logging.getLogger(__name__)


class MonotoneResidue(Exception):
    """Raised by :func:`sift` when the input has too few extrema to sift."""


@dataclass(frozen=True)
class EmdConfig:
    alpha: float = 0.05
    beta: float = 0.02
    max_imfs: int = 2
    sift_sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    # noise level from max|x| instead of max(x)
    noise_level_abs: bool = False
    invert_nlcr_branch: bool = False

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.max_sift_iterations < 1:
            raise ValueError("max_sift_iterations must be >= 1")
        if self.max_imfs < 1:
            raise ValueError("max_imfs must be >= 1")


@dataclass
class ImfSet:
    imfs: list[np.ndarray]
    residue: np.ndarray
    source_length: int

    def imf(self, i: int) -> np.ndarray:
        """IMF number ``i`` (0-based), zeros when it was not extracted."""
        if i < len(self.imfs):
            return self.imfs[i]
        return np.zeros(self.source_length)

    def reconstruct(self) -> np.ndarray:
        return np.sum(self.imfs, axis=0) + self.residue if self.imfs else self.residue.copy()


@dataclass
class SelectedComponents:
    imf: np.ndarray
    residue: np.ndarray
    nlcr: float
    noise_level: float
    used_two_imfs: bool
    dropped: np.ndarray = field(repr=False, default=None)


def count_extrema_zero_crossings(x) -> tuple[int, int]:
    """Interior extrema and sign changes of ``x``.

    An extremum is a strict turn of the signal; a flat top or bottom
    counts once.  Zero samples take the sign of the next nonzero sample.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples to count extrema")
    imax, imin = local_extrema(x)
    n_max, n_min = imax.size, imin.size
    s = np.sign(x)
    s = s[s != 0]
    n_zc = int(np.count_nonzero(s[1:] != s[:-1])) if s.size else 0
    return int(n_max + n_min), n_zc


def local_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of local maxima and minima.

    A flat top or bottom counts once, at its middle sample.
    """
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return np.empty(0, int), np.empty(0, int)
    sd = np.sign(d[nz])
    turn = np.flatnonzero(sd[1:] != sd[:-1])
    # plateau between the last rise/fall and the next change
    left = nz[turn] + 1
    right = nz[turn + 1]
    pos = (left + right) // 2
    is_max = sd[turn] > 0
    return pos[is_max], pos[~is_max]


def _mirrored(idx: np.ndarray, x: np.ndarray, n: int, nbsym: int = 2):
    t = idx.astype(float)
    left = -t[:nbsym][::-1]
    right = 2.0 * (n - 1) - t[-nbsym:][::-1]
    tt = np.concatenate([left, t, right])
    vv = np.concatenate([x[idx[:nbsym]][::-1], x[idx], x[idx[-nbsym:]][::-1]])
    return tt, vv


def envelope_mean(x: np.ndarray) -> np.ndarray:
    """Mean of the upper and lower cubic-spline envelopes.

    Raises :class:`MonotoneResidue` when there are fewer than two maxima
    or two minima.
    """
    x = np.asarray(x, dtype=float)
    imax, imin = local_extrema(x)
    if imax.size < 2 or imin.size < 2:
        raise MonotoneResidue(f"{imax.size} maxima and {imin.size} minima")
    n = len(x)
    t = np.arange(n, dtype=float)
    upper = CubicSpline(*_mirrored(imax, x, n), bc_type="natural")(t)
    lower = CubicSpline(*_mirrored(imin, x, n), bc_type="natural")(t)
    return 0.5 * (upper + lower)


def sift(x, cfg: EmdConfig | None = None) -> np.ndarray:
    """Extract one IMF from ``x`` by repeated envelope-mean subtraction."""
    cfg = cfg or EmdConfig()
    h = np.asarray(x, dtype=float).copy()
    m = envelope_mean(h)  # lets MonotoneResidue reach the caller
    for _ in range(cfg.max_sift_iterations):
        denom = np.dot(h, h)
        # Cauchy criterion: the step h_{k-1} - h_k is the envelope mean
        sd = np.dot(m, m) / denom if denom > 0 else 0.0
        h = h - m
        n_ext, n_zc = count_extrema_zero_crossings(h)
        if sd < cfg.sift_sd_threshold and abs(n_ext - n_zc) <= 1:
            return h
        try:
            m = envelope_mean(h)
        except MonotoneResidue:
            break
    else:
        log.debug("sifting hit the %d-iteration cap", cfg.max_sift_iterations)
    return h


def decompose(x, cfg: EmdConfig | None = None) -> ImfSet:
    """Peel off up to ``cfg.max_imfs`` IMFs; the rest is the residue."""
    cfg = cfg or EmdConfig()
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples to decompose")
    imfs: list[np.ndarray] = []
    rest = x.copy()
    for _ in range(cfg.max_imfs):
        try:
            imf = sift(rest, cfg)
        except MonotoneResidue:
            break
        imfs.append(imf)
        rest = rest - imf
    residue = x - np.sum(imfs, axis=0) if imfs else x.copy()
    return ImfSet(imfs=imfs, residue=residue, source_length=len(x))


def noise_level_crossing_ratio(x, imf1, noise_level: float) -> float:
    """Energy ratio of ``imf1`` to ``x`` over samples with |imf1| <= noise level."""
    x = np.asarray(x, dtype=float)
    imf1 = np.asarray(imf1, dtype=float)
    band = np.abs(imf1) <= noise_level
    if not band.any():
        return float("inf")
    num = float(np.dot(imf1[band], imf1[band]))
    den = float(np.dot(x[band], x[band]))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def select_components(x, imfset: ImfSet, cfg: EmdConfig | None = None) -> SelectedComponents:
    """Choose IMF_1 or IMF_1 + IMF_2 from the noise-level crossing ratio.

    The residue is always ``x - IMF_1 - IMF_2``; when IMF_1 alone is
    selected, IMF_2 is dropped from both outputs.
    """
    cfg = cfg or EmdConfig()
    x = np.asarray(x, dtype=float)
    imf1, imf2 = imfset.imf(0), imfset.imf(1)
    peak = np.max(np.abs(x)) if cfg.noise_level_abs else np.max(x)
    v_n = cfg.alpha * float(peak)
    nlcr = noise_level_crossing_ratio(x, imf1, v_n)
    use_both = nlcr <= cfg.beta
    if cfg.invert_nlcr_branch:
        use_both = not use_both
    residue = x - imf1 - imf2
    if use_both:
        return SelectedComponents(imf1 + imf2, residue, nlcr, v_n, True, np.zeros_like(x))
    return SelectedComponents(imf1.copy(), residue, nlcr, v_n, False, imf2.copy())
