"""What the 2N features are, and why they sum to a cosine similarity.

Run:  python3 demos/spectral_features.py
"""

import numpy as np

from vfdetect.spectral import cosine_similarity, dft, frequency_similarity

rng = np.random.default_rng(1)
n = 16
x = rng.standard_normal(n)
imf = 0.7 * x + 0.3 * rng.standard_normal(n)

X, C = dft(x), dft(imf)
f = frequency_similarity(X, C)
print("per-bin similarity Re(X_k conj(C_k)) / (|X| |C|):")
print(np.round(f, 4))

# Real signals have conjugate-symmetric spectra, so bins k and n-k carry the same value.
print("\nsymmetric:", np.allclose(f[1:], f[1:][::-1]))

# Parseval: summing over all bins gives back the time-domain cosine.
print("sum of features      ", f.sum())
print("time-domain cosine   ", cosine_similarity(x, imf))
