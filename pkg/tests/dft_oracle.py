"""Direct O(N^2) discrete Fourier transform used as a test oracle."""

import math

import numpy as np


def naive_dft(x):
    """Sum of x[n] exp(-2 pi i k n / N) term by term; k n is reduced mod N before scaling."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    kn = np.outer(np.arange(n), np.arange(n)) % n
    ang = -2.0 * np.pi * kn / n
    return np.array([complex(math.fsum(x * np.cos(a)), math.fsum(x * np.sin(a))) for a in ang])
