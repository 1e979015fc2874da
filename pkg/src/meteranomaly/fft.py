"""Arbitrary-length discrete Fourier transform.

``dft`` computes ``X[k] = sum_n x[n] exp(-2j*pi*k*n/N)`` along the last axis.
Composite lengths are split recursively on their smallest prime factor
(decimation in time, vectorised over every leading axis). Prime lengths up
to ``DIRECT_MAX_PRIME`` use a cached DFT matrix; larger primes go through
Bluestein's chirp transform, which turns the DFT into a power-of-two
circular convolution.

All twiddle angles are reduced modulo the transform length before calling
``exp`` so the phase error does not grow with ``k*n``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

DIRECT_MAX_PRIME = 31


@lru_cache(maxsize=None)
def smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


def prime_factors(n: int) -> list[int]:
    out = []
    while n > 1:
        p = smallest_prime_factor(n)
        out.append(p)
        n //= p
    return out


def _unit_roots(exponents: np.ndarray, n: int) -> np.ndarray:
    """``exp(-2j*pi*e/n)`` for integer exponents ``e``."""
    return np.exp(-2j * np.pi * (np.mod(exponents, n) / n))


@lru_cache(maxsize=64)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.int64)
    m = _unit_roots(np.outer(k, k), n)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def _twiddles(n: int, r: int) -> np.ndarray:
    m = n // r
    t = _unit_roots(np.outer(np.arange(r, dtype=np.int64), np.arange(m, dtype=np.int64)), n)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=32)
def _bluestein_plan(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Chirp ``w[j] = exp(-1j*pi*j^2/n)`` and the transformed conjugate-chirp kernel."""
    size = 1 << (2 * n - 2).bit_length()
    j = np.arange(n, dtype=np.int64)
    chirp = np.exp(-1j * np.pi * (np.mod(j * j, 2 * n) / n))
    kernel = np.zeros(size, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[size - n + 1 :] = np.conj(chirp[1:])[::-1]
    kernel_hat = _fft(kernel)
    chirp.setflags(write=False)
    kernel_hat.setflags(write=False)
    return chirp, kernel_hat, size


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, kernel_hat, size = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _ifft_unscaled(_fft(a) * kernel_hat) / size
    return conv[..., :n] * chirp


def _fft(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    r = smallest_prime_factor(n)
    if r == n:
        if n <= DIRECT_MAX_PRIME:
            return x @ _dft_matrix(n)
        return _bluestein(x)
    m = n // r
    lead = x.shape[:-1]
    # sub[..., s, j] = x[..., j*r + s]
    sub = np.ascontiguousarray(np.swapaxes(x.reshape(lead + (m, r)), -1, -2))
    y = _fft(sub) * _twiddles(n, r)
    if r == 2:
        z = np.stack((y[..., 0, :] + y[..., 1, :], y[..., 0, :] - y[..., 1, :]), axis=-2)
    else:
        z = _dft_matrix(r) @ y
    # X[q*m + k] = z[..., q, k]
    return z.reshape(lead + (n,))


def _ifft_unscaled(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft(np.conj(x)))


def dft(x) -> np.ndarray:
    """Forward DFT along the last axis for any length >= 1."""
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ValueError("dft needs at least one sample")
    return _fft(a)


def idft(x) -> np.ndarray:
    """Inverse DFT along the last axis, scaled by ``1/N``."""
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ValueError("idft needs at least one bin")
    return _ifft_unscaled(a) / a.shape[-1]

