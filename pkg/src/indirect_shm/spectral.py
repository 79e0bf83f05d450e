"""Radix-2 FFT and a periodized orthonormal discrete wavelet transform.

Both operate along the last axis and are vectorized over leading axes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

# Orthonormal reconstruction low-pass filters (sum = sqrt(2)).
WAVELETS = {
    "haar": np.array([1.0, 1.0]) / math.sqrt(2.0),
    "db2": np.array([
        0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037,
    ]),
    "db4": np.array([
        0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854,
        -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032,
    ]),
}


def next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1).bit_length())


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along the last axis.

    The length must be a power of two.  Twiddles are evaluated directly per
    stage rather than by recurrence, which keeps the error near machine
    precision for long transforms.
    """
    a = np.asarray(x, dtype=complex)
    n = a.shape[-1]
    if n == 0 or n & (n - 1):
        raise ShapeError(f"FFT length must be a power of two, got {n}")
    a = a[..., _bit_reverse(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*a.shape[:-1], n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return a


def rfft_magnitude(x, pad_to_pow2: bool = True) -> np.ndarray:
    """|DFT| of real rows, first ``N/2 + 1`` bins, zero-padding to a power of two."""
    a = np.asarray(x, dtype=float)
    n = a.shape[-1]
    m = next_pow2(n) if pad_to_pow2 else n
    if m != n:
        pad = [(0, 0)] * (a.ndim - 1) + [(0, m - n)]
        a = np.pad(a, pad)
    return np.abs(fft(a)[..., : m // 2 + 1])


def _filters(name: str):
    try:
        g = WAVELETS[name]
    except KeyError:
        raise ValueError(f"unknown wavelet {name!r}; choose from {sorted(WAVELETS)}") from None
    h = g[::-1] * (-1.0) ** np.arange(len(g))
    return g, h


def _analysis_step(x, g, h):
    n = x.shape[-1]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(g))[None, :]) % n
    windows = x[..., idx]
    return windows @ g, windows @ h


def _synthesis_step(a, d, g, h):
    half = a.shape[-1]
    n = 2 * half
    out = np.zeros(a.shape[:-1] + (n,))
    idx = (2 * np.arange(half)[:, None] + np.arange(len(g))[None, :]) % n
    contrib = a[..., :, None] * g + d[..., :, None] * h
    flat_idx = idx.ravel()
    flat = contrib.reshape(*contrib.shape[:-2], -1)
    out2 = out.reshape(-1, n)
    flat2 = flat.reshape(-1, flat_idx.size)
    rows = np.arange(out2.shape[0])[:, None]
    np.add.at(out2, (rows, flat_idx[None, :]), flat2)
    return out2.reshape(out.shape)


def dwt(x, wavelet: str = "db4", levels: int = 4) -> list[np.ndarray]:
    """Multilevel periodized DWT.

    Returns ``[a_J, d_J, d_{J-1}, ..., d_1]`` (coarsest first).  The
    transform is orthonormal, so coefficient energy equals signal energy.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if n % (2**levels):
        raise ShapeError(f"length {n} not divisible by 2**{levels}")
    g, h = _filters(wavelet)
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, g, h)
        details.append(d)
    return [a, *details[::-1]]


def idwt(coeffs, wavelet: str = "db4") -> np.ndarray:
    """Inverse of :func:`dwt`."""
    g, h = _filters(wavelet)
    a = np.asarray(coeffs[0], dtype=float)
    for d in coeffs[1:]:
        a = _synthesis_step(a, np.asarray(d, dtype=float), g, h)
    return a
