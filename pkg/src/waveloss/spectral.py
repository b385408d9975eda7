"""Fourier analysis for the RFFT baseline loss and spectrum evaluation.

The FFT is an iterative radix-2 with a Bluestein fallback for arbitrary
lengths; evaluation signals are short, so clarity wins over speed.
Frequencies are reported in cycles per domain (bin k = k cycles over the
signal extent).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid

LOG_FLOOR = 2.0 ** -16


@dataclass
class Spectrum:
    amplitudes: np.ndarray  # one-sided, DC first, length n//2 + 1
    bin_width: float        # cycles per domain per bin / sample spacing


@dataclass
class HeightField:
    heights: np.ndarray
    sample_spacing: float = 1.0


def _fft_pow2(a):
    n = a.shape[-1]
    levels = n.bit_length() - 1
    # bit-reversal permutation
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = rev[i >> 1] >> 1 | ((i & 1) << (levels - 1))
    a = a[..., rev]
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * w
        a = np.concatenate([even + odd, even - odd], axis=-1)
        a = a.reshape(a.shape[:-2] + (n,))
        size *= 2
    return a


def _fft_bluestein(a):
    n = a.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    j = np.arange(n)
    chirp = np.exp(-1j * np.pi * j * j / n)
    x = np.zeros(a.shape[:-1] + (m,), dtype=complex)
    x[..., :n] = a * chirp
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[-(n - 1):] = np.conj(chirp)[1:][::-1]
    conv = _ifft_pow2(_fft_pow2(x) * _fft_pow2(b))
    return conv[..., :n] * chirp


def _ifft_pow2(a):
    return np.conj(_fft_pow2(np.conj(a))) / a.shape[-1]


def fft(a):
    """DFT along the last axis."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if n == 0:
        raise ValueError("empty input")
    if n & (n - 1) == 0:
        return _fft_pow2(a)
    return _fft_bluestein(a)


def ifft(a):
    a = np.asarray(a, dtype=complex)
    return np.conj(fft(np.conj(a))) / a.shape[-1]


def rfft(a):
    """One-sided DFT of a real signal along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[-1]
    return fft(a)[..., :n // 2 + 1]


def rfft_amplitude(signal, sample_spacing=1.0):
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 2:
        raise ValueError("signal must be 1D with length >= 2")
    amps = np.abs(rfft(signal))
    return Spectrum(amplitudes=amps,
                    bin_width=1.0 / (signal.size * sample_spacing))


def log_amplitude(spec, floor=LOG_FLOOR):
    return np.log2(spec.amplitudes + floor)


def surface_heights(sdf):
    """Sub-cell zero crossings of a 2D SDF, one height per column.

    Picks, per column, the sign change closest to the interface (smallest
    |SDF|) and interpolates linearly. Columns without a crossing copy the
    nearest column that has one.
    """
    if isinstance(sdf, Grid):
        a = sdf.data[..., 0]
        spacing = sdf.cell_size
    else:
        a = np.asarray(sdf, dtype=np.float64)
        spacing = 1.0
    if a.ndim != 2:
        raise ValueError(f"expected a 2D SDF, got shape {a.shape}")
    ncols = a.shape[0]
    heights = np.full(ncols, np.nan)
    for x in range(ncols):
        col = a[x]
        s0, s1 = col[:-1], col[1:]
        cross = np.nonzero(s0 * s1 <= 0.0)[0]
        cross = cross[(s0[cross] != 0.0) | (s1[cross] != 0.0)]
        if cross.size == 0:
            continue
        prox = np.minimum(np.abs(s0[cross]), np.abs(s1[cross]))
        y = cross[np.argmin(prox)]
        heights[x] = y + col[y] / (col[y] - col[y + 1])
    valid = np.nonzero(np.isfinite(heights))[0]
    if valid.size == 0:
        raise ValueError("no surface: SDF has no sign change")
    if valid.size < ncols:
        missing = np.nonzero(~np.isfinite(heights))[0]
        nearest = valid[np.argmin(np.abs(missing[:, None] - valid[None, :]),
                                  axis=1)]
        heights[missing] = heights[nearest]
    return HeightField(heights=heights, sample_spacing=spacing)


def dataset_spectrum(seqs, domain):
    """Average surface spectrum of a set of sequences.

    spatial: mean over all frames of the per-frame height spectrum.
    temporal: mean over columns (and sequences) of each column's height
    time-series spectrum. Averaging happens in amplitude.
    """
    if domain not in ("spatial", "temporal"):
        raise ValueError(f"unknown domain {domain!r}")
    seqs = list(seqs)
    if not seqs:
        raise ValueError("empty sequence list")
    acc = None
    count = 0
    bw = None
    skipped = 0
    for seq in seqs:
        hs = []
        for f in seq.frames:
            try:
                hs.append(surface_heights(f.sdf))
            except ValueError:
                skipped += 1
        if not hs:
            continue
        if domain == "temporal" and len(hs) < len(seq.frames):
            # a broken time series would misalign the temporal bins
            skipped += len(hs)
            continue
        if domain == "spatial":
            for h in hs:
                spec = rfft_amplitude(h.heights, h.sample_spacing)
                acc = spec.amplitudes if acc is None else acc + spec.amplitudes
                bw = spec.bin_width
                count += 1
        else:
            series = np.stack([h.heights for h in hs], axis=-1)  # (cols, T)
            amps = np.abs(rfft(series))
            acc = amps.sum(axis=0) if acc is None else acc + amps.sum(axis=0)
            bw = 1.0 / series.shape[-1]
            count += series.shape[0]
    if skipped:
        warnings.warn(f"{skipped} frames without a surface were skipped")
    if acc is None:
        raise ValueError("no surface: SDF has no sign change")
    return Spectrum(amplitudes=acc / count, bin_width=bw)
