"""Loss functions: plain MAE, spatial/temporal wavelet losses, RFFT baseline.

All losses return scalar grid nodes and backpropagate through the whole
pipeline. Reductions are means (not sums) so the weights keep their
meaning across grid sizes; both wavelet terms are normalized by the
frame count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .grid import Grid, absolute, mean_all, stack_frames, sum_all
from .wavelet import dwt_multiscale, log_scale

DEFAULT_EPS = 2.0 ** -8


@dataclass
class LossWeights:
    alpha: float = 100.0
    beta: float = 10.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


def _as_frames(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def mae_loss(y, y_hat):
    """Mean absolute difference over all cells and frames."""
    ys, yh = _as_frames(y), _as_frames(y_hat)
    if len(ys) != len(yh):
        raise ValueError(f"frame count mismatch {len(ys)} vs {len(yh)}")
    acc = None
    for a, b in zip(ys, yh):
        term = mean_all(absolute(a - b))
        acc = term if acc is None else acc + term
    return acc * (1.0 / len(ys))


def _pyramid_l1(p1, p2):
    """Mean |difference| over every high-frequency coefficient."""
    total = 0
    acc = None
    for hf1, hf2 in zip(p1.levels, p2.levels):
        for key, g1 in hf1.items():
            d = sum_all(absolute(g1 - hf2[key]))
            total += g1.data.size
            acc = d if acc is None else acc + d
    return acc * (1.0 / total)


def wavelet_spatial_loss(y_seq, y_hat_seq, eps=DEFAULT_EPS):
    """Per-frame multiscale spatial DWT, log-scaled, L1 over hf bands."""
    ys, yh = _as_frames(y_seq), _as_frames(y_hat_seq)
    if len(ys) != len(yh):
        raise ValueError(f"frame count mismatch {len(ys)} vs {len(yh)}")
    dims = tuple(range(ys[0].spatial_ndim))
    acc = None
    for a, b in zip(ys, yh):
        pa = log_scale(dwt_multiscale(a, dims), eps)
        pb = log_scale(dwt_multiscale(b, dims), eps)
        term = _pyramid_l1(pa, pb)
        acc = term if acc is None else acc + term
    return acc * (1.0 / len(ys))


def wavelet_temporal_loss(y_seq, y_hat_seq, eps=DEFAULT_EPS):
    """Multiscale DWT along time per cell, log-scaled, L1 over hf bands."""
    ys, yh = _as_frames(y_seq), _as_frames(y_hat_seq)
    if len(ys) != len(yh):
        raise ValueError(f"frame count mismatch {len(ys)} vs {len(yh)}")
    if len(ys) < 2:
        raise ValueError("temporal loss needs at least 2 frames")
    pa = log_scale(dwt_multiscale(stack_frames(ys), dims=(0,)), eps)
    pb = log_scale(dwt_multiscale(stack_frames(yh), dims=(0,)), eps)
    return _pyramid_l1(pa, pb)


def _rfft_sq(d):
    """Mean squared RFFT coefficient difference along each spatial axis.

    d is the difference grid; real and imaginary parts count as separate
    coefficients.
    """
    a = d.data
    D = d.spatial_ndim
    total = 0.0
    count = 0
    specs = []
    for axis in range(D):
        m = np.moveaxis(a, axis, -1)
        s = spectral.rfft(m)
        specs.append((axis, s, m.shape[-1]))
        total += np.sum(s.real ** 2 + s.imag ** 2)
        count += 2 * s.size
    value = total / count

    def bwd(g):
        gd = np.zeros(a.shape)
        for axis, s, n in specs:
            # d/dx_j sum_k |S_k|^2 = 2 Re sum_k S_k e^{2 pi i k j / n}
            pad = np.zeros(s.shape[:-1] + (n,), dtype=complex)
            pad[..., :s.shape[-1]] = s
            contrib = 2.0 * n * np.real(spectral.ifft(pad))
            gd += np.moveaxis(contrib, -1, axis)
        return (gd * (g.reshape(()) / count),)

    return Grid._node(np.full((1, 1), value), (d,), bwd)


def rfft_loss(y_seq, y_hat_seq):
    """L2 distance in Fourier space, per frame, along each spatial axis."""
    ys, yh = _as_frames(y_seq), _as_frames(y_hat_seq)
    if len(ys) != len(yh):
        raise ValueError(f"frame count mismatch {len(ys)} vs {len(yh)}")
    acc = None
    for a, b in zip(ys, yh):
        term = _rfft_sq(a - b)
        acc = term if acc is None else acc + term
    return acc * (1.0 / len(ys))


def total_loss(y_seq, y_hat_seq, w):
    """MAE plus weighted spatial and temporal wavelet terms."""
    loss = mae_loss(y_seq, y_hat_seq)
    if w.alpha > 0.0:
        loss = loss + w.alpha * wavelet_spatial_loss(y_seq, y_hat_seq, w.eps)
    if w.beta > 0.0:
        loss = loss + w.beta * wavelet_temporal_loss(y_seq, y_hat_seq, w.eps)
    return loss
