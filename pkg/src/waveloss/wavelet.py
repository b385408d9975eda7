"""Multi-level separable discrete wavelet transform with Daubechies-2 filters.

The analysis path is built from differentiable grid nodes so wavelet
losses backpropagate; the inverse transform is plain numpy and exists to
verify perfect reconstruction. Signals are extended periodically, which
keeps the db2 bank orthonormal (Parseval holds exactly on even extents).
Odd extents get the last sample repeated before downsampling; the level
count still follows floor(log2(smallest transformed extent)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, log2_abs


@dataclass(frozen=True)
class FilterBank:
    lo: np.ndarray
    hi: np.ndarray


def daubechies2():
    """db2 analysis filters from the (1 +- sqrt 3)/(4 sqrt 2) construction."""
    r3 = np.sqrt(3.0)
    lo = np.array([1.0 + r3, 3.0 + r3, 3.0 - r3, 1.0 - r3]) / (4.0 * np.sqrt(2.0))
    # quadrature mirror: hi[n] = (-1)^n lo[K-1-n]
    hi = np.array([lo[3], -lo[2], lo[1], -lo[0]])
    return FilterBank(lo=lo, hi=hi)


_DB2 = daubechies2()


@dataclass
class WaveletPyramid:
    """Per-level high-frequency blocks plus the final low-pass residue.

    levels[i] maps a tuple of 'L'/'H' letters (one per transformed axis,
    at least one 'H') to the sub-band grid of level i; level 0 carries
    the highest frequencies.
    """
    levels: list
    residue: Grid
    dims: tuple
    level_count: int


def _analysis(x, filt, axis):
    """Filter + dyadic downsample along one spatial axis (periodic)."""
    a = x.data
    L = a.shape[axis]
    if L < 2:
        raise ValueError(f"extent {L} along axis {axis} too small for DWT")
    padded = L % 2 == 1
    if padded:
        last = np.take(a, [L - 1], axis=axis)
        a = np.concatenate([a, last], axis=axis)
    Lp = a.shape[axis]
    Lh = Lp // 2
    k = len(filt)
    idx = (2 * np.arange(Lh)[:, None] + np.arange(k)[None, :]) % Lp
    gathered = np.take(a, idx, axis=axis)  # axis expands to (Lh, k)
    y = np.tensordot(gathered, filt, axes=([axis + 1], [0]))

    def bwd(g):
        gm = np.moveaxis(g, axis, 0)  # (Lh, rest)
        contrib = gm[:, None] * filt.reshape((1, k) + (1,) * (gm.ndim - 1))
        gpad = np.zeros((Lp,) + gm.shape[1:])
        np.add.at(gpad, idx.reshape(-1), contrib.reshape((-1,) + gm.shape[1:]))
        if padded:
            gpad[L - 1] += gpad[L]
            gpad = gpad[:L]
        return (np.moveaxis(gpad, 0, axis),)

    return Grid._node(y, (x,), bwd, x.cell_size)


def _synthesis(lo_a, hi_a, axis, bank=_DB2):
    """Transpose of one periodic analysis step (even extents only)."""
    if lo_a.shape != hi_a.shape:
        raise ValueError(
            f"inconsistent sub-band shapes {lo_a.shape} vs {hi_a.shape}")
    Lh = lo_a.shape[axis]
    L = 2 * Lh
    k = len(bank.lo)
    idx = (2 * np.arange(Lh)[:, None] + np.arange(k)[None, :]) % L
    lom = np.moveaxis(lo_a, axis, 0)
    him = np.moveaxis(hi_a, axis, 0)
    wshape = (1, k) + (1,) * (lom.ndim - 1)
    contrib = (lom[:, None] * bank.lo.reshape(wshape)
               + him[:, None] * bank.hi.reshape(wshape))
    out = np.zeros((L,) + lom.shape[1:])
    np.add.at(out, idx.reshape(-1), contrib.reshape((-1,) + lom.shape[1:]))
    return np.moveaxis(out, 0, axis)


def dwt_level(x, dims, bank=_DB2):
    """One separable DWT level along the given axes.

    Returns (lf, hf) where hf maps letter tuples (by sorted axis order,
    at least one 'H') to sub-band grids.
    """
    dims = tuple(sorted(dims))
    if not dims:
        raise ValueError("dims must name at least one axis")
    for d in dims:
        if x.data.shape[d] < 2:
            raise ValueError(f"extent {x.data.shape[d]} along axis {d} "
                             "too small for DWT")
    blocks = {(): x}
    for axis in dims:
        nxt = {}
        for key, g in blocks.items():
            nxt[key + ("L",)] = _analysis(g, bank.lo, axis)
            nxt[key + ("H",)] = _analysis(g, bank.hi, axis)
        blocks = nxt
    lf = blocks.pop(("L",) * len(dims))
    return lf, blocks


def level_count(shape, dims):
    d = min(shape[a] for a in dims)
    return int(np.floor(np.log2(d)))


def dwt_multiscale(x, dims, bank=_DB2):
    """Hierarchical DWT, recursing on the low-pass path.

    The number of levels is floor(log2 d) with d the smallest transformed
    extent of the input.
    """
    dims = tuple(sorted(dims))
    n_levels = level_count(x.data.shape, dims)
    levels = []
    lf = x
    for _ in range(n_levels):
        lf, hf = dwt_level(lf, dims, bank)
        levels.append(hf)
    return WaveletPyramid(levels=levels, residue=lf, dims=dims,
                          level_count=n_levels)


def idwt_multiscale(p, bank=_DB2):
    """Reconstruct the original grid (numpy only, even extents per level)."""
    dims = p.dims
    lf = p.residue.data
    for hf in reversed(p.levels):
        blocks = {("L",) * len(dims): lf}
        blocks.update({k: g.data for k, g in hf.items()})
        for j in reversed(range(len(dims))):
            axis = dims[j]
            merged = {}
            for key in blocks:
                if key[j] != "L":
                    continue
                hkey = key[:j] + ("H",) + key[j + 1:]
                nkey = key[:j] + key[j + 1:]
                merged[nkey] = _synthesis(blocks[key], blocks[hkey], axis, bank)
            blocks = merged
        lf = blocks[()]
    first = p.levels[0] if p.levels else None
    cs = (next(iter(first.values())).cell_size if first
          else p.residue.cell_size)
    return Grid(lf, channels=lf.shape[-1], cell_size=cs)


def log_scale(p, eps):
    """log2(|c| + eps) on every high-frequency block; residue untouched."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    levels = [{k: log2_abs(g, eps) for k, g in hf.items()} for hf in p.levels]
    return WaveletPyramid(levels=levels, residue=p.residue, dims=p.dims,
                          level_count=p.level_count)
