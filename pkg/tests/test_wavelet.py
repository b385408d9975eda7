import numpy as np
import pytest

from waveloss.grid import Grid, absolute, mean_all
from waveloss.wavelet import (WaveletPyramid, daubechies2, dwt_level,
                              dwt_multiscale, idwt_multiscale, level_count,
                              log_scale)

from util import chirp_rank_correlation, fd_check, random_grid


def test_filter_bank_identities():
    bank = daubechies2()
    assert abs(np.sum(bank.lo) - np.sqrt(2.0)) < 1e-12
    assert abs(np.sum(bank.hi)) < 1e-12
    assert abs(np.linalg.norm(bank.lo) - 1.0) < 1e-12
    assert abs(np.linalg.norm(bank.hi) - 1.0) < 1e-12
    # second vanishing moment
    assert abs(np.sum(np.arange(4) * bank.hi)) < 1e-12
    # the two filters are orthogonal
    assert abs(np.dot(bank.lo, bank.hi)) < 1e-12


def test_constant_signal():
    c = 1.7
    x = Grid(np.full(16, c))
    lf, hf = dwt_level(x, dims=(0,))
    assert np.allclose(next(iter(hf.values())).data, 0.0, atol=1e-12)
    assert np.allclose(lf.data, c * np.sqrt(2.0), atol=1e-12)
    p = dwt_multiscale(x, dims=(0,))
    assert p.level_count == 4
    # each level multiplies the low-pass constant by sqrt(2)
    assert np.allclose(p.residue.data, c * 2.0 ** 2, atol=1e-12)
    for hf in p.levels:
        for g in hf.values():
            assert np.allclose(g.data, 0.0, atol=1e-12)


def test_linear_ramp_interior_hf_zero():
    # two vanishing moments annihilate linears away from the periodic wrap
    x = Grid(np.arange(16, dtype=float))
    _, hf = dwt_level(x, dims=(0,))
    band = next(iter(hf.values())).data.ravel()
    # output m touches samples 2m..2m+3; m <= 6 stays clear of the wrap
    assert np.allclose(band[:7], 0.0, atol=1e-10)
    assert abs(band[7]) > 1.0  # the wrap itself is a jump


@pytest.mark.parametrize("shape,dims", [((16,), (0,)), ((16, 8), (0, 1)),
                                        ((8, 8, 8), (0, 1, 2))])
def test_parseval_single_level(shape, dims):
    rng = np.random.default_rng(10)
    x = Grid(rng.standard_normal(shape + (1,)), channels=1)
    lf, hf = dwt_level(x, dims=dims)
    energy = np.sum(lf.data ** 2) + sum(np.sum(g.data ** 2)
                                        for g in hf.values())
    assert abs(energy - np.sum(x.data ** 2)) < 1e-10


def test_parseval_multiscale():
    rng = np.random.default_rng(11)
    x = Grid(rng.standard_normal((32, 32, 1)), channels=1)
    p = dwt_multiscale(x, dims=(0, 1))
    energy = np.sum(p.residue.data ** 2)
    energy += sum(np.sum(g.data ** 2) for hf in p.levels
                  for g in hf.values())
    assert abs(energy - np.sum(x.data ** 2)) < 1e-10


def test_level_counts():
    assert level_count((32, 32, 1), (0, 1)) == 5
    assert level_count((10, 4, 4, 1), (0,)) == 3
    assert level_count((32, 16, 1), (0, 1)) == 4
    x = Grid(np.random.default_rng(0).standard_normal((32, 32, 1)), channels=1)
    assert dwt_multiscale(x, dims=(0, 1)).level_count == 5


def test_subband_counts_and_shapes():
    x = Grid(np.random.default_rng(1).standard_normal((16, 16, 1)), channels=1)
    p = dwt_multiscale(x, dims=(0, 1))
    assert p.level_count == 4
    sizes = [16 // 2 ** (i + 1) for i in range(4)]
    for i, hf in enumerate(p.levels):
        assert len(hf) == 3  # 2^2 - 1 bands in 2D
        assert set(hf) == {("L", "H"), ("H", "L"), ("H", "H")}
        for g in hf.values():
            assert g.data.shape == (sizes[i], sizes[i], 1)


def test_odd_extents_halve_by_ceil():
    x = Grid(np.random.default_rng(2).standard_normal(10))
    p = dwt_multiscale(x, dims=(0,))
    assert p.level_count == 3  # floor(log2 10)
    extents = [next(iter(hf.values())).data.shape[0] for hf in p.levels]
    assert extents == [5, 3, 2]
    assert p.residue.data.shape[0] == 2


def test_rejects_tiny_extent():
    with pytest.raises(ValueError, match="too small"):
        dwt_level(Grid([1.0]), dims=(0,))
    with pytest.raises(ValueError):
        dwt_level(Grid(np.zeros((4, 4, 1)), channels=1), dims=())


@pytest.mark.parametrize("shape,dims", [((64,), (0,)), ((32, 32), (0, 1)),
                                        ((8, 8, 8), (0, 1, 2))])
def test_perfect_reconstruction(shape, dims):
    rng = np.random.default_rng(sum(shape))
    x = Grid(rng.standard_normal(shape + (1,)), channels=1)
    p = dwt_multiscale(x, dims=dims)
    rec = idwt_multiscale(p)
    assert np.max(np.abs(rec.data - x.data)) < 1e-10


def test_zeroed_hf_reconstruction_is_lowpass_projection():
    rng = np.random.default_rng(20)
    x = Grid(rng.standard_normal((32, 32, 1)), channels=1)
    p = dwt_multiscale(x, dims=(0, 1))
    hf_energy = sum(np.sum(g.data ** 2) for hf in p.levels
                    for g in hf.values())
    zeroed = WaveletPyramid(
        levels=[{k: Grid(np.zeros(g.data.shape), channels=1)
                 for k, g in hf.items()} for hf in p.levels],
        residue=p.residue, dims=p.dims, level_count=p.level_count)
    rec = idwt_multiscale(zeroed)
    residual = np.sum((rec.data - x.data) ** 2)
    assert abs(residual - hf_energy) < 1e-8


def test_all_zero_pyramid_reconstructs_zero():
    p = dwt_multiscale(Grid(np.zeros((16, 16, 1)), channels=1), dims=(0, 1))
    assert np.all(idwt_multiscale(p).data == 0.0)


def test_dwt_linearity():
    rng = np.random.default_rng(21)
    a, b = 1.3, -0.7
    x = rng.standard_normal((16, 16, 1))
    y = rng.standard_normal((16, 16, 1))
    pc = dwt_multiscale(Grid(a * x + b * y, channels=1), dims=(0, 1))
    px = dwt_multiscale(Grid(x, channels=1), dims=(0, 1))
    py = dwt_multiscale(Grid(y, channels=1), dims=(0, 1))
    for hc, hx, hy in zip(pc.levels, px.levels, py.levels):
        for key in hc:
            combo = a * hx[key].data + b * hy[key].data
            assert np.max(np.abs(hc[key].data - combo)) < 1e-12
    combo = a * px.residue.data + b * py.residue.data
    assert np.max(np.abs(pc.residue.data - combo)) < 1e-12


def test_shift_by_two_covariance():
    rng = np.random.default_rng(22)
    x = rng.standard_normal(32)
    lf1, hf1 = dwt_level(Grid(x), dims=(0,))
    lf2, hf2 = dwt_level(Grid(np.roll(x, 2)), dims=(0,))
    assert np.allclose(lf2.data, np.roll(lf1.data, 1, axis=0), atol=1e-12)
    b1 = next(iter(hf1.values())).data
    b2 = next(iter(hf2.values())).data
    assert np.allclose(b2, np.roll(b1, 1, axis=0), atol=1e-12)


def test_idwt_rejects_inconsistent_shapes():
    x = Grid(np.random.default_rng(3).standard_normal((16, 16, 1)), channels=1)
    p = dwt_multiscale(x, dims=(0, 1))
    bad = {k: g for k, g in p.levels[0].items()}
    key = ("H", "H")
    bad[key] = Grid(np.zeros((4, 4, 1)), channels=1)
    broken = WaveletPyramid(levels=[bad] + p.levels[1:], residue=p.residue,
                            dims=p.dims, level_count=p.level_count)
    with pytest.raises(ValueError, match="shapes"):
        idwt_multiscale(broken)


def test_log_scale_values():
    x = Grid([0.0, 3.0, -3.0, 1.0, 0.5, 2.0, -1.0, 4.0])
    p = dwt_multiscale(x, dims=(0,))
    scaled = log_scale(p, 1.0)
    raw = next(iter(p.levels[0].values())).data
    out = next(iter(scaled.levels[0].values())).data
    assert np.allclose(out, np.log2(np.abs(raw) + 1.0), atol=1e-12)
    # residue passes through untouched
    assert scaled.residue is p.residue
    # frozen point values of the map itself
    assert np.log2(abs(0.0) + 1.0) == 0.0
    assert np.log2(abs(3.0) + 1.0) == np.log2(abs(-3.0) + 1.0) == 2.0
    assert np.log2(0.0 + 2.0 ** -8) == -8.0


def test_log_scale_even_and_monotone():
    c = np.linspace(0.0, 4.0, 50)
    vals = np.log2(c + 2.0 ** -8)
    assert np.all(np.diff(vals) > 0.0)
    rng = np.random.default_rng(23)
    x = rng.standard_normal((16, 1))
    pp = log_scale(dwt_multiscale(Grid(x, channels=1), dims=(0,)), 0.5)
    pn = log_scale(dwt_multiscale(Grid(-x, channels=1), dims=(0,)), 0.5)
    for hp, hn in zip(pp.levels, pn.levels):
        for key in hp:
            assert np.allclose(hp[key].data, hn[key].data, atol=1e-12)


def test_log_scale_rejects_bad_eps():
    p = dwt_multiscale(Grid(np.zeros(8)), dims=(0,))
    with pytest.raises(ValueError):
        log_scale(p, 0.0)


def test_chirp_band_locality():
    corr, peaks = chirp_rank_correlation()
    assert corr > 0.8, f"rank correlation {corr} (peaks {peaks})"


@pytest.mark.parametrize("extent", [8, 10])
def test_fd_through_dwt_and_log_scale(extent):
    rng = np.random.default_rng(30 + extent)
    leaves = {"x": random_grid(rng, (extent, extent), 1)}

    def loss(g):
        p = log_scale(dwt_multiscale(g["x"], dims=(0, 1)), 2.0 ** -4)
        acc = None
        for hf in p.levels:
            for band in hf.values():
                term = mean_all(absolute(band))
                acc = term if acc is None else acc + term
        return acc

    fd_check(loss, leaves, rng)
