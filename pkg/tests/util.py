"""Shared test helpers: finite-difference gradient checking."""

import numpy as np

from waveloss.grid import Grid, backward


def fd_check(build_loss, leaves, rng, h=1e-5, rel_tol=1e-4):
    """Directional finite-difference check of a scalar-valued graph.

    build_loss: callable(dict name -> Grid) -> scalar Grid.
    leaves: dict name -> ndarray of leaf values; gradients are checked
    against a central difference along a random direction per leaf.
    """
    grids = {n: Grid(v, channels=v.shape[-1], name=n)
             for n, v in leaves.items()}
    loss = build_loss(grids)
    grads = backward(loss)
    for name, value in leaves.items():
        direction = rng.standard_normal(value.shape)
        direction /= np.linalg.norm(direction.ravel())
        analytic = np.sum(grads[name] * direction)

        def at(offset):
            moved = dict(leaves)
            moved[name] = value + offset * direction
            gs = {n: Grid(v, channels=v.shape[-1], name=n)
                  for n, v in moved.items()}
            return build_loss(gs).item()

        numeric = (at(h) - at(-h)) / (2.0 * h)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        rel = abs(analytic - numeric) / scale
        assert rel <= rel_tol, (
            f"gradient mismatch for {name}: analytic {analytic:.10g} vs "
            f"numeric {numeric:.10g} (rel {rel:.3g})")


def random_grid(rng, shape, channels=1):
    return rng.uniform(-1.0, 1.0, size=tuple(shape) + (channels,))


def _spearman(a, b):
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    return float(np.sum(ra * rb) /
                 np.sqrt(np.sum(ra ** 2) * np.sum(rb ** 2)))


def chirp_rank_correlation(n=256, rows=16):
    """Rank correlation between wavelet level index and the location of
    peak band energy on a chirp whose frequency falls along the axis.

    Returns (spearman correlation, list of peak positions per level).
    Frequency decreases with position, so deeper (lower-frequency) levels
    should peak further along the axis.
    """
    from waveloss.grid import Grid
    from waveloss.wavelet import dwt_multiscale

    x = np.arange(n)
    nu = 0.45 * 2.0 ** (-8.0 * x / n)   # cycles per sample, 8 octaves
    signal = np.sin(2.0 * np.pi * np.cumsum(nu))
    img = np.tile(signal[:, None, None], (1, rows, 1))
    p = dwt_multiscale(Grid(img, channels=1), dims=(0, 1))
    peaks, levels = [], []
    for i, hf in enumerate(p.levels):
        extent = next(iter(hf.values())).data.shape[0]
        if extent < 8:
            break  # too few coefficients to locate a peak
        profile = np.zeros(extent)
        for key, g in hf.items():
            if key[0] == "H":  # bands that filter along the chirp axis
                profile += np.sum(g.data ** 2, axis=(1, 2))
        peaks.append((np.argmax(profile) + 0.5) * 2.0 ** (i + 1))
        levels.append(i)
    return _spearman(np.array(levels), np.array(peaks)), peaks
