"""Wavelet-space losses and recurrent super-resolution for simulation
surfaces."""

from .grid import Grid, advect, backward, conv, leaky_relu, upsample_linear
from .losses import (LossWeights, mae_loss, rfft_loss, total_loss,
                     wavelet_spatial_loss, wavelet_temporal_loss)
from .wavelet import (FilterBank, WaveletPyramid, daubechies2, dwt_level,
                      dwt_multiscale, idwt_multiscale, log_scale)

__all__ = [
    "Grid", "advect", "backward", "conv", "leaky_relu", "upsample_linear",
    "LossWeights", "mae_loss", "rfft_loss", "total_loss",
    "wavelet_spatial_loss", "wavelet_temporal_loss",
    "FilterBank", "WaveletPyramid", "daubechies2", "dwt_level",
    "dwt_multiscale", "idwt_multiscale", "log_scale",
]
