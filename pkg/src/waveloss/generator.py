"""Recurrent fully-convolutional residual generator.

Pipeline per frame: tri-linearly up-sample the low-res SDF and velocity
by k, advect the previous high-res output with the up-sampled velocity
(scaled by k so displacements survive the resolution change), concatenate
everything channel-wise and run four residual blocks of two convolutions
each. The first convolution of the network uses mirror padding, all
others zero padding; leaky ReLU follows every layer except the last.
Residual skips use identity when channel counts match and a 1-wide
projection convolution otherwise (they never match here, since every
block changes its channel count).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .grid import (Grid, advect, bias_add, concat_channels, conv, leaky_relu,
                   upsample_linear)

BLOCK_FEATURES = ((8, 16), (32, 32), (16, 8), (1, 1))


@dataclass(frozen=True)
class GeneratorConfig:
    dims: int = 2
    k: int = 4
    block_features: tuple = BLOCK_FEATURES
    kernel_size: int = 5
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.dims not in (1, 2, 3):
            raise ValueError(f"dims must be 1..3, got {self.dims}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")

    @property
    def input_channels(self):
        # up-sampled SDF + velocity (dims channels) + advected previous frame
        return self.dims + 2


def _layer_plan(cfg):
    """(name, kernel_spatial, c_in, c_out) for every conv, plus projections."""
    ks = (cfg.kernel_size,) * cfg.dims
    ones = (1,) * cfg.dims
    plan = []
    c_in = cfg.input_channels
    for b, (c1, c2) in enumerate(cfg.block_features):
        plan.append((f"b{b}.conv1", ks, c_in, c1))
        plan.append((f"b{b}.conv2", ks, c1, c2))
        if c_in != c2:
            plan.append((f"b{b}.proj", ones, c_in, c2))
        c_in = c2
    return plan


def parameter_count(cfg):
    n = 0
    for name, ks, ci, co in _layer_plan(cfg):
        n += int(np.prod(ks)) * ci * co
        if not name.endswith("proj"):
            n += co  # bias
    return n


def init_generator(cfg, seed):
    """Glorot-uniform kernels, zero biases; deterministic for a seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params = {}
    for name, ks, ci, co in _layer_plan(cfg):
        fan = int(np.prod(ks))
        limit = np.sqrt(6.0 / (fan * ci + fan * co))
        k = rng.uniform(-limit, limit, size=ks + (ci, co))
        params[name + ".kernel"] = Grid(k, channels=co, name=name + ".kernel")
        if not name.endswith("proj"):
            b = np.zeros((1,) * cfg.dims + (co,))
            params[name + ".bias"] = Grid(b, channels=co, name=name + ".bias")
    return params


def forward(params, cfg, x_t, v_t, y_prev):
    """One generator step: low-res (x_t, v_t) + previous high-res frame."""
    if x_t.spatial_ndim != cfg.dims:
        raise ValueError(f"x_t has {x_t.spatial_ndim} dims, config wants "
                         f"{cfg.dims}")
    if v_t.spatial_shape != x_t.spatial_shape:
        raise ValueError(f"v_t shape {v_t.spatial_shape} != x_t shape "
                         f"{x_t.spatial_shape}")
    if v_t.channels != cfg.dims:
        raise ValueError(f"v_t needs {cfg.dims} channels, got {v_t.channels}")
    hi_shape = tuple(n * cfg.k for n in x_t.spatial_shape)
    if y_prev.spatial_shape != hi_shape:
        raise ValueError(f"y_prev shape {y_prev.spatial_shape} != "
                         f"k x input {hi_shape}")

    x_up = upsample_linear(x_t, cfg.k)
    v_up = upsample_linear(v_t, cfg.k) * float(cfg.k)  # to high-res cells
    y_adv = advect(y_prev, v_up, dt=1.0)
    h = concat_channels([x_up, v_up, y_adv])

    n_blocks = len(cfg.block_features)
    for b in range(n_blocks):
        pad = "mirror" if b == 0 else "zero"
        y = conv(h, params[f"b{b}.conv1.kernel"], padding=pad)
        y = bias_add(y, params[f"b{b}.conv1.bias"])
        y = leaky_relu(y, cfg.leaky_slope)
        y = conv(y, params[f"b{b}.conv2.kernel"], padding="zero")
        y = bias_add(y, params[f"b{b}.conv2.bias"])
        proj = params.get(f"b{b}.proj.kernel")
        skip = conv(h, proj, padding="zero") if proj is not None else h
        y = y + skip
        if b < n_blocks - 1:
            y = leaky_relu(y, cfg.leaky_slope)
        h = y
    return h


def rollout(params, cfg, frames, T=None, detach=False):
    """Recurrent inference over a low-res frame list of (x, v) pairs.

    The undefined first feedback frame is the up-sampled first input.
    With detach=True each step is cut off from the autodiff graph, so
    long inference rollouts do not accumulate backprop state.
    """
    if T is None:
        T = len(frames)
    if len(frames) < T:
        raise ValueError(f"sequence has {len(frames)} frames, need {T}")
    y_prev = upsample_linear(frames[0][0], cfg.k)
    out = []
    for t in range(T):
        x_t, v_t = frames[t]
        y_prev = forward(params, cfg, x_t, v_t, y_prev)
        if detach:
            y_prev = Grid(y_prev.data, channels=y_prev.channels,
                          cell_size=y_prev.cell_size)
        out.append(y_prev)
    return out


# -- checkpoint io ----------------------------------------------------------

_MAGIC = b"WLCK"
_VERSION = 1


def _write_str(f, s):
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read_str(f):
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")


def _read_exact(f, n):
    b = f.read(n)
    if len(b) != n:
        raise ValueError("truncated checkpoint file")
    return b


def save_checkpoint(path, cfg, params, extra=None, meta=None):
    """Little-endian binary checkpoint: config, metadata, named tensors.

    extra maps extra tensor names to ndarrays (e.g. optimizer moments);
    meta maps string keys to string values.
    """
    tensors = [(name, g.data, g.channels) for name, g in params.items()]
    for name, arr in (extra or {}).items():
        arr = np.asarray(arr, dtype=np.float64)
        tensors.append((name, arr, arr.shape[-1]))
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(struct.pack("<IIId", cfg.dims, cfg.k, cfg.kernel_size,
                          cfg.leaky_slope))
    buf.write(struct.pack("<I", len(cfg.block_features)))
    for c1, c2 in cfg.block_features:
        buf.write(struct.pack("<II", c1, c2))
    meta = meta or {}
    buf.write(struct.pack("<I", len(meta)))
    for key in sorted(meta):
        _write_str(buf, key)
        _write_str(buf, str(meta[key]))
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr, _ in tensors:
        _write_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (cfg, params, extra_tensors, meta)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dims, k, ksize, slope = struct.unpack("<IIId", _read_exact(f, 20))
        (nb,) = struct.unpack("<I", _read_exact(f, 4))
        feats = tuple(struct.unpack("<II", _read_exact(f, 8)) for _ in range(nb))
        cfg = GeneratorConfig(dims=dims, k=k, block_features=feats,
                              kernel_size=ksize, leaky_slope=slope)
        (nm,) = struct.unpack("<I", _read_exact(f, 4))
        meta = {}
        for _ in range(nm):
            key = _read_str(f)
            meta[key] = _read_str(f)
        (nt,) = struct.unpack("<I", _read_exact(f, 4))
        params, extra = {}, {}
        param_names = {n + s for n, _, _, _ in _layer_plan(cfg)
                       for s in (".kernel", ".bias")}
        for _ in range(nt):
            name = _read_str(f)
            (ndim,) = struct.unpack("<I", _read_exact(f, 4))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            n = int(np.prod(shape))
            arr = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8")
            arr = arr.reshape(shape).astype(np.float64)
            if name in param_names:
                params[name] = Grid(arr, channels=shape[-1], name=name)
            else:
                extra[name] = arr
    return cfg, params, extra, meta
