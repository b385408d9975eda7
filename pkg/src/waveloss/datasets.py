"""Dataset generation and plumbing.

Synthetic wave surfaces, SDF rasterization, low-res derivation,
normalization, surface-band tile extraction and the binary dataset
format. Mass-spring data lives in massspring.py and feeds through the
same record/tile/io machinery. SDF values are kept in world units (one
low-res cell = one world unit) at both resolutions so a single
normalization covers the pair.
"""

from __future__ import annotations

import io
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid


@dataclass
class Frame:
    sdf: Grid
    velocity: Grid | None = None


@dataclass
class SimSequence:
    frames: list
    resolution: str  # "low" | "high"
    k: int
    source: str = "synthetic"


@dataclass
class DatasetRecord:
    low: SimSequence
    high: SimSequence

    def __post_init__(self):
        lo = self.low.frames[0].sdf.spatial_shape
        hi = self.high.frames[0].sdf.spatial_shape
        k = self.low.k
        if tuple(n * k for n in lo) != tuple(hi):
            raise ValueError(
                f"high extents {hi} are not k={k} times low extents {lo}")
        if len(self.low.frames) != len(self.high.frames):
            raise ValueError("low/high frame counts differ")

    @property
    def frame_count(self):
        return len(self.low.frames)


# -- synthetic wave data set --------------------------------------------------

@dataclass
class WaveState:
    s: np.ndarray   # surface height signal
    v: np.ndarray   # vertical velocity
    dx: float
    dt: float


@dataclass
class SyntheticWaveState:
    low: WaveState
    high: WaveState
    f_l: np.ndarray  # per-sample low frequency (high-res sampling)
    f_h: np.ndarray  # per-sample high frequency (target only)
    M: int
    k: int
    substeps: int


def _smooth_periodic_noise(rng, n, width):
    u = rng.uniform(0.0, 1.0, n)
    w = max(int(width), 1)
    kern = np.ones(w) / w
    tiled = np.concatenate([u[-w:], u, u[:w]])
    sm = np.convolve(tiled, kern, mode="same")[w:w + n]
    lo, hi = sm.min(), sm.max()
    if hi - lo < 1e-12:
        return np.full(n, 0.5)
    return (sm - lo) / (hi - lo)


def wave_init(M, k, seed, randomize_fh=True):
    """Initial low/high wave states with band-limited random frequencies.

    The low state carries only frequencies representable at resolution M;
    the target adds a component above the low-res Nyquist limit (and well
    below the high-res one). randomize_fh=False pins the high frequency
    to a constant, giving the deterministic up-sampling variant.
    """
    if M < 4:
        raise ValueError(f"M must be >= 4, got {M}")
    if k < 2:
        raise ValueError(f"k must be >= 2 so a high band exists, got {k}")
    n = k * M
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    width = k * M / 4
    f_l = (0.15 + 0.7 * _smooth_periodic_noise(rng, n, width)) * (M / 2.0)
    nyq_hi = k * M / 2.0
    if randomize_fh:
        f_h = (0.55 + 0.4 * _smooth_periodic_noise(rng, n, width)) * nyq_hi
    else:
        f_h = np.full(n, 0.75 * nyq_hi)
    if f_h.min() <= M / 2.0:
        raise ValueError("high-frequency band is empty; increase k")

    x_hi = np.arange(n, dtype=np.float64)
    x_lo = np.arange(M, dtype=np.float64)
    s_hi = (np.sin(np.pi * f_l * x_hi / (k * M))
            + np.sin(np.pi * f_h * x_hi / (k * M)))
    s_lo = np.sin(np.pi * f_l[::k] * x_lo / M)

    dx_lo, dx_hi = 1.0, 1.0 / k
    dt = 0.4 / k  # CFL-safe at the fine resolution
    return SyntheticWaveState(
        low=WaveState(s=s_lo, v=np.zeros(M), dx=dx_lo, dt=dt),
        high=WaveState(s=s_hi, v=np.zeros(n), dx=dx_hi, dt=dt),
        f_l=f_l, f_h=f_h, M=M, k=k, substeps=k)


def _wave_substep(w):
    lap = (np.roll(w.s, 1) - 2.0 * w.s + np.roll(w.s, -1)) / (w.dx * w.dx)
    w.v = w.v + w.dt * lap
    w.s = w.s + w.dt * w.v


def wave_step(state):
    """Advance both resolutions by one frame (several CFL substeps)."""
    for _ in range(state.substeps):
        _wave_substep(state.low)
        _wave_substep(state.high)
    return state


def wave_energy(w):
    """Discrete wave-equation energy: kinetic plus elastic (periodic)."""
    grad = (np.roll(w.s, -1) - w.s) / w.dx
    return 0.5 * np.sum(w.v ** 2) * w.dx + 0.5 * np.sum(grad ** 2) * w.dx


def heights_to_sdf(heights, height_extent, cell_size=1.0):
    """Column-wise vertical signed distance grid, negative below the surface."""
    h = np.asarray(heights, dtype=np.float64)
    y = np.arange(int(height_extent), dtype=np.float64)
    sdf = (y[None, :] - h[:, None]) * cell_size
    return Grid(sdf, cell_size=cell_size)


def _wave_frame(state, res):
    """Rasterize the current surface of one resolution into SDF + velocity."""
    M, k = state.M, state.k
    if res == "low":
        w, extent, cells_amp, cell_size = state.low, M, M / 8.0, 1.0
    else:
        w, extent, cells_amp, cell_size = state.high, k * M, k * M / 8.0, 1.0 / k
    h = extent / 2.0 + w.s * cells_amp
    sdf = heights_to_sdf(h, extent, cell_size)
    frame_time = state.substeps * w.dt
    vy = w.v * cells_amp * frame_time  # cells per frame at this resolution
    vel = np.zeros((len(h), int(extent), 2))
    vel[:, :, 1] = vy[:, None]
    return Frame(sdf=sdf, velocity=Grid(vel, channels=2, cell_size=cell_size))


def generate_wave_record(M, k, frames, seed, randomize_fh=True):
    """One paired low/high synthetic sequence of the given length."""
    state = wave_init(M, k, seed, randomize_fh)
    lo, hi = [], []
    for t in range(frames):
        if t > 0:
            wave_step(state)
        lo.append(_wave_frame(state, "low"))
        hi.append(_wave_frame(state, "high"))
    return DatasetRecord(
        low=SimSequence(frames=lo, resolution="low", k=k, source="synthetic"),
        high=SimSequence(frames=hi, resolution="high", k=k,
                         source="synthetic"))


def generate_wave_dataset(M, k, count, frames, seed, randomize_fh=True):
    base = np.random.SeedSequence(seed)
    seeds = base.generate_state(count)
    return [generate_wave_record(M, k, frames, int(s), randomize_fh)
            for s in seeds]


# -- low-res derivation -------------------------------------------------------

def _gaussian_blur(a, sigma, spatial_ndim):
    radius = max(int(np.ceil(3.0 * sigma)), 1)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (t / sigma) ** 2)
    kern /= kern.sum()
    for axis in range(spatial_ndim):
        widths = [(0, 0)] * a.ndim
        widths[axis] = (radius, radius)
        ap = np.pad(a, widths, mode="reflect")
        win = np.lib.stride_tricks.sliding_window_view(ap, 2 * radius + 1,
                                                       axis=axis)
        # the windowed axis keeps its position, so no reordering needed
        a = np.tensordot(win, kern, axes=([-1], [0]))
    return a


def derive_lowres(y, k, sigma=None):
    """Gaussian blur at high res, then k-stride average pooling."""
    k = int(k)
    if sigma is None:
        sigma = k / 2.0
    D = y.spatial_ndim
    for d, n in enumerate(y.spatial_shape):
        if n % k != 0:
            raise ValueError(f"extent {n} along dim {d} not divisible by {k}")
    a = _gaussian_blur(y.data, sigma, D)
    for axis in range(D):
        n = a.shape[axis]
        a = np.moveaxis(a, axis, 0)
        a = a.reshape((n // k, k) + a.shape[1:]).mean(axis=1)
        a = np.moveaxis(a, 0, axis)
    return Grid(a, channels=y.channels, cell_size=y.cell_size * k)


# -- normalization ------------------------------------------------------------

@dataclass
class NormStats:
    """Per-field affine maps x_norm = (x - center) * scale."""
    fields: dict = field(default_factory=dict)

    def apply(self, name, arr):
        center, scale = self.fields[name]
        return (arr - center) * scale

    def invert(self, name, arr):
        center, scale = self.fields[name]
        return arr / scale + center


def _affine_from_range(lo, hi, mode):
    if hi - lo < 1e-300:
        warnings.warn("degenerate value range; using identity normalization")
        return 0.0, 1.0
    if mode == "minmax":
        return (hi + lo) / 2.0, 2.0 / (hi - lo)
    # symmetric: scale only, so SDF zero level and zero velocity survive
    m = max(abs(lo), abs(hi))
    return 0.0, 1.0 / m


def normalize_dataset(records, mode="symmetric"):
    """Map SDF and velocity fields into [-1, 1] with global affine maps."""
    sdf_lo = min(min(f.sdf.data.min() for f in r.low.frames) for r in records)
    sdf_lo = min(sdf_lo, min(min(f.sdf.data.min() for f in r.high.frames)
                             for r in records))
    sdf_hi = max(max(f.sdf.data.max() for f in r.low.frames) for r in records)
    sdf_hi = max(sdf_hi, max(max(f.sdf.data.max() for f in r.high.frames)
                             for r in records))
    vels = [f.velocity.data for r in records
            for f in (r.low.frames + r.high.frames) if f.velocity is not None]
    v_lo = min(v.min() for v in vels) if vels else -1.0
    v_hi = max(v.max() for v in vels) if vels else 1.0
    stats = NormStats(fields={"sdf": _affine_from_range(sdf_lo, sdf_hi, mode),
                              "velocity": _affine_from_range(v_lo, v_hi, mode)})
    return apply_normalization(records, stats), stats


def apply_normalization(records, stats):
    out = []
    for r in records:
        seqs = []
        for seq in (r.low, r.high):
            frames = []
            for f in seq.frames:
                sdf = Grid(stats.apply("sdf", f.sdf.data),
                           channels=f.sdf.channels, cell_size=f.sdf.cell_size)
                vel = None
                if f.velocity is not None:
                    vel = Grid(stats.apply("velocity", f.velocity.data),
                               channels=f.velocity.channels,
                               cell_size=f.velocity.cell_size)
                frames.append(Frame(sdf=sdf, velocity=vel))
            seqs.append(SimSequence(frames=frames, resolution=seq.resolution,
                                    k=seq.k, source=seq.source))
        out.append(DatasetRecord(low=seqs[0], high=seqs[1]))
    return out


# -- tile extraction ----------------------------------------------------------

@dataclass
class Tile:
    origin: tuple   # low-res corner index
    size: int       # low-res extent per axis
    frame_range: tuple

    def cut(self, record, t0=None, T=None):
        """Materialize (low (x, v) pairs, high target sdfs) for T frames."""
        if t0 is None:
            t0, t1 = self.frame_range
        else:
            t1 = t0 + T
        k = record.low.k
        sl_lo = tuple(slice(o, o + self.size) for o in self.origin)
        sl_hi = tuple(slice(o * k, (o + self.size) * k) for o in self.origin)
        low, high = [], []
        for t in range(t0, t1):
            fl = record.low.frames[t]
            x = Grid(fl.sdf.data[sl_lo], channels=fl.sdf.channels,
                     cell_size=fl.sdf.cell_size)
            v = Grid(fl.velocity.data[sl_lo], channels=fl.velocity.channels,
                     cell_size=fl.velocity.cell_size)
            fh = record.high.frames[t]
            y = Grid(fh.sdf.data[sl_hi], channels=fh.sdf.channels,
                     cell_size=fh.sdf.cell_size)
            low.append((x, v))
            high.append(y)
        return low, high


def extract_tiles(record, tile_size, overlap, band):
    """Sliding-window tiles whose low-res patch touches the surface band."""
    extents = record.low.frames[0].sdf.spatial_shape
    if overlap < 0 or overlap >= tile_size:
        raise ValueError(f"overlap must be in [0, tile_size), got {overlap}")
    for d, n in enumerate(extents):
        if tile_size > n:
            raise ValueError(f"tile size {tile_size} exceeds extent {n} "
                             f"along dim {d}")
    stride = tile_size - overlap
    axes = [range(0, n - tile_size + 1, stride) for n in extents]
    min_abs = np.min(np.stack([np.abs(f.sdf.data[..., 0])
                               for f in record.low.frames]), axis=0)
    tiles = []
    for origin in np.stack(np.meshgrid(*axes, indexing="ij"),
                           axis=-1).reshape(-1, len(extents)):
        sl = tuple(slice(o, o + tile_size) for o in origin)
        if min_abs[sl].min() < band:
            tiles.append(Tile(origin=tuple(int(o) for o in origin),
                              size=tile_size,
                              frame_range=(0, record.frame_count)))
    return tiles


# -- binary dataset io --------------------------------------------------------

_MAGIC = b"WLDS"
_VERSION = 1


def _write_str(f, s):
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def _read_exact(f, n):
    b = f.read(n)
    if len(b) != n:
        raise ValueError("truncated dataset file")
    return b


def _read_str(f):
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")


def save_record(record, path, stats=None):
    lo0 = record.low.frames[0]
    dims = lo0.sdf.spatial_ndim
    k = record.low.k
    T = record.frame_count
    fields = [("sdf_low", lo0.sdf.channels, 0)]
    if lo0.velocity is not None:
        fields.append(("vel_low", lo0.velocity.channels, 0))
    fields.append(("sdf_high", record.high.frames[0].sdf.channels, 1))
    if record.high.frames[0].velocity is not None:
        fields.append(("vel_high", record.high.frames[0].velocity.channels, 1))

    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(struct.pack("<III", dims, k, T))
    buf.write(struct.pack(f"<{dims}I", *lo0.sdf.spatial_shape))
    _write_str(buf, record.low.source)
    buf.write(struct.pack("<I", len(fields)))
    for name, ch, hi in fields:
        _write_str(buf, name)
        buf.write(struct.pack("<II", ch, hi))
    stats = stats or NormStats()
    buf.write(struct.pack("<I", len(stats.fields)))
    for name in sorted(stats.fields):
        center, scale = stats.fields[name]
        _write_str(buf, name)
        buf.write(struct.pack("<dd", center, scale))
    for t in range(T):
        fl, fh = record.low.frames[t], record.high.frames[t]
        per_field = {"sdf_low": fl.sdf, "vel_low": fl.velocity,
                     "sdf_high": fh.sdf, "vel_high": fh.velocity}
        for name, _, _ in fields:
            g = per_field[name]
            buf.write(np.ascontiguousarray(g.data, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_record(path):
    """Returns (record, stats)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4) != _MAGIC:
            raise ValueError(f"{path}: not a dataset file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        dims, k, T = struct.unpack("<III", _read_exact(f, 12))
        lo_shape = struct.unpack(f"<{dims}I", _read_exact(f, 4 * dims))
        source = _read_str(f)
        (nf,) = struct.unpack("<I", _read_exact(f, 4))
        fields = []
        for _ in range(nf):
            name = _read_str(f)
            ch, hi = struct.unpack("<II", _read_exact(f, 8))
            fields.append((name, ch, hi))
        (ns,) = struct.unpack("<I", _read_exact(f, 4))
        stats = NormStats()
        for _ in range(ns):
            name = _read_str(f)
            center, scale = struct.unpack("<dd", _read_exact(f, 16))
            stats.fields[name] = (center, scale)
        hi_shape = tuple(n * k for n in lo_shape)
        lo_frames, hi_frames = [], []
        for _ in range(T):
            per = {}
            for name, ch, hi in fields:
                shape = (hi_shape if hi else lo_shape) + (ch,)
                n = int(np.prod(shape))
                arr = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8")
                per[name] = Grid(arr.reshape(shape).astype(np.float64),
                                 channels=ch,
                                 cell_size=1.0 / k if hi else 1.0)
            lo_frames.append(Frame(sdf=per["sdf_low"],
                                   velocity=per.get("vel_low")))
            hi_frames.append(Frame(sdf=per["sdf_high"],
                                   velocity=per.get("vel_high")))
    record = DatasetRecord(
        low=SimSequence(frames=lo_frames, resolution="low", k=k,
                        source=source),
        high=SimSequence(frames=hi_frames, resolution="high", k=k,
                         source=source))
    return record, stats


def save_dataset(records, directory, stats=None, splits=None):
    """Write one .wlds file per record plus a manifest with splits."""
    os.makedirs(directory, exist_ok=True)
    if splits is None:
        splits = ["train"] * len(records)
    lines = []
    for i, (rec, split) in enumerate(zip(records, splits)):
        name = f"seq_{i:05d}.wlds"
        save_record(rec, os.path.join(directory, name), stats)
        lines.append(f"{name} {split}")
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(directory, split=None):
    """Returns (records, stats). split filters by manifest assignment."""
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"no manifest.txt in {directory}")
    records = []
    stats = NormStats()
    with open(manifest) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            name, assigned = line.split()
            if split is not None and assigned != split:
                continue
            rec, stats = load_record(os.path.join(directory, name))
            records.append(rec)
    return records, stats
