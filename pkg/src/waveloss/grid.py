"""Dense N-d grids with reverse-mode gradients.

A Grid stores a float64 array with shape (*spatial, channels), channels
last. Grids are immutable once built; every operation returns a fresh
Grid and records how to push gradients back to its inputs. Calling
``backward`` on a scalar Grid walks the graph once and accumulates
gradients on every reachable node.
"""

from __future__ import annotations

import numpy as np

# Finite checks catch NaN/Inf as soon as they appear. Cheap at the grid
# sizes used here; flip off only for profiling.
FINITE_CHECKS = True


class Grid:
    __slots__ = ("data", "cell_size", "name", "grad", "_parents", "_bwd")

    def __init__(self, data, channels=None, cell_size=1.0, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if channels is None:
            arr = arr.reshape(arr.shape + (1,))
            channels = 1
        if arr.ndim < 2 or arr.shape[-1] != channels:
            raise ValueError(
                f"data shape {arr.shape} does not end in {channels} channels"
            )
        if FINITE_CHECKS and not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values in grid {name or ''}")
        self.data = arr
        self.cell_size = float(cell_size)
        self.name = name
        self.grad = None
        self._parents = ()
        self._bwd = None

    # -- construction helpers -------------------------------------------

    @classmethod
    def _node(cls, data, parents, bwd, cell_size=1.0):
        g = cls(np.asarray(data, dtype=np.float64), channels=data.shape[-1],
                cell_size=cell_size)
        g._parents = tuple(parents)
        g._bwd = bwd
        return g

    @classmethod
    def scalar(cls, value):
        return cls(np.full((1, 1), float(value)), channels=1)

    # -- inspection ------------------------------------------------------

    @property
    def spatial_shape(self):
        return self.data.shape[:-1]

    @property
    def channels(self):
        return self.data.shape[-1]

    @property
    def spatial_ndim(self):
        return self.data.ndim - 1

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() requires a scalar grid")
        return float(self.data.reshape(()))

    def __repr__(self):
        return (f"Grid(shape={self.spatial_shape}, channels={self.channels}"
                + (f", name={self.name!r}" if self.name else "") + ")")

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Grid):
            _check_same_shape(self, other, "add")
            return Grid._node(self.data + other.data, (self, other),
                              lambda g: (g, g), self.cell_size)
        return Grid._node(self.data + float(other), (self,),
                          lambda g: (g,), self.cell_size)

    def __sub__(self, other):
        if isinstance(other, Grid):
            _check_same_shape(self, other, "sub")
            return Grid._node(self.data - other.data, (self, other),
                              lambda g: (g, -g), self.cell_size)
        return Grid._node(self.data - float(other), (self,),
                          lambda g: (g,), self.cell_size)

    def __neg__(self):
        return Grid._node(-self.data, (self,), lambda g: (-g,), self.cell_size)

    def __mul__(self, other):
        if isinstance(other, Grid):
            _check_same_shape(self, other, "mul")
            a, b = self.data, other.data
            return Grid._node(a * b, (self, other),
                              lambda g: (g * b, g * a), self.cell_size)
        c = float(other)
        return Grid._node(self.data * c, (self,),
                          lambda g: (g * c,), self.cell_size)

    __rmul__ = __mul__

    def __radd__(self, other):
        return self.__add__(other)


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# -- elementwise ops -----------------------------------------------------

def leaky_relu(x, slope):
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must be in (0, 1), got {slope}")
    a = x.data
    mask = np.where(a > 0.0, 1.0, slope)
    return Grid._node(a * mask, (x,), lambda g: (g * mask,), x.cell_size)


def absolute(x):
    # subgradient 0 at exactly 0
    s = np.sign(x.data)
    return Grid._node(np.abs(x.data), (x,), lambda g: (g * s,), x.cell_size)


def log2_abs(x, eps):
    """Elementwise log2(|x| + eps)."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    a = x.data
    d = np.sign(a) / ((np.abs(a) + eps) * np.log(2.0))
    return Grid._node(np.log2(np.abs(a) + eps), (x,),
                      lambda g: (g * d,), x.cell_size)


# -- reductions ----------------------------------------------------------

def sum_all(x):
    shape = x.data.shape

    def bwd(g):
        return (np.broadcast_to(g.reshape(()), shape).copy(),)

    return Grid._node(np.full((1, 1), x.data.sum()), (x,), bwd)


def mean_all(x):
    shape = x.data.shape
    n = x.data.size

    def bwd(g):
        return (np.broadcast_to(g.reshape(()) / n, shape).copy(),)

    return Grid._node(np.full((1, 1), x.data.mean()), (x,), bwd)


# -- shape ops -----------------------------------------------------------

def concat_channels(grids):
    grids = list(grids)
    base = grids[0].spatial_shape
    for g in grids[1:]:
        if g.spatial_shape != base:
            raise ValueError(
                f"concat: spatial shape {g.spatial_shape} != {base}")
    splits = np.cumsum([g.channels for g in grids])[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p)
                     for p in np.split(g, splits, axis=-1))

    return Grid._node(np.concatenate([g.data for g in grids], axis=-1),
                      grids, bwd, grids[0].cell_size)


def stack_frames(frames):
    """Stack a list of equally shaped grids along a new leading (time) axis."""
    frames = list(frames)
    base = frames[0].data.shape
    for f in frames[1:]:
        if f.data.shape != base:
            raise ValueError("stack: frames must share shape")

    def bwd(g):
        return tuple(np.ascontiguousarray(g[t]) for t in range(len(frames)))

    return Grid._node(np.stack([f.data for f in frames], axis=0),
                      frames, bwd, frames[0].cell_size)


def bias_add(x, b):
    """Add a per-channel bias (spatial shape all ones) to x."""
    if b.channels != x.channels:
        raise ValueError(f"bias channels {b.channels} != input {x.channels}")
    ax = tuple(range(x.spatial_ndim))

    def bwd(g):
        return (g, g.sum(axis=ax, keepdims=True).reshape(b.data.shape))

    return Grid._node(x.data + b.data.reshape((1,) * x.spatial_ndim + (-1,)),
                      (x, b), bwd, x.cell_size)


# -- padding helpers (shared with conv) ------------------------------------


def _pad_spatial(a, pads, mode):
    widths = [(p, p) for p in pads] + [(0, 0)]
    return np.pad(a, widths, mode="reflect" if mode == "mirror" else "constant")


def _pad_adjoint(g, pads, mode):
    """Adjoint of _pad_spatial: fold padded-region gradient back inside."""
    D = len(pads)
    for axis in range(D):
        p = pads[axis]
        if p == 0:
            continue
        gm = np.moveaxis(g, axis, 0)
        core = gm[p:gm.shape[0] - p].copy()
        if mode == "mirror":
            for i in range(1, p + 1):
                core[i] += gm[p - i]
                core[-1 - i] += gm[gm.shape[0] - p + i - 1]
        g = np.moveaxis(core, 0, axis)
    return g


# -- convolution -----------------------------------------------------------

def conv(x, kernel, padding="zero"):
    """Same-padded N-d convolution (cross-correlation).

    kernel data has shape (*ks, c_in, c_out) with every spatial extent odd.
    padding is "zero" or "mirror" (reflect without edge repeat).
    """
    if padding not in ("zero", "mirror"):
        raise ValueError(f"unknown padding {padding!r}")
    D = x.spatial_ndim
    kd = kernel.data
    if kd.ndim != D + 2:
        raise ValueError(
            f"kernel ndim {kd.ndim} does not match {D} spatial dims + 2")
    ks = kd.shape[:D]
    for d, k in enumerate(ks):
        if k % 2 == 0:
            raise ValueError(f"kernel extent along dim {d} must be odd, got {k}")
    if kd.shape[D] != x.channels:
        raise ValueError(
            f"kernel input channels {kd.shape[D]} != grid channels {x.channels}")
    pads = [(k - 1) // 2 for k in ks]
    if padding == "mirror":
        for d, (n, p) in enumerate(zip(x.spatial_shape, pads)):
            if p > 0 and n < p + 1:
                raise ValueError(f"extent {n} too small for mirror pad {p} "
                                 f"along dim {d}")

    xpad = _pad_spatial(x.data, pads, padding)
    win = np.lib.stride_tricks.sliding_window_view(
        xpad, ks, axis=tuple(range(D)))
    # win: (*spatial, c_in, *ks); contract c_in and kernel offsets
    y = np.tensordot(win, kd,
                     axes=(list(range(D + 1, 2 * D + 1)) + [D],
                           list(range(D)) + [D]))

    def bwd(g):
        # kernel gradient: correlate padded input windows with g
        gk = np.tensordot(win, g, axes=(list(range(D)), list(range(D))))
        # gk: (c_in, *ks, c_out) -> (*ks, c_in, c_out)
        gk = np.moveaxis(gk, 0, D)
        # input gradient: full correlation of g with flipped kernel
        kflip = kd[tuple(slice(None, None, -1) for _ in range(D))]
        kflip = np.swapaxes(kflip, D, D + 1)  # (*ks, c_out, c_in)
        gp = np.pad(g, [(k - 1, k - 1) for k in ks] + [(0, 0)])
        gwin = np.lib.stride_tricks.sliding_window_view(
            gp, ks, axis=tuple(range(D)))
        gxpad = np.tensordot(gwin, kflip,
                             axes=(list(range(D + 1, 2 * D + 1)) + [D],
                                   list(range(D)) + [D]))
        return (_pad_adjoint(gxpad, pads, padding), gk)

    return Grid._node(y, (x, kernel), bwd, x.cell_size)


# -- resampling ------------------------------------------------------------

def _upsample_weights(n, k):
    """Cell-centered linear interpolation indices/weights for factor k."""
    pos = (np.arange(n * k) + 0.5) / k - 0.5
    pos = np.clip(pos, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(pos).astype(np.intp), max(n - 2, 0))
    i1 = np.minimum(i0 + 1, n - 1)
    w = pos - i0
    return i0, i1, w


def _apply_axis_lin(a, axis, i0, i1, w):
    g0 = np.take(a, i0, axis=axis)
    g1 = np.take(a, i1, axis=axis)
    shape = [1] * a.ndim
    shape[axis] = len(w)
    wv = w.reshape(shape)
    return g0 * (1.0 - wv) + g1 * wv


def _apply_axis_lin_adjoint(g, axis, n, i0, i1, w):
    gm = np.moveaxis(g, axis, 0)
    acc = np.zeros((n,) + gm.shape[1:])
    wv = w.reshape((-1,) + (1,) * (gm.ndim - 1))
    np.add.at(acc, i0, gm * (1.0 - wv))
    np.add.at(acc, i1, gm * wv)
    return np.moveaxis(acc, 0, axis)


def upsample_linear(x, k):
    """Multi-linear up-sampling by an integer factor, cell-centered."""
    k = int(k)
    if k < 1:
        raise ValueError(f"up-sample factor must be >= 1, got {k}")
    D = x.spatial_ndim
    plans = [( _upsample_weights(n, k)) for n in x.spatial_shape]
    a = x.data
    for axis in range(D):
        i0, i1, w = plans[axis]
        a = _apply_axis_lin(a, axis, i0, i1, w)

    shape = x.spatial_shape

    def bwd(g):
        for axis in reversed(range(D)):
            i0, i1, w = plans[axis]
            g = _apply_axis_lin_adjoint(g, axis, shape[axis], i0, i1, w)
        return (g,)

    return Grid._node(a, (x,), bwd, x.cell_size / k)


# -- advection --------------------------------------------------------------

def advect(field, velocity, dt):
    """Semi-Lagrangian backtrace of field along velocity (cells per frame).

    Sample positions are clamped to the domain; velocity carries one
    channel per spatial dimension and no gradient is propagated to it.
    """
    D = field.spatial_ndim
    if velocity.channels != D:
        raise ValueError(
            f"velocity channels {velocity.channels} != field dims {D}")
    if velocity.spatial_shape != field.spatial_shape:
        raise ValueError(
            f"velocity shape {velocity.spatial_shape} != field "
            f"shape {field.spatial_shape}")
    shape = field.spatial_shape
    idx = np.indices(shape, dtype=np.float64)
    pos = idx - dt * np.moveaxis(velocity.data, -1, 0)
    i0, i1, frac = [], [], []
    for d, n in enumerate(shape):
        p = np.clip(pos[d], 0.0, n - 1.0)
        a0 = np.minimum(np.floor(p).astype(np.intp), max(n - 2, 0))
        i0.append(a0)
        i1.append(np.minimum(a0 + 1, n - 1))
        frac.append(p - a0)

    corners = []
    out = np.zeros(field.data.shape)
    for bits in range(1 << D):
        w = np.ones(shape)
        ind = []
        for d in range(D):
            if bits >> d & 1:
                w = w * frac[d]
                ind.append(i1[d])
            else:
                w = w * (1.0 - frac[d])
                ind.append(i0[d])
        ind = tuple(ind)
        corners.append((ind, w))
        out += w[..., None] * field.data[ind]

    def bwd(g):
        gf = np.zeros(field.data.shape)
        for ind, w in corners:
            np.add.at(gf, ind, w[..., None] * g)
        return (gf, None)

    return Grid._node(out, (field, velocity), bwd, field.cell_size)


# -- backward pass -----------------------------------------------------------

def backward(loss):
    """Reverse-mode sweep from a scalar loss.

    Returns a dict mapping the names of named leaf grids (parameters) to
    their gradient arrays; every visited node also gets a ``.grad``.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")

    topo = []
    seen = set()
    stack = [(loss, iter(loss._parents))]
    seen.add(id(loss))
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            topo.append(node)
            stack.pop()
        elif id(nxt) not in seen:
            seen.add(id(nxt))
            stack.append((nxt, iter(nxt._parents)))

    for node in topo:
        node.grad = None
    loss.grad = np.ones(loss.data.shape)

    for node in reversed(topo):
        if node._bwd is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._bwd(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g if g.flags.owndata else g.copy()
            else:
                parent.grad = parent.grad + g

    return {n.name: n.grad for n in topo
            if n.name is not None and n._bwd is None and n.grad is not None}
