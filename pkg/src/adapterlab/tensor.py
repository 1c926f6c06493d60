"""Dense float64 tensors with reverse-mode automatic differentiation.

Design: a tape (:class:`ComputeGraph`) records one node per executed op in
execution order, which is automatically a topological order. ``backward``
walks the tape in reverse, calling each node's pull-back closure. Outside an
active tape nothing is recorded and ops degrade to plain numpy, which is the
inference fast path.

Tensors are float64, row-major, rank 1..4. Scalars are rank-1 tensors of
length 1. Broadcasting is deliberately restricted: elementwise ops need equal
shapes; affine broadcasts exist only for the last axis (``add`` with a rank-1
right operand) and for the channel axis (``channel_bias``/``channel_scale``).
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ContractError, DimensionError
from .rng import RngState

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 4:
            raise DimensionError(f"rank must be 1..4, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def flat(self):
        """Row-major flat view of the value array."""
        return self.data.ravel()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.ravel()[0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("op", "input_ids", "output_id", "inputs", "output", "backward_fn")

    def __init__(self, op, input_ids, output_id, inputs, output, backward_fn):
        self.op = op
        self.input_ids = input_ids
        self.output_id = output_id
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class ComputeGraph:
    """Execution tape. Node order is insertion order and hence topological."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._ids: dict[int, int] = {}  # id(tensor) -> node index

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def _ensure_id(self, t: Tensor) -> int:
        key = id(t)
        idx = self._ids.get(key)
        if idx is None:
            idx = len(self.nodes)
            self.nodes.append(_Node("leaf", (), idx, (), t, None))
            self._ids[key] = idx
        return idx

    def record(self, op: str, inputs: tuple, output: Tensor, backward_fn):
        input_ids = tuple(self._ensure_id(t) for t in inputs)
        out_id = len(self.nodes)
        self.nodes.append(_Node(op, input_ids, out_id, inputs, output, backward_fn))
        self._ids[id(output)] = out_id

    def backward(self, loss: Tensor):
        backward(self, loss)


_TAPES: list[ComputeGraph] = []


def active_graph() -> ComputeGraph | None:
    return _TAPES[-1] if _TAPES else None


def _record(op, inputs, output, backward_fn):
    g = _TAPES[-1] if _TAPES else None
    if g is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        g.record(op, inputs, output, backward_fn)
    return output


def backward(graph: ComputeGraph, loss: Tensor):
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate additively across fan-out and across repeated calls;
    use ``zero_grad`` between optimization steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if id(loss) not in graph._ids:
        raise ContractError("loss was not produced by this graph")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        if node.backward_fn is None:
            continue
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        for t, g in node.backward_fn(g_out):
            if g is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
    # whatever remains belongs to leaf nodes
    for node in graph.nodes:
        if node.backward_fn is None:
            g = grads.get(id(node.output))
            if g is not None and node.output.requires_grad:
                node.output.accumulate_grad(g)


# ---------------------------------------------------------------------------
# construction helpers


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def randn(shape, rng: RngState, std: float = 1.0, requires_grad=False) -> Tensor:
    return Tensor(rng.normal(shape, std=std), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# elementwise and affine ops


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        out = Tensor(a.data + float(b))
        return _record("add_scalar", (a,), out, lambda g: [(a, g)])
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)
        return _record("add", (a, b), out, lambda g: [(a, g), (b, g)])
    if b.data.ndim == 1 and a.shape[-1] == b.shape[0]:
        # last-axis affine broadcast (bias add)
        out = Tensor(a.data + b.data)
        axes = tuple(range(a.data.ndim - 1))
        return _record("add_bias", (a, b), out,
                       lambda g: [(a, g), (b, g.sum(axis=axes))])
    raise DimensionError(f"add shapes {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)
    return _record("sub", (a, b), out, lambda g: [(a, g), (b, -g)])


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    if a.shape != b.shape:
        raise DimensionError(f"mul shapes {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    return _record("mul", (a, b), out,
                   lambda g: [(a, g * b.data), (b, g * a.data)])


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    return _record("scale", (a,), out, lambda g: [(a, g * c)])


def channel_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add b[c] to every element of channel c (first axis)."""
    if b.data.ndim != 1 or x.shape[0] != b.shape[0]:
        raise DimensionError(f"channel_bias shapes {x.shape} vs {b.shape}")
    view = (slice(None),) + (None,) * (x.data.ndim - 1)
    out = Tensor(x.data + b.data[view])
    axes = tuple(range(1, x.data.ndim))
    return _record("channel_bias", (x, b), out,
                   lambda g: [(x, g), (b, g.sum(axis=axes) if axes else g)])


def channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply channel c (first axis) of x by s[c]; used by the SE gate."""
    if s.data.ndim != 1 or x.shape[0] != s.shape[0]:
        raise DimensionError(f"channel_scale shapes {x.shape} vs {s.shape}")
    view = (slice(None),) + (None,) * (x.data.ndim - 1)
    sv = s.data[view]
    out = Tensor(x.data * sv)
    axes = tuple(range(1, x.data.ndim))

    def bwd(g):
        gs = (g * x.data).sum(axis=axes) if axes else g * x.data
        return [(x, g * sv), (s, gs)]

    return _record("channel_scale", (x, s), out, bwd)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU x * Phi(x) with the Gaussian CDF in erf form."""
    phi_cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = Tensor(x.data * phi_cdf)

    def bwd(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return [(x, g * (phi_cdf + x.data * pdf))]

    return _record("gelu", (x,), out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    y = np.where(x.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = Tensor(y)
    return _record("sigmoid", (x,), out, lambda g: [(x, g * y * (1.0 - y))])


def dropout(x: Tensor, p: float, rng: RngState, training: bool) -> Tensor:
    """Inverted dropout: kept units scaled by 1/(1-p); identity in eval mode."""
    if p >= 1.0 or p < 0.0:
        raise ConfigError(f"dropout p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= p).astype(np.float64) / (1.0 - p)
    out = Tensor(x.data * keep)
    return _record("dropout", (x,), out, lambda g: [(x, g * keep)])


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(x: Tensor) -> Tensor:
    out = Tensor(np.array([x.data.sum()]))
    return _record("sum", (x,), out,
                   lambda g: [(x, np.full_like(x.data, g[0]))])


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(np.array([x.data.mean()]))
    return _record("mean", (x,), out,
                   lambda g: [(x, np.full_like(x.data, g[0] / n))])


def cummean_time(x: Tensor) -> Tensor:
    """Running mean along the last axis of [C,T]: y[:,t] = mean(x[:,:t+1]).

    The causal counterpart of a global average pool over time.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"cummean_time expects [C,T], got {x.shape}")
    t_len = x.shape[1]
    counts = np.arange(1, t_len + 1, dtype=np.float64)
    out = Tensor(np.cumsum(x.data, axis=1) / counts)

    def bwd(g):
        w = g / counts
        # dx[:, j] = sum_{t >= j} g[:, t] / (t+1)
        rev = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
        return [(x, np.ascontiguousarray(rev))]

    return _record("cummean_time", (x,), out, bwd)


def mean_axes(x: Tensor, axes: tuple) -> Tensor:
    """Mean over the given axes (dropped from the output shape)."""
    out = Tensor(x.data.mean(axis=axes))
    count = int(np.prod([x.shape[a] for a in axes]))

    def bwd(g):
        gx = np.expand_dims(g, axes) / count
        return [(x, np.broadcast_to(gx, x.shape).copy())]

    return _record("mean_axes", (x,), out, bwd)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _record("reshape", (x,), out, lambda g: [(x, g.reshape(x.shape))])


def transpose(x: Tensor, axes) -> Tensor:
    inv = tuple(int(i) for i in np.argsort(axes))
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    return _record("transpose", (x,), out,
                   lambda g: [(x, np.ascontiguousarray(g.transpose(inv)))])


def concat(parts: list, axis: int = 0) -> Tensor:
    widths = [t.shape[axis] for t in parts]
    out = Tensor(np.concatenate([t.data for t in parts], axis=axis))
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl[axis] = slice(lo, hi)
            grads.append((t, np.ascontiguousarray(g[tuple(sl)])))
        return grads

    return _record("concat", tuple(parts), out, bwd)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup table[ids]; backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return [(table, gt)]

    return _record("gather_rows", (table,), out, bwd)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record("matmul", (a, b), out,
                   lambda g: [(a, g @ b.data.T if a.requires_grad else None),
                              (b, a.data.T @ g if b.requires_grad else None)])


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over the leading axis: [h,m,k] x [h,k,n] -> [h,m,n]."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0] \
            or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record("bmm", (a, b), out,
                   lambda g: [(a, g @ b.data.transpose(0, 2, 1) if a.requires_grad else None),
                              (b, a.data.transpose(0, 2, 1) @ g if b.requires_grad else None)])


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layernorm affine shapes {gamma.shape}/{beta.shape} for d={d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def bwd(g):
        axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gy = g * gamma.data
        dx = inv * (gy - gy.mean(axis=-1, keepdims=True)
                    - xhat * (gy * xhat).mean(axis=-1, keepdims=True))
        return [(x, dx), (gamma, dgamma), (beta, dbeta)]

    return _record("layernorm", (x, gamma, beta), out, bwd)


def softmax_lastaxis(x: Tensor, causal: bool = False) -> Tensor:
    """Row softmax over the last axis; causal masks column j > row i exactly.

    Causal mode requires the last two axes to be square (attention scores).
    """
    s = x.data
    if causal:
        if s.shape[-1] != s.shape[-2]:
            raise DimensionError(f"causal softmax needs square trailing axes, got {x.shape}")
        tri = np.triu(np.ones((s.shape[-2], s.shape[-1]), dtype=bool), k=1)
        s = np.where(tri, -np.inf, s)
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return [(x, y * (g - dot))]

    return _record("softmax", (x,), out, bwd)


def softmax_attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = False) -> Tensor:
    """Scaled dot-product attention over [heads, T, d_head] tensors."""
    if q.data.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"attention shapes q={q.shape} k={k.shape} v={v.shape}")
    d_h = q.shape[-1]
    scores = scale(bmm(q, transpose(k, (0, 2, 1))), 1.0 / np.sqrt(d_h))
    weights = softmax_lastaxis(scores, causal=causal)
    return bmm(weights, v)


# ---------------------------------------------------------------------------
# convolutions and resampling


def _conv1d_windows(xp: np.ndarray, t_out: int, kernel: int, dilation: int) -> np.ndarray:
    return np.stack([xp[:, k * dilation:k * dilation + t_out] for k in range(kernel)])


def conv1d(x: Tensor, w: Tensor, dilation: int = 1, padding: str = "same") -> Tensor:
    """1D convolution [C_in,T] * [C_out,C_in,K] -> [C_out,T], length preserved.

    padding="same" centers the kernel (zero pad both sides); "causal" pads
    only the past so output t never sees inputs beyond t.
    """
    if x.data.ndim != 2 or w.data.ndim != 3 or x.shape[0] != w.shape[1]:
        raise DimensionError(f"conv1d shapes x={x.shape} w={w.shape}")
    kernel = w.shape[2]
    if kernel % 2 == 0:
        raise ConfigError(f"conv1d kernel must be odd, got {kernel}")
    if dilation < 1:
        raise ConfigError(f"conv1d dilation must be >= 1, got {dilation}")
    span = (kernel - 1) * dilation
    if padding == "same":
        pad_l = pad_r = span // 2
    elif padding == "causal":
        pad_l, pad_r = span, 0
    else:
        raise ConfigError(f"conv1d padding must be 'same' or 'causal', got {padding!r}")
    t_len = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (pad_l, pad_r)))
    win = _conv1d_windows(xp, t_len, kernel, dilation)  # [K, C_in, T]
    out = Tensor(np.einsum("ock,kct->ot", w.data, win, optimize=True))

    def bwd(g):
        dw = np.einsum("ot,kct->ock", g, win, optimize=True) if w.requires_grad else None
        dx = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k in range(kernel):
                dxp[:, k * dilation:k * dilation + t_len] += np.einsum(
                    "oc,ot->ct", w.data[:, :, k], g, optimize=True)
            dx = np.ascontiguousarray(dxp[:, pad_l:pad_l + t_len])
        return [(x, dx), (w, dw)]

    return _record("conv1d", (x, w), out, bwd)


def conv2d(x: Tensor, w: Tensor, padding: str = "same") -> Tensor:
    """2D convolution [C_in,H,W] * [C_out,C_in,K,K] -> [C_out,H,W], same size."""
    if x.data.ndim != 3 or w.data.ndim != 4 or x.shape[0] != w.shape[1] \
            or w.shape[2] != w.shape[3]:
        raise DimensionError(f"conv2d shapes x={x.shape} w={w.shape}")
    kernel = w.shape[2]
    if kernel % 2 == 0:
        raise ConfigError(f"conv2d kernel must be odd, got {kernel}")
    if padding != "same":
        raise ConfigError(f"conv2d supports only 'same' padding, got {padding!r}")
    pad = (kernel - 1) // 2
    h, wdt = x.shape[1], x.shape[2]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    win = np.stack([xp[:, i:i + h, j:j + wdt]
                    for i in range(kernel) for j in range(kernel)])  # [K*K,C_in,H,W]
    kflat = w.data.reshape(w.shape[0], w.shape[1], kernel * kernel)
    out = Tensor(np.einsum("ock,kchw->ohw", kflat, win, optimize=True))

    def bwd(g):
        dw = None
        if w.requires_grad:
            dw = np.einsum("ohw,kchw->ock", g, win, optimize=True).reshape(w.shape)
        dx = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kernel):
                for j in range(kernel):
                    dxp[:, i:i + h, j:j + wdt] += np.einsum(
                        "oc,ohw->chw", w.data[:, :, i, j], g, optimize=True)
            dx = np.ascontiguousarray(dxp[:, pad:pad + h, pad:pad + wdt])
        return [(x, dx), (w, dw)]

    return _record("conv2d", (x, w), out, bwd)


def depthwise_conv1d(x: Tensor, w: Tensor, dilation: int = 1,
                     padding: str = "same") -> Tensor:
    """Per-channel 1D convolution [C,T] * [C,K] -> [C,T]; no channel mixing."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[0] != w.shape[0]:
        raise DimensionError(f"depthwise_conv1d shapes x={x.shape} w={w.shape}")
    kernel = w.shape[1]
    if kernel % 2 == 0:
        raise ConfigError(f"depthwise_conv1d kernel must be odd, got {kernel}")
    span = (kernel - 1) * dilation
    if padding == "same":
        pad_l, pad_r = span // 2, span // 2
    elif padding == "causal":
        pad_l, pad_r = span, 0
    else:
        raise ConfigError(f"unknown padding {padding!r}")
    t_len = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (pad_l, pad_r)))
    win = _conv1d_windows(xp, t_len, kernel, dilation)  # [K, C, T]
    out = Tensor(np.einsum("ck,kct->ct", w.data, win, optimize=True))

    def bwd(g):
        dw = np.einsum("ct,kct->ck", g, win, optimize=True) if w.requires_grad else None
        dx = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k in range(kernel):
                dxp[:, k * dilation:k * dilation + t_len] += w.data[:, k:k + 1] * g
            dx = np.ascontiguousarray(dxp[:, pad_l:pad_l + t_len])
        return [(x, dx), (w, dw)]

    return _record("depthwise_conv1d", (x, w), out, bwd)


def depthwise_conv2d(x: Tensor, w: Tensor, dilation: int = 1) -> Tensor:
    """Per-channel 2D convolution [C,H,W] * [C,K,K] -> [C,H,W], same padding."""
    if x.data.ndim != 3 or w.data.ndim != 3 or x.shape[0] != w.shape[0] \
            or w.shape[1] != w.shape[2]:
        raise DimensionError(f"depthwise_conv2d shapes x={x.shape} w={w.shape}")
    kernel = w.shape[1]
    if kernel % 2 == 0:
        raise ConfigError(f"depthwise_conv2d kernel must be odd, got {kernel}")
    pad = (kernel - 1) * dilation // 2
    h, wdt = x.shape[1], x.shape[2]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    win = np.stack([xp[:, i * dilation:i * dilation + h, j * dilation:j * dilation + wdt]
                    for i in range(kernel) for j in range(kernel)])  # [K*K,C,H,W]
    kflat = w.data.reshape(w.shape[0], kernel * kernel)
    out = Tensor(np.einsum("ck,kchw->chw", kflat, win, optimize=True))

    def bwd(g):
        dw = None
        if w.requires_grad:
            dw = np.einsum("chw,kchw->ck", g, win, optimize=True).reshape(w.shape)
        dx = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kernel):
                for j in range(kernel):
                    dxp[:, i * dilation:i * dilation + h, j * dilation:j * dilation + wdt] += \
                        w.data[:, i, j][:, None, None] * g
            dx = np.ascontiguousarray(dxp[:, pad:pad + h, pad:pad + wdt])
        return [(x, dx), (w, dw)]

    return _record("depthwise_conv2d", (x, w), out, bwd)


def avg_pool2d(x: Tensor) -> Tensor:
    """2x2 average pooling on [C,H,W]; H and W must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2d needs even spatial dims, got {x.shape}")
    v = x.data.reshape(c, h // 2, 2, w // 2, 2)
    out = Tensor(v.mean(axis=(2, 4)))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        return [(x, gx)]

    return _record("avg_pool2d", (x,), out, bwd)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling on [C,H,W]."""
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2))

    def bwd(g):
        c, h2, w2 = g.shape
        gx = g.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4))
        return [(x, gx)]

    return _record("upsample2x", (x,), out, bwd)
