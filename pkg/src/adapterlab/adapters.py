"""Residual adapter architectures and the parameter-budget solver.

Five adapter kinds exist. The three 1D kinds (linear bottleneck, dilated
conv stack with a squeeze-excite gate, transformer block) host inside the
autoregressive backbone; the two 2D kinds (conv stack without SE, transformer
on flattened spatial tokens) host inside the UNet. Every kind is a residual
module whose up-projection starts at zero, so a freshly built adapter is an
exact identity and the frozen host is untouched at step 0.

Parameter shapes come from a single table (:func:`parameter_shapes`) used by
both construction and counting, so the budget solver can dry-count without
allocating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import tensor as T
from .errors import BudgetError, ConfigError
from .rng import RngState
from .tensor import Tensor

KERNEL = 3
SE_REDUCTION = 4
FFN_MULT = 4
DEFAULT_DROPOUT = 0.1
DEFAULT_HEADS = 4
DEFAULT_BLOCKS = 3


class AdapterKind(Enum):
    LINEAR_BOTTLENECK = "linear"
    CONV_RESIDUAL_SE = "conv_se"
    TRANSFORMER = "transformer"
    CONV_RESIDUAL_2D = "conv_2d"
    TRANSFORMER_2D = "transformer_2d"


CONV_KINDS = {AdapterKind.CONV_RESIDUAL_SE, AdapterKind.CONV_RESIDUAL_2D}
TRANSFORMER_KINDS = {AdapterKind.TRANSFORMER, AdapterKind.TRANSFORMER_2D}
KINDS_2D = {AdapterKind.CONV_RESIDUAL_2D, AdapterKind.TRANSFORMER_2D}
KINDS_1D = {AdapterKind.LINEAR_BOTTLENECK, AdapterKind.CONV_RESIDUAL_SE,
            AdapterKind.TRANSFORMER}


@dataclass(frozen=True)
class AdapterSpec:
    """Fully determines a trainable adapter."""

    kind: AdapterKind
    model_dim: int
    bottleneck_dim: int
    dropout_p: float = DEFAULT_DROPOUT
    num_heads: int = DEFAULT_HEADS
    num_residual_blocks: int = DEFAULT_BLOCKS
    stereo_expand: bool = False
    causal: bool = False  # causal temporal mixing for AR-hosted adapters
    budget_warning: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.model_dim < 1 or self.bottleneck_dim < 1:
            raise ConfigError(f"dims must be positive: {self}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.kind in TRANSFORMER_KINDS:
            if self.bottleneck_dim % self.num_heads != 0:
                raise ConfigError(
                    f"bottleneck_dim {self.bottleneck_dim} not divisible by "
                    f"num_heads {self.num_heads}")
        if self.kind in CONV_KINDS and self.num_residual_blocks < 1:
            raise ConfigError("num_residual_blocks must be >= 1")


def parameter_shapes(spec: AdapterSpec) -> dict:
    """Name -> shape map of every trainable tensor of the adapter."""
    d, b = spec.model_dim, spec.bottleneck_dim
    k = spec.kind
    if k is AdapterKind.LINEAR_BOTTLENECK:
        return {"down.weight": (d, b), "down.bias": (b,),
                "up.weight": (b, d), "up.bias": (d,)}
    if k is AdapterKind.CONV_RESIDUAL_SE:
        shapes = {"down.weight": (b, d, KERNEL), "down.bias": (b,)}
        for i in range(spec.num_residual_blocks):
            shapes[f"block{i}.weight"] = (b, KERNEL)
            shapes[f"block{i}.bias"] = (b,)
        s = max(1, b // SE_REDUCTION)
        shapes.update({"se.w1": (b, s), "se.b1": (s,),
                       "se.w2": (s, b), "se.b2": (b,)})
        shapes.update({"up.weight": (d, b, KERNEL), "up.bias": (d,)})
        return shapes
    if k is AdapterKind.CONV_RESIDUAL_2D:
        shapes = {"down.weight": (b, d, KERNEL, KERNEL), "down.bias": (b,)}
        for i in range(spec.num_residual_blocks):
            shapes[f"block{i}.weight"] = (b, KERNEL, KERNEL)
            shapes[f"block{i}.bias"] = (b,)
        shapes.update({"up.weight": (d, b, KERNEL, KERNEL), "up.bias": (d,)})
        return shapes
    if k in TRANSFORMER_KINDS:
        h = FFN_MULT * b
        return {
            "down.weight": (d, b),  # bias-free: the layernorm right after absorbs it
            "ln1.gamma": (b,), "ln1.beta": (b,),
            "attn.wq": (b, b), "attn.bq": (b,),
            "attn.wk": (b, b), "attn.bk": (b,),
            "attn.wv": (b, b), "attn.bv": (b,),
            "attn.wo": (b, b), "attn.bo": (b,),
            "ln2.gamma": (b,), "ln2.beta": (b,),
            "ffn.w1": (b, h), "ffn.b1": (h,),
            "ffn.w2": (h, b), "ffn.b2": (b,),
            "up.weight": (b, d), "up.bias": (d,),
        }
    raise ConfigError(f"unknown adapter kind {k}")


def count_for_spec(spec: AdapterSpec) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(spec).values())


def _init_parameters(spec: AdapterSpec, rng: RngState) -> dict:
    # conv-layout tensors are [C_out, C_in?, K...]; matmul-layout are [in, out]
    conv_layout = spec.kind in CONV_KINDS
    shapes = parameter_shapes(spec)
    params = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.startswith("up.") or name.endswith((".bias", ".beta", ".b1", ".b2",
                                                    ".bq", ".bk", ".bv", ".bo")):
            data = np.zeros(shape)
        elif name.endswith(".gamma"):
            data = np.ones(shape)
        else:
            if conv_layout and name.endswith(".weight"):
                fan_in = int(np.prod(shape[1:]))
            else:
                fan_in = shape[0]
            data = rng.child(name).normal(shape, std=1.0 / np.sqrt(fan_in))
        params[name] = Tensor(data, requires_grad=True)
    return params


class AdapterModule:
    """Base: named parameter map plus a shape-preserving residual forward."""

    def __init__(self, spec: AdapterSpec, rng: RngState):
        self.spec = spec
        self.parameters = _init_parameters(spec, rng)
        self.parameter_count = sum(t.size for t in self.parameters.values())

    def forward(self, x: Tensor, rng: RngState | None = None,
                training: bool = False) -> Tensor:
        raise NotImplementedError

    def zero_grad(self):
        for t in self.parameters.values():
            t.zero_grad()

    def _drop(self, x, rng, training):
        if training and self.spec.dropout_p > 0.0:
            if rng is None:
                raise ConfigError("training forward with dropout needs an rng")
            return T.dropout(x, self.spec.dropout_p, rng, training=True)
        return x


class LinearBottleneckAdapter(AdapterModule):
    """x + up(dropout(gelu(down(x)))); optional stereo duplication."""

    def forward(self, x, rng=None, training=False):
        p = self.parameters
        core_in = x
        if self.spec.stereo_expand and x.data.ndim == 3:
            if x.shape[0] != 2:
                raise ConfigError(f"stereo input must have 2 channels, got {x.shape}")
            core_in = T.mean_axes(x, (0,))
        h = T.add(T.matmul(core_in, p["down.weight"]), p["down.bias"])
        h = self._drop(T.gelu(h), rng, training)
        delta = T.add(T.matmul(h, p["up.weight"]), p["up.bias"])
        if self.spec.stereo_expand and x.data.ndim == 3:
            t_len, d = delta.shape
            one = T.reshape(delta, (1, t_len, d))
            delta = T.concat([one, one], axis=0)
        return T.add(x, delta)


class ConvResidualAdapter1D(AdapterModule):
    """Conv bottleneck with dilated depthwise residual units and an SE gate.

    Operates on [T, model_dim] sequences; features become conv channels.
    """

    def _padding(self):
        return "causal" if self.spec.causal else "same"

    def residual_stack(self, u: Tensor) -> Tensor:
        """The dilated residual units alone (receptive field 1 + 2*sum(dilations))."""
        p = self.parameters
        pad = self._padding()
        for i in range(self.spec.num_residual_blocks):
            v = T.depthwise_conv1d(T.gelu(u), p[f"block{i}.weight"],
                                   dilation=2 ** i, padding=pad)
            u = T.add(u, T.channel_bias(v, p[f"block{i}.bias"]))
        return u

    def se_gate(self, u: Tensor) -> Tensor:
        """Global-pool SE gate: one sigmoid weight per channel."""
        p = self.parameters
        pooled = T.reshape(T.mean_axes(u, (1,)), (1, self.spec.bottleneck_dim))
        z = T.gelu(T.add(T.matmul(pooled, p["se.w1"]), p["se.b1"]))
        gate = T.sigmoid(T.add(T.matmul(z, p["se.w2"]), p["se.b2"]))
        return T.reshape(gate, (self.spec.bottleneck_dim,))

    def _apply_se(self, u: Tensor) -> Tensor:
        if not self.spec.causal:
            return T.channel_scale(u, self.se_gate(u))
        # causal hosts pool over the prefix only, so generation can stream
        p = self.parameters
        pooled = T.transpose(T.cummean_time(u), (1, 0))  # [T, b]
        z = T.gelu(T.add(T.matmul(pooled, p["se.w1"]), p["se.b1"]))
        gate = T.sigmoid(T.add(T.matmul(z, p["se.w2"]), p["se.b2"]))
        return T.mul(u, T.transpose(gate, (1, 0)))

    def forward(self, x, rng=None, training=False):
        p = self.parameters
        pad = self._padding()
        u = T.transpose(x, (1, 0))  # [d, T] channels-first
        u = T.channel_bias(T.conv1d(u, p["down.weight"], 1, pad), p["down.bias"])
        u = self.residual_stack(u)
        u = self._apply_se(u)
        delta = T.channel_bias(T.conv1d(u, p["up.weight"], 1, pad), p["up.bias"])
        delta = self._drop(delta, rng, training)
        return T.add(x, T.transpose(delta, (1, 0)))


class ConvResidualAdapter2D(AdapterModule):
    """2D conv bottleneck for UNet latents [C, H, W]; no SE gate."""

    def residual_stack(self, u: Tensor) -> Tensor:
        p = self.parameters
        for i in range(self.spec.num_residual_blocks):
            v = T.depthwise_conv2d(T.gelu(u), p[f"block{i}.weight"], dilation=2 ** i)
            u = T.add(u, T.channel_bias(v, p[f"block{i}.bias"]))
        return u

    def forward(self, x, rng=None, training=False):
        p = self.parameters
        u = T.channel_bias(T.conv2d(x, p["down.weight"]), p["down.bias"])
        u = self.residual_stack(u)
        delta = T.channel_bias(T.conv2d(u, p["up.weight"]), p["up.bias"])
        delta = self._drop(delta, rng, training)
        return T.add(x, delta)


class _TransformerCore(AdapterModule):
    def attention(self, h: Tensor, rng=None, training=False) -> Tensor:
        p = self.parameters
        b, heads = self.spec.bottleneck_dim, self.spec.num_heads
        t_len = h.shape[0]
        d_h = b // heads

        def split(t):
            return T.transpose(T.reshape(t, (t_len, heads, d_h)), (1, 0, 2))

        q = split(T.add(T.matmul(h, p["attn.wq"]), p["attn.bq"]))
        k = split(T.add(T.matmul(h, p["attn.wk"]), p["attn.bk"]))
        v = split(T.add(T.matmul(h, p["attn.wv"]), p["attn.bv"]))
        a = T.softmax_attention(q, k, v, causal=self.spec.causal)
        a = T.reshape(T.transpose(a, (1, 0, 2)), (t_len, b))
        return T.add(T.matmul(a, p["attn.wo"]), p["attn.bo"])

    def block(self, h: Tensor, rng=None, training=False) -> Tensor:
        p = self.parameters
        a = self.attention(T.layernorm(h, p["ln1.gamma"], p["ln1.beta"]),
                           rng, training)
        h = T.add(h, self._drop(a, rng, training))
        f = T.layernorm(h, p["ln2.gamma"], p["ln2.beta"])
        f = T.gelu(T.add(T.matmul(f, p["ffn.w1"]), p["ffn.b1"]))
        f = self._drop(f, rng, training)
        f = T.add(T.matmul(f, p["ffn.w2"]), p["ffn.b2"])
        return T.add(h, self._drop(f, rng, training))

    def core(self, seq: Tensor, rng, training) -> Tensor:
        p = self.parameters
        h = T.matmul(seq, p["down.weight"])
        h = self.block(h, rng, training)
        return T.add(T.matmul(h, p["up.weight"]), p["up.bias"])


class TransformerAdapter1D(_TransformerCore):
    """x + up(block(down(x))) on [T, model_dim] sequences."""

    def forward(self, x, rng=None, training=False):
        return T.add(x, self.core(x, rng, training))


class TransformerAdapter2D(_TransformerCore):
    """Flattens [C, H, W] to an H*W sequence of C-dim tokens, then as 1D."""

    def forward(self, x, rng=None, training=False):
        c, h, w = x.shape
        seq = T.reshape(T.transpose(x, (1, 2, 0)), (h * w, c))
        delta = self.core(seq, rng, training)
        delta = T.transpose(T.reshape(delta, (h, w, c)), (2, 0, 1))
        return T.add(x, delta)


_BUILDERS = {
    AdapterKind.LINEAR_BOTTLENECK: LinearBottleneckAdapter,
    AdapterKind.CONV_RESIDUAL_SE: ConvResidualAdapter1D,
    AdapterKind.CONV_RESIDUAL_2D: ConvResidualAdapter2D,
    AdapterKind.TRANSFORMER: TransformerAdapter1D,
    AdapterKind.TRANSFORMER_2D: TransformerAdapter2D,
}


def build_adapter(spec: AdapterSpec, rng: RngState) -> AdapterModule:
    return _BUILDERS[spec.kind](spec, rng)


def build_linear_adapter(spec: AdapterSpec, rng: RngState) -> AdapterModule:
    if spec.kind is not AdapterKind.LINEAR_BOTTLENECK:
        raise ConfigError(f"build_linear_adapter got kind {spec.kind}")
    return build_adapter(spec, rng)


def build_conv_adapter(spec: AdapterSpec, rng: RngState) -> AdapterModule:
    if spec.kind not in CONV_KINDS:
        raise ConfigError(f"build_conv_adapter got kind {spec.kind}")
    return build_adapter(spec, rng)


def build_transformer_adapter(spec: AdapterSpec, rng: RngState) -> AdapterModule:
    if spec.kind not in TRANSFORMER_KINDS:
        raise ConfigError(f"build_transformer_adapter got kind {spec.kind}")
    return build_adapter(spec, rng)


def count_parameters(module: AdapterModule) -> int:
    """Exact count of trainable scalars in a constructed adapter."""
    return sum(t.size for t in module.parameters.values())


def heads_for_bottleneck(b: int, preferred: int = DEFAULT_HEADS) -> int:
    """Largest head count in {preferred, preferred/2, ..., 1} dividing b."""
    h = preferred
    while h > 1 and b % h != 0:
        h //= 2
    return max(h, 1)


def _spec_for(kind: AdapterKind, model_dim: int, b: int, **kw) -> AdapterSpec:
    if kind in TRANSFORMER_KINDS:
        kw.setdefault("num_heads", heads_for_bottleneck(b))
    return AdapterSpec(kind=kind, model_dim=model_dim, bottleneck_dim=b, **kw)


def solve_bottleneck_for_budget(kind: AdapterKind, model_dim: int,
                                target_params: int, tolerance_frac: float = 0.02,
                                **spec_kw) -> AdapterSpec:
    """Pick the bottleneck whose dry-constructed count lands closest to target.

    Counts are strictly increasing in the bottleneck, so an exponential bracket
    plus bisection finds the crossing; the closer neighbour wins. If even that
    misses by more than tolerance_frac the spec comes back flagged.
    """

    def count(b):
        return count_for_spec(_spec_for(kind, model_dim, b, **spec_kw))

    lo_count = count(1)
    if target_params < lo_count:
        raise BudgetError(
            f"target {target_params} below minimum constructible count "
            f"{lo_count} for {kind.value} at model_dim {model_dim}")
    lo, hi = 1, 2
    while count(hi) < target_params:
        lo, hi = hi, hi * 2
        if hi > 1 << 24:
            raise BudgetError(f"target {target_params} out of searchable range")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) < target_params:
            lo = mid
        else:
            hi = mid
    # lo has count < target <= count(hi) (or hi == 1)
    best = min((hi, lo) if lo >= 1 else (hi,),
               key=lambda b: (abs(count(b) - target_params), b))
    achieved = count(best)
    warn = abs(achieved - target_params) > tolerance_frac * target_params
    return replace(_spec_for(kind, model_dim, best, **spec_kw), budget_warning=warn)
