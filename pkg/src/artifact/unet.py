"""Multi-scale encoder-decoder artifact-prediction network and its
single-scale ablation, built on the engine ops in :mod:`artifact.nn`.

The multi-scale network stacks stages of Conv3x3 + BatchNorm + ReLU blocks.
Each encoder stage ends in a 2x2 max pool and doubles the channel width of
the next stage; each decoder step unpools (reusing the encoder's pool
switches at that scale, tiled along channels, or nearest-neighbor if
configured), concatenates the encoder output of the same scale, and runs
another stage whose first conv reduces back to the scale width. A terminal
stage of two blocks and a final 1x1 convolution produce the single-channel
prediction. The single-scale variant is a plain chain of 18 blocks at a
fixed width with the same final 1x1 conv and no pooling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .nn import (
    BNParams,
    batch_norm,
    batch_norm_backward,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    max_pool_2x2,
    max_pool_2x2_backward,
    mse_loss,
    relu,
    relu_backward,
    sgd_momentum_step,
    unpool_2x2,
    unpool_2x2_backward,
    xavier_init,
)

MULTI_SCALE = "multi_scale"
SINGLE_SCALE = "single_scale"


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative description of a network to build.

    ``skip`` selects how encoder outputs rejoin the decoder: ``concat``
    (the default, concatenation along channels before the decoder stage)
    or ``add`` (the additive residual form, summed onto the decoder stage
    output at the same scale; available but untuned).
    """

    n_scales: int = 5
    layers_per_stage: int = 4
    base_channels: int = 64
    input_size: tuple = (256, 256)
    mode: str = MULTI_SCALE
    upsample: str = "switch"        # "switch" | "nearest"
    single_scale_depth: int = 18
    skip: str = "concat"            # "concat" | "add"

    def validate(self) -> None:
        if self.mode not in (MULTI_SCALE, SINGLE_SCALE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.upsample not in ("switch", "nearest"):
            raise ValueError(f"unknown upsample {self.upsample!r}")
        if self.skip not in ("concat", "add"):
            raise ValueError(f"unknown skip {self.skip!r}")
        if self.n_scales < 1 or self.layers_per_stage < 1 or self.base_channels < 1:
            raise ValueError("n_scales, layers_per_stage and base_channels "
                             "must be positive")
        H, W = self.input_size
        div = 2 ** (self.n_scales - 1)
        if self.mode == MULTI_SCALE and (H % div or W % div):
            raise ValueError(
                f"input size {H}x{W} not divisible by 2^{self.n_scales - 1}")

    def encoder_widths(self) -> list:
        """Channel width at each scale: base * 2^s."""
        return [self.base_channels * 2 ** s for s in range(self.n_scales)]


class ConvBlock:
    """Conv + BatchNorm + ReLU unit; BN/ReLU are dropped for the final
    1x1 projection."""

    def __init__(self, name, kernel, n_in, n_out, seed, dtype,
                 with_bn=True, with_relu=True):
        self.name = name
        self.conv = xavier_init((kernel, kernel, n_in, n_out), seed, dtype)
        self.bn = (BNParams(np.ones(n_out, dtype), np.zeros(n_out, dtype))
                   if with_bn else None)
        self.with_relu = with_relu
        self._cache = None
        self.grads = {}

    def forward(self, x, mode):
        out, conv_cache = conv2d(x, self.conv)
        bn_cache = relu_mask = None
        if self.bn is not None:
            out, bn_cache = batch_norm(out, self.bn, mode)
        if self.with_relu:
            out, relu_mask = relu(out)
        self._cache = (conv_cache, bn_cache, relu_mask)
        return out

    def backward(self, grad):
        conv_cache, bn_cache, relu_mask = self._cache
        if self.with_relu:
            grad = relu_backward(grad, relu_mask)
        if self.bn is not None:
            grad, dgamma, dbeta = batch_norm_backward(grad, bn_cache)
            self.grads[f"{self.name}.gamma"] = dgamma
            self.grads[f"{self.name}.beta"] = dbeta
        grad, dw, db = conv2d_backward(grad, conv_cache)
        self.grads[f"{self.name}.w"] = dw
        self.grads[f"{self.name}.b"] = db
        return grad

    def parameters(self):
        out = {f"{self.name}.w": self.conv.weights,
               f"{self.name}.b": self.conv.bias}
        if self.bn is not None:
            out[f"{self.name}.gamma"] = self.bn.gamma
            out[f"{self.name}.beta"] = self.bn.beta
        return out

    def buffers(self):
        if self.bn is None:
            return {}
        return {f"{self.name}.running_mean": self.bn.running_mean,
                f"{self.name}.running_var": self.bn.running_var}


class Network:
    """An instantiated network: blocks grouped by role plus the transient
    pool switches and skip tensors recorded during forward."""

    def __init__(self, spec, enc_stages, bottom, dec_stages, terminal, final):
        self.spec = spec
        self.enc_stages = enc_stages
        self.bottom = bottom
        self.dec_stages = dec_stages
        self.terminal = terminal
        self.final = final
        self._pool_switches = []
        self._up_switches = []
        self._splits = []

    def _blocks(self):
        for stage in self.enc_stages:
            yield from stage
        yield from self.bottom
        for stage in self.dec_stages:
            yield from stage
        yield from self.terminal
        yield self.final

    def forward(self, x, mode="train"):
        H, W = self.spec.input_size
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (H, W):
            raise ValueError(
                f"expected input of shape (N, 1, {H}, {W}), got {x.shape}")
        self._pool_switches = []
        self._up_switches = []
        self._splits = []
        skips = []
        h = x
        for stage in self.enc_stages:
            for blk in stage:
                h = blk.forward(h, mode)
            skips.append(h)
            h, sw = max_pool_2x2(h)
            self._pool_switches.append(sw)
        for blk in self.bottom:
            h = blk.forward(h, mode)
        for i, stage in enumerate(self.dec_stages):
            s = len(self.enc_stages) - 1 - i
            if self.spec.upsample == "switch":
                sw = np.concatenate([self._pool_switches[s]] * 2, axis=1)
                h = unpool_2x2(h, sw)
                self._up_switches.append(sw)
            else:
                h = np.repeat(np.repeat(h, 2, axis=2), 2, axis=3)
                self._up_switches.append(None)
            if self.spec.skip == "concat":
                h, split = concat_channels(h, skips[s])
                self._splits.append(split)
                for blk in stage:
                    h = blk.forward(h, mode)
            else:
                for blk in stage:
                    h = blk.forward(h, mode)
                h = h + skips[s]    # additive residual at equal scale
                self._splits.append(None)
        for blk in self.terminal:
            h = blk.forward(h, mode)
        return self.final.forward(h, mode)

    def backward(self, grad):
        g = self.final.backward(grad)
        for blk in reversed(self.terminal):
            g = blk.backward(g)
        skip_grads = [None] * len(self.enc_stages)
        for i in reversed(range(len(self.dec_stages))):
            s = len(self.enc_stages) - 1 - i
            if self.spec.skip == "concat":
                for blk in reversed(self.dec_stages[i]):
                    g = blk.backward(g)
                g, g_skip = concat_channels_backward(g, self._splits[i])
                skip_grads[s] = g_skip
            else:
                skip_grads[s] = g   # addition passes the gradient through
                for blk in reversed(self.dec_stages[i]):
                    g = blk.backward(g)
            if self.spec.upsample == "switch":
                g = unpool_2x2_backward(g, self._up_switches[i])
            else:
                N, C, H2, W2 = g.shape
                g = g.reshape(N, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5))
        for blk in reversed(self.bottom):
            g = blk.backward(g)
        for s in reversed(range(len(self.enc_stages))):
            g = max_pool_2x2_backward(g, self._pool_switches[s])
            if skip_grads[s] is not None:
                g = g + skip_grads[s]
            for blk in reversed(self.enc_stages[s]):
                g = blk.backward(g)
        return g

    def parameters(self):
        out = {}
        for blk in self._blocks():
            out.update(blk.parameters())
        return out

    def gradients(self):
        out = {}
        for blk in self._blocks():
            out.update(blk.grads)
        return out

    def buffers(self):
        out = {}
        for blk in self._blocks():
            out.update(blk.buffers())
        return out

    def predict(self, x, batch_size=8):
        """Inference-mode forward, chunked to bound memory."""
        outs = [self.forward(x[i:i + batch_size], mode="infer")
                for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)


def build_network(spec: NetworkSpec, seed=0, dtype=np.float32) -> Network:
    """Instantiate the network described by ``spec`` with Xavier-initialized
    convolutions and fresh batch-norm state."""
    spec.validate()
    seeds = iter(np.random.SeedSequence(seed).spawn(512))

    def stage(name, n_in, width, count):
        blocks = []
        for i in range(count):
            blocks.append(ConvBlock(f"{name}.conv{i}", 3,
                                    n_in if i == 0 else width, width,
                                    next(seeds), dtype))
        return blocks

    if spec.mode == SINGLE_SCALE:
        width = spec.base_channels
        chain = stage("chain", 1, width, spec.single_scale_depth)
        final = ConvBlock("final", 1, width, 1, next(seeds), dtype,
                          with_bn=False, with_relu=False)
        return Network(spec, [], chain, [], [], final)

    widths = spec.encoder_widths()
    L = spec.layers_per_stage
    enc_stages = []
    for s in range(spec.n_scales - 1):
        n_in = 1 if s == 0 else widths[s - 1]
        enc_stages.append(stage(f"enc{s}", n_in, widths[s], L))
    bottom_in = 1 if spec.n_scales == 1 else widths[spec.n_scales - 2]
    bottom = stage("bottom", bottom_in, widths[-1], L)
    dec_stages = []
    for s in range(spec.n_scales - 2, -1, -1):
        dec_in = widths[s + 1] + (widths[s] if spec.skip == "concat" else 0)
        dec_stages.append(stage(f"dec{s}", dec_in, widths[s], L))
    terminal = stage("terminal", spec.base_channels, spec.base_channels, 2)
    final = ConvBlock("final", 1, spec.base_channels, 1, next(seeds), dtype,
                      with_bn=False, with_relu=False)
    return Network(spec, enc_stages, bottom, dec_stages, terminal, final)


def count_parameters(net: Network) -> int:
    return int(sum(p.size for p in net.parameters().values()))


# ---------------------------------------------------------------------------
# receptive fields

class LayerRF(NamedTuple):
    name: str
    kernel: int
    stride: float
    rf_h: int
    rf_w: int


def _layer_plan(spec: NetworkSpec):
    """The (name, kernel, stride) sequence along the main path."""
    if spec.mode == SINGLE_SCALE:
        for i in range(spec.single_scale_depth):
            yield f"chain.conv{i}", 3, 1.0
        yield "final", 1, 1.0
        return
    L = spec.layers_per_stage
    for s in range(spec.n_scales - 1):
        for i in range(L):
            yield f"enc{s}.conv{i}", 3, 1.0
        yield f"pool{s}", 2, 2.0
    for i in range(L):
        yield f"bottom.conv{i}", 3, 1.0
    for s in range(spec.n_scales - 2, -1, -1):
        yield f"unpool{s}", 2, 0.5
        if spec.skip == "concat":
            yield f"concat{s}", 1, 1.0
        for i in range(L):
            yield f"dec{s}.conv{i}", 3, 1.0
    for i in range(2):
        yield f"terminal.conv{i}", 3, 1.0
    yield "final", 1, 1.0


def receptive_field(spec: NetworkSpec) -> list:
    """Per-layer receptive field along the encoder-decoder path via the
    standard recursion rf += (k - 1) * jump; jump *= stride. Unpooling is
    treated as a stride-1/2 layer."""
    spec.validate()
    rows = []
    rf = 1.0
    jump = 1.0
    for name, kernel, stride in _layer_plan(spec):
        rf = rf + (kernel - 1) * jump
        jump = jump * stride
        rows.append(LayerRF(name, kernel, stride, int(round(rf)), int(round(rf))))
    return rows


def effective_receptive_field(spec: NetworkSpec) -> tuple:
    """Final receptive field clipped to the input size."""
    rows = receptive_field(spec)
    H, W = spec.input_size
    return min(rows[-1].rf_h, H), min(rows[-1].rf_w, W)


# ---------------------------------------------------------------------------
# training

def lr_schedule(epoch: int, n_epochs: int, lr_start: float = 1e-2,
                lr_end: float = 1e-3) -> float:
    """Logarithmic decay from lr_start to lr_end across the epochs."""
    if n_epochs <= 1:
        return lr_start
    t = epoch / (n_epochs - 1)
    return 10.0 ** (np.log10(lr_start) + t * (np.log10(lr_end) - np.log10(lr_start)))


def train_epoch(net: Network, inputs: np.ndarray, labels: np.ndarray,
                velocity: dict, lr: float, momentum: float = 0.9,
                batch_size: int = 3, seed=0) -> float:
    """One pass of shuffled mini-batch SGD with momentum; returns the
    sample-weighted mean training loss."""
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    order = np.random.default_rng(seed).permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        out = net.forward(inputs[idx], mode="train")
        loss, grad = mse_loss(out, labels[idx])
        net.backward(grad)
        sgd_momentum_step(net.parameters(), net.gradients(), velocity,
                          lr, momentum)
        total += loss * len(idx)
    return total / n
