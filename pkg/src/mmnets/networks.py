"""Modality-specific encoder/decoder networks and the image discriminator.

Encoders follow the downsampling pattern conv-BN-ReLU blocks + max pool
with recorded indices; decoders mirror them with unpooling (or nearest
upsampling, or skip connections for the ablation).  All modality nets share
weights across every translation they participate in: a translation is just
an (encoder, decoder) cascade through the shared latent space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import Tensor
from .engine.functional import PoolIndices, RunningStats, ShapeError

SIDE_INFO_MODES = ("pool", "none", "skip")
OUTPUT_ACTIVATIONS = ("linear", "softmax", "bounded")


@dataclass
class ModalitySpec:
    """What a modality looks like at the pixel level and how to decode it."""

    name: str
    channels: int
    side_info: str = "pool"                 # pool | none | skip
    output_activation: str = "linear"       # linear | softmax | bounded

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError(f"modality {self.name}: channels must be >= 1")
        if self.side_info not in SIDE_INFO_MODES:
            raise ValueError(f"modality {self.name}: unknown side_info {self.side_info!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(
                f"modality {self.name}: unknown output_activation {self.output_activation!r}")

    @property
    def decoder_uses_pool_indices(self) -> bool:
        return self.side_info == "pool"


@dataclass
class ArchConfig:
    """Channel widths and depth of the encoder/decoder trunk.

    The desk default (3 stages, widths 16/32/64, 32x32 input) keeps the
    full-scale stage pattern while training in minutes on a CPU.
    """

    stage_widths: tuple = (16, 32, 32)
    convs_per_stage: tuple = (2, 2, 2)
    input_hw: tuple = (32, 32)
    noise_sigma: float = 0.5
    init_sigma: float = 0.02

    def __post_init__(self):
        self.stage_widths = tuple(self.stage_widths)
        self.convs_per_stage = tuple(self.convs_per_stage)
        self.input_hw = tuple(self.input_hw)
        if len(self.stage_widths) != len(self.convs_per_stage):
            raise ValueError("stage_widths and convs_per_stage must align")
        if len(self.stage_widths) < 2:
            raise ValueError("need at least 2 downsampling stages")
        h, w = self.input_hw
        factor = 2 ** len(self.stage_widths)
        if h % factor or w % factor:
            raise ValueError(
                f"input {h}x{w} not divisible by 2^{len(self.stage_widths)} stages")

    @property
    def n_stages(self):
        return len(self.stage_widths)

    @property
    def latent_shape(self):
        h, w = self.input_hw
        f = 2 ** self.n_stages
        return (self.stage_widths[-1], h // f, w // f)


@dataclass
class LatentCode:
    """Bottleneck features plus the encoder's side information.

    `index_stack` holds one PoolIndices per encoder stage, deepest last.
    `skip_stack` carries pre-pool activations (only for the skip ablation).
    """

    features: Tensor
    index_stack: list
    source_modality: str
    skip_stack: list | None = None

    def detach(self):
        return LatentCode(self.features.detach(), self.index_stack,
                          self.source_modality, self.skip_stack)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Conv2d:
    def __init__(self, cin, cout, k, stride, pad, rng, init_sigma, name):
        self.stride, self.pad = stride, pad
        self.weight = Tensor(rng.normal(0.0, init_sigma, (cout, cin, k, k)),
                             requires_grad=True, dtype=np.float32, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout), requires_grad=True, dtype=np.float32,
                           name=f"{name}.bias")

    def __call__(self, x):
        return E.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def params(self):
        return [self.weight, self.bias]

    def arrays(self):
        return {self.weight.name: self.weight.data, self.bias.name: self.bias.data}


class BatchNorm2d:
    def __init__(self, c, name, eps=1e-5, momentum=0.9):
        self.eps = eps
        self.gamma = Tensor(np.ones(c), requires_grad=True, dtype=np.float32,
                            name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(c), requires_grad=True, dtype=np.float32,
                           name=f"{name}.beta")
        self.stats = RunningStats.create(c, momentum=momentum)
        self.name = name

    def __call__(self, x, training):
        return E.batch_norm(x, self.gamma, self.beta, training,
                            running_stats=self.stats, eps=self.eps)

    def params(self):
        return [self.gamma, self.beta]

    def arrays(self):
        return {self.gamma.name: self.gamma.data, self.beta.name: self.beta.data,
                f"{self.name}.running_mean": self.stats.mean,
                f"{self.name}.running_var": self.stats.var}


class _Module:
    """Minimal parameter container; layers register in order."""

    def __init__(self, name):
        self.name = name
        self._layers = []

    def _add(self, layer):
        self._layers.append(layer)
        return layer

    def params(self):
        return [p for layer in self._layers for p in layer.params()]

    def arrays(self):
        out = {}
        for layer in self._layers:
            out.update(layer.arrays())
        return out

    def checksum(self):
        import zlib
        acc = 0
        for key in sorted(self.arrays()):
            acc = zlib.crc32(np.ascontiguousarray(self.arrays()[key]).tobytes(), acc)
        return acc


def _layer_rng(seed, role, stage, conv):
    """Per-layer init stream keyed by architectural position, not modality.

    Layers at the same position draw identical initial weights whenever their
    shapes match, so every modality's encoder starts from the same filters
    (the channel-dependent first layer necessarily differs).  Shared starting
    filters keep pooling argmax positions correlated across modalities, which
    is what makes pooling indices transferable side information.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, role, stage, conv]))


class EncoderNet(_Module):
    def __init__(self, spec: ModalitySpec, arch: ArchConfig, seed):
        super().__init__(f"enc_{spec.name}")
        self.spec, self.arch = spec, arch
        self.stages = []
        cin = spec.channels
        for si, (width, n_convs) in enumerate(zip(arch.stage_widths, arch.convs_per_stage)):
            blocks = []
            for ci in range(n_convs):
                conv = self._add(Conv2d(cin, width, 3, 1, 1,
                                        _layer_rng(seed, 0, si, ci),
                                        arch.init_sigma,
                                        f"{self.name}.s{si}.c{ci}"))
                bn = self._add(BatchNorm2d(width, f"{self.name}.s{si}.b{ci}"))
                blocks.append((conv, bn))
                cin = width
            self.stages.append(blocks)

    def forward(self, x, training=False):
        """Returns (features, index_stack, skip_stack); indices deepest last."""
        if x.shape[1] != self.spec.channels:
            raise ShapeError(
                f"{self.name}: expected {self.spec.channels} input channels, "
                f"got {x.shape[1]}")
        if x.shape[2:] != self.arch.input_hw:
            raise ShapeError(
                f"{self.name}: expected {self.arch.input_hw} input, got {x.shape[2:]}")
        index_stack, skip_stack = [], []
        h = x
        for blocks in self.stages:
            for conv, bn in blocks:
                h = E.relu(bn(conv(h), training))
            skip_stack.append(h)
            h, idx = E.maxpool2d_with_indices(h)
            index_stack.append(idx)
        return h, index_stack, skip_stack


class DecoderNet(_Module):
    def __init__(self, spec: ModalitySpec, arch: ArchConfig, seed):
        super().__init__(f"dec_{spec.name}")
        self.spec, self.arch = spec, arch
        self.stages = []
        widths = arch.stage_widths
        n = arch.n_stages
        for sj in range(n - 1, -1, -1):
            width = widths[sj]
            next_width = widths[sj - 1] if sj > 0 else spec.channels
            cin = width * 2 if spec.side_info == "skip" else width
            blocks = []
            n_convs = arch.convs_per_stage[sj]
            for ci in range(n_convs):
                last_of_net = sj == 0 and ci == n_convs - 1
                cout = width if ci < n_convs - 1 else next_width
                conv = self._add(Conv2d(cin, cout, 3, 1, 1,
                                        _layer_rng(seed, 1, sj, ci),
                                        arch.init_sigma,
                                        f"{self.name}.s{sj}.c{ci}"))
                bn = None
                if not last_of_net:
                    bn = self._add(BatchNorm2d(cout, f"{self.name}.s{sj}.b{ci}"))
                blocks.append((conv, bn))
                cin = cout
            self.stages.append((sj, blocks))

    def forward(self, code: LatentCode, training=False):
        spec = self.spec
        h = code.features
        if spec.side_info == "pool":
            if len(code.index_stack) != self.arch.n_stages:
                raise ShapeError(
                    f"{self.name}: index stack length {len(code.index_stack)} != "
                    f"{self.arch.n_stages} stages")
        if spec.side_info == "skip" and not code.skip_stack:
            raise ShapeError(f"{self.name}: skip decoder needs encoder skip features")
        for sj, blocks in self.stages:
            if spec.side_info == "pool":
                idx = code.index_stack[sj]
                if idx.shape[1] != h.shape[1]:
                    raise ShapeError(
                        f"{self.name}: pooling index channels {idx.shape[1]} "
                        f"incompatible with features {h.shape[1]}")
                h = E.unpool(h, idx, idx.input_hw)
            else:
                h = E.upsample_nearest(h, 2)
                if spec.side_info == "skip":
                    h = E.concat([h, code.skip_stack[sj]], axis=1)
            for conv, bn in blocks:
                h = conv(h)
                if bn is not None:
                    h = E.relu(bn(h, training))
        if spec.output_activation == "softmax":
            h = E.softmax(h, axis=1)
        elif spec.output_activation == "bounded":
            h = E.sigmoid(h)
        return h


class Discriminator(_Module):
    """Patch scorer: stride-2 conv stack ending in a 1-channel linear map."""

    def __init__(self, in_channels, widths, rng, init_sigma=0.02, name="disc"):
        super().__init__(name)
        self.widths = tuple(widths)
        self.layers = []
        cin = in_channels
        for i, width in enumerate(self.widths):
            conv = self._add(Conv2d(cin, width, 4, 2, 1, rng, init_sigma,
                                    f"{name}.c{i}"))
            bn = self._add(BatchNorm2d(width, f"{name}.b{i}")) if i > 0 else None
            self.layers.append((conv, bn))
            cin = width
        self.head = self._add(Conv2d(cin, 1, 1, 1, 0, rng, init_sigma, f"{name}.head"))

    def forward(self, x, training=False):
        h = x
        for conv, bn in self.layers:
            h = conv(h)
            if bn is not None:
                h = bn(h, training)
            h = E.leaky_relu(h, 0.2)
        return self.head(h)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def build_modality_nets(spec: ModalitySpec, arch: ArchConfig, seed):
    """Paired encoder/decoder for one modality, deterministically initialized."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    enc = EncoderNet(spec, arch, rng)
    dec = DecoderNet(spec, arch, rng)
    return enc, dec


def encode(enc: EncoderNet, image, noise_sigma=0.0, rng=None, training=False) -> LatentCode:
    """Forward pass through an encoder; optional zero-mean latent noise.

    Pooling indices are captured before noise, so the side information is
    noise-free.
    """
    features, index_stack, skip_stack = enc.forward(image, training=training)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("encode: noise_sigma > 0 requires an rng")
        noise = rng.normal(0.0, noise_sigma, features.shape).astype(features.dtype)
        features = E.add(features, noise)
    return LatentCode(features=features, index_stack=index_stack,
                      source_modality=enc.spec.name, skip_stack=skip_stack)


def decode(dec: DecoderNet, code: LatentCode, training=False):
    return dec.forward(code, training=training)


def translate(src_enc: EncoderNet, tgt_dec: DecoderNet, image,
              noise_sigma=0.0, rng=None, training=False):
    """Cascade a source encoder with a target decoder (seen or unseen pair)."""
    return decode(tgt_dec, encode(src_enc, image, noise_sigma, rng, training), training)


def fuse_latents(a: LatentCode, b: LatentCode, alpha, indices_from) -> LatentCode:
    """Weighted latent average (1-alpha)*a + alpha*b.

    Side information (indices, skips) is taken from the code whose source
    modality matches `indices_from`.
    """
    if a.features.shape != b.features.shape:
        raise ShapeError(
            f"fuse_latents: feature shapes differ {a.features.shape} vs {b.features.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"fuse_latents: alpha must be in [0, 1], got {alpha}")
    if indices_from == a.source_modality:
        donor = a
    elif indices_from == b.source_modality:
        donor = b
    else:
        raise ValueError(
            f"fuse_latents: indices_from {indices_from!r} matches neither "
            f"{a.source_modality!r} nor {b.source_modality!r}")
    features = E.add(E.mul(a.features, 1.0 - alpha), E.mul(b.features, alpha))
    return LatentCode(features=features, index_stack=donor.index_stack,
                      source_modality=donor.source_modality,
                      skip_stack=donor.skip_stack)


def concat_codes(codes) -> LatentCode:
    """Stack latent codes along the batch axis, side information included.

    Lets one decoder pass serve several sources at once; pooling indices and
    skip features concatenate sample-wise.
    """
    codes = list(codes)
    if len(codes) == 1:
        return codes[0]
    features = E.concat([c.features for c in codes], axis=0)
    index_stack = []
    for level in zip(*[c.index_stack for c in codes]):
        flat = np.concatenate([pi.flat for pi in level], axis=0)
        index_stack.append(PoolIndices(flat, level[0].input_hw, level[0].window))
    skip_stack = None
    if all(c.skip_stack for c in codes):
        skip_stack = [E.concat(list(level), axis=0)
                      for level in zip(*[c.skip_stack for c in codes])]
    return LatentCode(features=features, index_stack=index_stack,
                      source_modality=codes[0].source_modality,
                      skip_stack=skip_stack)


def split_code(code: LatentCode, start, stop) -> LatentCode:
    """Batch-axis slice of a latent code (gradients flow through features)."""
    features = E.slice_batch(code.features, start, stop)
    index_stack = [PoolIndices(pi.flat[start:stop], pi.input_hw, pi.window)
                   for pi in code.index_stack]
    skip_stack = None
    if code.skip_stack:
        skip_stack = [E.slice_batch(s, start, stop) for s in code.skip_stack]
    return LatentCode(features=features, index_stack=index_stack,
                      source_modality=code.source_modality, skip_stack=skip_stack)


def discriminate(disc: Discriminator, image, training=False):
    return disc.forward(image, training=training)


def count_required_networks(n: int, strategy: str):
    """Encoder/decoder counts for n modalities under each wiring strategy."""
    if n < 1:
        raise ValueError(f"count_required_networks: n must be >= 1, got {n}")
    if strategy == "pairwise":
        m = n * (n - 1) // 2
        return m, m
    if strategy == "mmnets":
        return n, n
    raise ValueError(f"count_required_networks: unknown strategy {strategy!r}")
