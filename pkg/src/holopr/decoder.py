"""Untrained decoder prior: pixelwise 1x1 convolutions, ReLU, and x2 bilinear
upsampling, with hand-written reverse-mode gradients.

The network maps a fixed random latent tensor z of shape (c1, k, l) through
d blocks of conv -> relu -> up2, then a final 1x1 projection to one channel
followed by a sigmoid, producing an image of shape (2^d k, 2^d l) with values
strictly inside (0, 1). Only the convolution kernels and the final projection
are trainable; z never changes after initialization.

The upsampler reuses the imaging module's half-pixel-center bilinear weights
so the whole codebase has a single interpolation convention, and its adjoint
is exactly the transpose of those weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import bilinear_weight_matrix


@dataclass(frozen=True)
class DecoderConfig:
    """Depth, per-layer channel counts c1..c_{d+1}, and the latent grid size."""

    depth: int
    channels: tuple[int, ...]
    latent_shape: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "latent_shape", tuple(int(s) for s in self.latent_shape))
        if self.depth < 1:
            raise ValueError("decoder depth must be >= 1")
        if len(self.channels) != self.depth + 1:
            raise ValueError(
                f"need {self.depth + 1} channel counts for depth {self.depth}, "
                f"got {len(self.channels)}"
            )
        if any(c < 1 for c in self.channels):
            raise ValueError("channel counts must be >= 1")
        if any(s < 1 for s in self.latent_shape):
            raise ValueError("latent grid must be at least 1x1")

    @property
    def output_shape(self) -> tuple[int, int]:
        factor = 2**self.depth
        return (factor * self.latent_shape[0], factor * self.latent_shape[1])

    @classmethod
    def for_output(cls, output_shape, depth: int, channels: int) -> "DecoderConfig":
        """Uniform-channel config whose output matches ``output_shape``."""
        factor = 2**depth
        h, w = output_shape
        if h % factor or w % factor:
            raise ValueError(
                f"output shape {output_shape} is not divisible by 2^depth = {factor}"
            )
        return cls(
            depth=depth,
            channels=(channels,) * (depth + 1),
            latent_shape=(h // factor, w // factor),
        )


@dataclass
class DecoderParams:
    """Trainable state: one (c_out, c_in) kernel per block plus the head row."""

    kernels: list[np.ndarray]
    head: np.ndarray

    def copy(self) -> "DecoderParams":
        return DecoderParams(kernels=[k.copy() for k in self.kernels], head=self.head.copy())

    def as_list(self) -> list[np.ndarray]:
        return [*self.kernels, self.head]


@dataclass(frozen=True)
class LatentInput:
    """The fixed network input; immutable after creation."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)


@dataclass
class DecoderCache:
    """Forward-pass activations needed by the backward pass."""

    block_inputs: list[np.ndarray]  # h_0 = z, h_1, ..., h_d
    preacts: list[np.ndarray]  # a_i before ReLU, i = 1..d
    pre_sigmoid: np.ndarray
    output: np.ndarray


def init_decoder(cfg: DecoderConfig, seed: int) -> tuple[DecoderParams, LatentInput]:
    """Draw z ~ U[0, 0.1] and kernels ~ U[-1/sqrt(c_in), 1/sqrt(c_in)].

    Draw order is fixed (latent, kernels 1..d, head) so a seed pins every
    parameter bit for bit.
    """
    rng = np.random.default_rng(seed)
    z = 0.1 * rng.random((cfg.channels[0], *cfg.latent_shape))
    kernels = []
    for i in range(cfg.depth):
        c_in, c_out = cfg.channels[i], cfg.channels[i + 1]
        bound = 1.0 / np.sqrt(c_in)
        kernels.append(rng.uniform(-bound, bound, size=(c_out, c_in)))
    head_bound = 1.0 / np.sqrt(cfg.channels[-1])
    head = rng.uniform(-head_bound, head_bound, size=(1, cfg.channels[-1]))
    return DecoderParams(kernels=kernels, head=head), LatentInput(z=z)


def conv1x1_forward(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-pixel linear map: out[o] = sum_i kernel[o, i] * x[i]; no bias."""
    if x.ndim != 3 or kernel.ndim != 2 or kernel.shape[1] != x.shape[0]:
        raise ValueError(
            f"channel mismatch: kernel {kernel.shape} applied to input {x.shape}"
        )
    return np.tensordot(kernel, x, axes=([1], [0]))


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Bilinear x2 upsampling of a (c, H, W) tensor; a linear operator."""
    if x.ndim != 3:
        raise ValueError(f"expected (c, H, W) input, got shape {x.shape}")
    _, h, w = x.shape
    w_rows = bilinear_weight_matrix(h, 2 * h)
    w_cols = bilinear_weight_matrix(w, 2 * w)
    return np.einsum("ij,cjk,lk->cil", w_rows, x, w_cols, optimize=True)


def upsample2_adjoint(grad: np.ndarray) -> np.ndarray:
    """Exact transpose of :func:`upsample2_forward`."""
    if grad.ndim != 3 or grad.shape[1] % 2 or grad.shape[2] % 2:
        raise ValueError(f"expected (c, 2H, 2W) gradient, got shape {grad.shape}")
    _, h2, w2 = grad.shape
    w_rows = bilinear_weight_matrix(h2 // 2, h2)
    w_cols = bilinear_weight_matrix(w2 // 2, w2)
    return np.einsum("ji,cjk,kl->cil", w_rows, grad, w_cols, optimize=True)


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decoder_forward(params: DecoderParams, latent: LatentInput) -> tuple[np.ndarray, DecoderCache]:
    """Run the network; returns the output image and the activation cache."""
    h = np.asarray(latent.z, dtype=np.float64)
    block_inputs = [h]
    preacts = []
    for kernel in params.kernels:
        a = conv1x1_forward(h, kernel)
        preacts.append(a)
        h = upsample2_forward(np.maximum(a, 0.0))
        block_inputs.append(h)
    t = conv1x1_forward(h, params.head)[0]
    x = _sigmoid(t)
    return x, DecoderCache(block_inputs=block_inputs, preacts=preacts, pre_sigmoid=t, output=x)


def decoder_backward(
    params: DecoderParams, latent: LatentInput, cache: DecoderCache, upstream: np.ndarray
) -> DecoderParams:
    """Exact reverse-mode gradients of the kernels and head.

    ``upstream`` is dObjective/dOutput. ReLU uses subgradient 0 at exactly 0.
    Returns a DecoderParams carrying the gradients (same shapes).
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.output.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match output {cache.output.shape}"
        )
    if len(cache.preacts) != len(params.kernels):
        raise ValueError("cache does not match the parameter structure")
    out = cache.output
    dt = upstream * out * (1.0 - out)
    h_last = cache.block_inputs[-1]
    if h_last.shape[1:] != out.shape:
        raise ValueError("stale cache: activation shapes do not match")
    grad_head = np.tensordot(dt[None, :, :], h_last, axes=([1, 2], [1, 2]))
    dh = params.head.T @ dt.reshape(1, -1)
    dh = dh.reshape(params.head.shape[1], *out.shape)
    grad_kernels: list[np.ndarray] = [np.empty(0)] * len(params.kernels)
    for i in range(len(params.kernels) - 1, -1, -1):
        dr = upsample2_adjoint(dh)
        da = dr * (cache.preacts[i] > 0.0)
        grad_kernels[i] = np.tensordot(da, cache.block_inputs[i], axes=([1, 2], [1, 2]))
        dh = np.tensordot(params.kernels[i].T, da, axes=([1], [0]))
    return DecoderParams(kernels=grad_kernels, head=grad_head)


def save_decoder(params: DecoderParams, latent: LatentInput, prefix) -> Path:
    """Checkpoint all kernels, the head, and the latent to flat binary + JSON.

    Arrays are concatenated in a fixed order as little-endian float64 in
    <prefix>.bin; <prefix>.json records the shapes for reloading.
    """
    prefix = Path(prefix)
    arrays = [("latent", latent.z)]
    arrays += [(f"kernel_{i}", k) for i, k in enumerate(params.kernels)]
    arrays.append(("head", params.head))
    manifest = {"arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays]}
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return json_path


def load_decoder(prefix) -> tuple[DecoderParams, LatentInput]:
    """Read a checkpoint written by :func:`save_decoder`."""
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    raw = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    arrays = {}
    offset = 0
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        arrays[entry["name"]] = raw[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != raw.size:
        raise ValueError("checkpoint binary does not match its manifest")
    kernels = [arrays[f"kernel_{i}"] for i in range(len(arrays) - 2)]
    return DecoderParams(kernels=kernels, head=arrays["head"]), LatentInput(z=arrays["latent"])
