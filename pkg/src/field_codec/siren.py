"""Shared SIREN decoder: coordinates plus a latent code in, one value out.

Layer layout for the default config (input 2 + 256, width 512, 4 hidden):

    sine  258 -> 512
    sine  512 -> 512   (x4)
    linear 512 -> 1

The input row is ``[x, z, latent]``. Since the latent part is the same for
every coordinate of one field, the first layer splits its weight into a
coordinate block and a latent block and projects each latent once per
field instead of once per pixel. The result is identical to concatenating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    DEFAULT_DTYPE,
    DimensionError,
    RngStream,
    linear_backward,
    linear_forward,
    sine_backward,
    sine_forward,
)

COORD_DIM = 2


@dataclass(frozen=True)
class DecoderConfig:
    latent_dim: int = 256
    hidden_features: int = 512
    hidden_layers: int = 4
    omega0: float = 30.0
    coord_dim: int = COORD_DIM

    def __post_init__(self):
        if self.latent_dim < 0 or self.hidden_features < 1 or self.hidden_layers < 0:
            raise ValueError(f"invalid decoder shape: {self}")
        if self.coord_dim != COORD_DIM:
            raise ValueError("only 2-D coordinates are supported")
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")

    @property
    def in_features(self) -> int:
        return self.coord_dim + self.latent_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) for every layer, output head last."""
        h = self.hidden_features
        return [(h, self.in_features)] + [(h, h)] * self.hidden_layers + [(1, h)]


def param_count(config: DecoderConfig) -> int:
    return sum(o * i + o for o, i in config.layer_shapes())


def init_bounds(config: DecoderConfig) -> list[float]:
    """Uniform half-width for each layer's weights and biases."""
    bounds = [1.0 / config.in_features]
    hidden = math.sqrt(6.0 / config.hidden_features) / config.omega0
    bounds += [hidden] * (config.hidden_layers + 1)
    return bounds


@dataclass
class SirenDecoder:
    config: DecoderConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # bumped on every in-place update so stale traces can be detected
    version: int = 0

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def n_sine(self) -> int:
        return self.config.hidden_layers + 1

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; arrays are live references."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def parameter_names(self) -> list[str]:
        names = []
        for k in range(len(self.weights)):
            names += [f"layer{k}.weight", f"layer{k}.bias"]
        return names

    def copy(self) -> "SirenDecoder":
        return SirenDecoder(
            self.config,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.version,
        )

    def astype(self, dtype) -> "SirenDecoder":
        return SirenDecoder(
            self.config,
            [W.astype(dtype) for W in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.version,
        )


def init_decoder(config: DecoderConfig, rng: RngStream, dtype=DEFAULT_DTYPE) -> SirenDecoder:
    """Draw weights and biases uniformly from the SIREN ranges.

    First layer: half-width ``1/d_in``. Hidden layers and the linear head:
    half-width ``sqrt(6/d_in)/omega0``. Biases share their layer's range.
    """
    weights, biases = [], []
    for (o, i), bound in zip(config.layer_shapes(), init_bounds(config)):
        weights.append(rng.uniform(-bound, bound, (o, i), dtype=dtype))
        biases.append(rng.uniform(-bound, bound, (o,), dtype=dtype))
    return SirenDecoder(config, weights, biases)


@dataclass
class ForwardTrace:
    """Cached activations from one forward call."""

    coords: np.ndarray          # (M, 2), shared by every block
    latents: np.ndarray         # (B, d)
    pre: list[np.ndarray]       # pre-activations of each sine layer, (B*M, H)
    act: list[np.ndarray]       # sine outputs, (B*M, H)
    version: int
    n_blocks: int
    block_size: int
    extra: dict = field(default_factory=dict)


def _as_latents(dec: SirenDecoder, latent) -> tuple[np.ndarray, bool]:
    lat = np.asarray(latent, dtype=dec.dtype)
    single = lat.ndim == 1
    lat = np.atleast_2d(lat)
    if lat.ndim != 2 or lat.shape[1] != dec.config.latent_dim:
        raise DimensionError(
            f"latent shape {np.shape(latent)} does not match latent_dim={dec.config.latent_dim}"
        )
    return lat, single


def decoder_forward(dec: SirenDecoder, coords, latent):
    """Evaluate the decoder on a coordinate block for one or more latents.

    ``coords`` is ``(M, 2)``. ``latent`` is ``(d,)`` for a single field or
    ``(B, d)`` for B fields sharing the same coordinates. Returns values of
    shape ``(B*M, 1)`` (block-major) and the trace needed for backward.
    """
    coords = np.asarray(coords, dtype=dec.dtype)
    if coords.ndim != 2 or coords.shape[1] != dec.config.coord_dim:
        raise DimensionError(f"coords must be (M, 2), got {coords.shape}")
    lat, _ = _as_latents(dec, latent)
    B, M = lat.shape[0], coords.shape[0]
    c = dec.config.coord_dim
    w0 = dec.config.omega0

    W0, b0 = dec.weights[0], dec.biases[0]
    coord_part = coords @ W0[:, :c].T                      # (M, H)
    latent_part = linear_forward(W0[:, c:], b0, lat)        # (B, H)
    z = (coord_part[None, :, :] + latent_part[:, None, :]).reshape(B * M, -1)

    pre, act = [z], [sine_forward(w0, z)]
    for k in range(1, dec.n_sine):
        z = linear_forward(dec.weights[k], dec.biases[k], act[-1])
        pre.append(z)
        act.append(sine_forward(w0, z))
    values = linear_forward(dec.weights[-1], dec.biases[-1], act[-1])
    trace = ForwardTrace(coords, lat, pre, act, dec.version, B, M)
    return values, trace


def decoder_backward(dec: SirenDecoder, trace: ForwardTrace, d_values):
    """Backpropagate ``d_values`` (same shape as the forward output).

    Returns ``(param_grads, d_latent)`` where ``param_grads`` lines up with
    ``dec.parameters()`` and ``d_latent`` has shape ``(B, d)``. Gradients
    w.r.t. the coordinates are formed and dropped.
    """
    if trace.version != dec.version:
        raise RuntimeError(
            f"stale trace: recorded at decoder version {trace.version}, "
            f"decoder is now at {dec.version}"
        )
    B, M = trace.n_blocks, trace.block_size
    dY = np.asarray(d_values, dtype=dec.dtype).reshape(-1, 1)
    if dY.shape[0] != B * M:
        raise DimensionError(f"d_values has {dY.shape[0]} rows, trace has {B * M}")
    w0 = dec.config.omega0
    c = dec.config.coord_dim

    n = len(dec.weights)
    dWs, dbs = [None] * n, [None] * n
    dWs[-1], dbs[-1], dA = linear_backward(dec.weights[-1], trace.act[-1], dY)
    for k in range(dec.n_sine - 1, 0, -1):
        dZ = sine_backward(w0, trace.pre[k], dA)
        dWs[k], dbs[k], dA = linear_backward(dec.weights[k], trace.act[k - 1], dZ)

    dZ0 = sine_backward(w0, trace.pre[0], dA)               # (B*M, H)
    W0 = dec.weights[0]
    block_sums = dZ0.reshape(B, M, -1).sum(axis=1)          # (B, H)
    dW_coord = dZ0.T @ np.tile(trace.coords, (B, 1))        # (H, 2)
    dW_latent = block_sums.T @ trace.latents                # (H, d)
    dWs[0] = np.concatenate([dW_coord, dW_latent], axis=1)
    dbs[0] = block_sums.sum(axis=0)
    d_latent = block_sums @ W0[:, c:]
    _d_coords = dZ0 @ W0[:, :c]  # noqa: F841  coordinate gradients are not used

    grads = []
    for dW, db in zip(dWs, dbs):
        grads += [dW, db]
    return grads, d_latent


def reconstruct(dec: SirenDecoder, latent, coords) -> np.ndarray:
    """Decoder values for one latent at ``coords``, as a flat vector."""
    values, _ = decoder_forward(dec, coords, latent)
    return values[:, 0]
