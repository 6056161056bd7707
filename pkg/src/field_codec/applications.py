"""Things a trained decoder is used for once the latents exist.

Latent interpolation, decoding on denser grids, fitting a latent for a
field the decoder never saw, error maps, and a radial power spectrum with
a small ReLU-versus-sine fitting experiment for spectral bias.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import VMAX, VMIN, VelocityField, denormalize, make_grid
from .siren import DecoderConfig, SirenDecoder, decoder_backward, decoder_forward, init_decoder, reconstruct
from .tensor import (
    DimensionError,
    RngStream,
    linear_backward,
    linear_forward,
    mse_value_and_grad,
)
from .training import AdamState, adam_step, batch_loss_and_grads, init_latents

DEFAULT_ALPHAS = (0.0, 0.17, 0.33, 0.5, 0.67, 0.83, 1.0)


def decode_grid(dec: SirenDecoder, latent, H: int, W: int) -> np.ndarray:
    """Normalized ``(H, W)`` field decoded on the linspace grid."""
    return reconstruct(dec, latent, make_grid(H, W, dec.dtype)).reshape(H, W)


def to_field(norm, vmin=VMIN, vmax=VMAX, family="External") -> VelocityField:
    """Wrap a normalized decode as a velocity field, clamped into range."""
    values = denormalize(np.clip(norm, -1.0, 1.0), vmin, vmax)
    return VelocityField(values, family, vmin, vmax)


@dataclass
class InterpolationResult:
    alphas: list[float]
    decoded: list[np.ndarray]      # normalized (H, W) per alpha
    mse_to_A: list[float]
    mse_to_B: list[float]

    def fields(self, vmin=VMIN, vmax=VMAX) -> list[VelocityField]:
        return [to_field(d, vmin, vmax) for d in self.decoded]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "mse_to_A", "mse_to_B"])
            for a, ma, mb in zip(self.alphas, self.mse_to_A, self.mse_to_B):
                w.writerow([repr(float(a)), repr(ma), repr(mb)])


def lerp(zA: np.ndarray, zB: np.ndarray, alpha: float) -> np.ndarray:
    """``(1 - alpha) zA + alpha zB``, exact at both ends and when ``zA == zB``."""
    t = zA.dtype.type(alpha)
    diff = zB - zA
    if alpha < 0.5:
        return zA + t * diff
    return zB - (zA.dtype.type(1.0) - t) * diff


def interpolate(dec: SirenDecoder, zA, zB, alphas=DEFAULT_ALPHAS, H: int = 70,
                W: int = 70) -> InterpolationResult:
    """Decode ``(1 - a) zA + a zB`` for each ``a`` and compare with the endpoints.

    MSEs are in normalized units against the decoded endpoints, so the
    ``a = 0`` row is exactly zero against A.
    """
    zA = np.asarray(zA, dtype=dec.dtype)
    zB = np.asarray(zB, dtype=dec.dtype)
    d = dec.config.latent_dim
    if zA.shape != (d,) or zB.shape != (d,):
        raise DimensionError(f"latents must have shape ({d},), got {zA.shape} and {zB.shape}")
    alphas = sorted(float(a) for a in alphas)
    if alphas and (alphas[0] < 0 or alphas[-1] > 1):
        raise ValueError("alphas must lie in [0, 1]")
    end_A = decode_grid(dec, zA, H, W)
    end_B = decode_grid(dec, zB, H, W)
    decoded, to_A, to_B = [], [], []
    for a in alphas:
        f = decode_grid(dec, lerp(zA, zB, a), H, W)
        decoded.append(f)
        to_A.append(float(np.mean((f.astype(np.float64) - end_A) ** 2)))
        to_B.append(float(np.mean((f.astype(np.float64) - end_B) ** 2)))
    return InterpolationResult(alphas, decoded, to_A, to_B)


def super_resolve(dec: SirenDecoder, z, H: int, W: int, scale: float | None = None,
                  target: tuple[int, int] | None = None) -> np.ndarray:
    """Decode on a denser grid over the same [-1, 1]^2 domain.

    Give either an integer-ish ``scale`` (output ``round(scale*H) x
    round(scale*W)``) or an explicit ``target`` shape. Output is normalized.
    """
    if target is None:
        s = 1.0 if scale is None else float(scale)
        target = (int(round(s * H)), int(round(s * W)))
    th, tw = target
    if th < H or tw < W:
        raise ValueError(f"target {th}x{tw} is smaller than native {H}x{W}")
    return decode_grid(dec, z, th, tw)


def block_average(field: np.ndarray, factor: int) -> np.ndarray:
    h, w = field.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} not divisible by {factor}")
    return field.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def encode_new(dec: SirenDecoder, target_norm, steps: int = 500, lr: float = 1e-2,
               lam: float = 1e-4, rng: RngStream | None = None, sigma: float = 0.01):
    """Fit a fresh latent to a normalized field with the decoder frozen.

    Returns ``(best_latent, losses)``; ``losses[0]`` is the loss of the
    random initial code, and the returned code has the lowest loss seen.
    """
    target = np.asarray(target_norm, dtype=dec.dtype)
    H, W = target.shape
    coords = make_grid(H, W, dec.dtype)
    rng = rng if rng is not None else RngStream(0)
    z = init_latents(1, dec.config.latent_dim, sigma, rng, dec.dtype)
    opt = AdamState.zeros_like([z], ["latent"], lr=lr)
    flat = target.reshape(1, -1)
    best_z, best = z[0].copy(), math.inf
    losses = []
    for step in range(steps + 1):
        loss, _, d_latent = batch_loss_and_grads(dec, z, coords, flat, lam)
        total = loss.total
        if not math.isfinite(total):
            raise FloatingPointError(f"non-finite loss at step {step}")
        losses.append(total)
        if total < best:
            best, best_z = total, z[0].copy()
        if step == steps:
            break
        adam_step(opt, [z], [d_latent])
    return best_z, losses


def error_map(V, Vhat):
    """``|V - Vhat|`` together with the location and value of its maximum."""
    V = np.asarray(V, dtype=np.float64)
    Vhat = np.asarray(Vhat, dtype=np.float64)
    if V.shape != Vhat.shape:
        raise DimensionError(f"shape mismatch {V.shape} vs {Vhat.shape}")
    err = np.abs(V - Vhat)
    loc = np.unravel_index(int(np.argmax(err)), err.shape)
    return err, tuple(int(i) for i in loc), float(err[loc])


# ---------------------------------------------------------------------------
# spectra

def power_spectrum(field) -> tuple[np.ndarray, np.ndarray]:
    """Radially binned ``|DFT|^2`` of a square field.

    Frequencies are in cycles per domain; bin ``k`` collects every
    ``(kx, ky)`` with ``round(sqrt(kx^2 + ky^2)) == k``. Returns
    ``(bins, mean_power)``.
    """
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise DimensionError(f"power_spectrum needs a square field, got {f.shape}")
    n = f.shape[0]
    power = np.abs(np.fft.fft2(f)) ** 2
    k = np.fft.fftfreq(n) * n
    radius = np.rint(np.hypot(*np.meshgrid(k, k))).astype(int)
    n_bins = radius.max() + 1
    total = np.bincount(radius.ravel(), weights=power.ravel(), minlength=n_bins)
    count = np.bincount(radius.ravel(), minlength=n_bins)
    return np.arange(n_bins), total / np.maximum(count, 1)


def high_frequency_energy(field, cutoff: float | None = None) -> float:
    """Total ``|DFT|^2`` at radii above ``cutoff`` (default half-Nyquist, n/4)."""
    f = np.asarray(field, dtype=np.float64)
    n = f.shape[0]
    cutoff = n / 4 if cutoff is None else cutoff
    power = np.abs(np.fft.fft2(f)) ** 2
    k = np.fft.fftfreq(n) * n
    radius = np.hypot(*np.meshgrid(k, k))
    return float(power[radius > cutoff].sum())


def write_spectrum_csv(path, bins, power) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "power"])
        for b, p in zip(bins, power):
            w.writerow([int(b), repr(float(p))])


def high_frequency_target(n: int, rng: RngStream) -> np.ndarray:
    """Square test image with most of its energy above half-Nyquist."""
    r, c = np.mgrid[0:n, 0:n].astype(np.float64)
    out = 0.3 * np.cos(2 * np.pi * (c + r) / n + float(rng.uniform(0, 2 * np.pi)))
    for _ in range(3):
        radius = float(rng.uniform(n / 4 + 1, n / 2 - 2))
        theta = float(rng.uniform(0, 2 * np.pi))
        kx, ky = np.rint(radius * math.cos(theta)), np.rint(radius * math.sin(theta))
        out += 0.5 * np.cos(2 * np.pi * (kx * c + ky * r) / n + float(rng.uniform(0, 2 * np.pi)))
    return out / np.abs(out).max()


class ReluMLP:
    """Coordinate MLP with ReLU hidden units, shaped like a latent-free decoder."""

    def __init__(self, config: DecoderConfig, rng: RngStream, dtype=np.float32):
        self.config = config
        self.weights, self.biases = [], []
        for o, i in config.layer_shapes():
            bound = 1.0 / math.sqrt(i)  # PyTorch's nn.Linear default
            self.weights.append(rng.uniform(-bound, bound, (o, i), dtype=dtype))
            self.biases.append(rng.uniform(-bound, bound, (o,), dtype=dtype))

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, X):
        acts, pres = [X], []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = linear_forward(W, b, acts[-1])
            pres.append(z)
            acts.append(np.maximum(z, 0))
        return linear_forward(self.weights[-1], self.biases[-1], acts[-1]), (acts, pres)

    def backward(self, cache, dY):
        acts, pres = cache
        grads = []
        dW, db, dA = linear_backward(self.weights[-1], acts[-1], dY)
        grads = [db, dW]
        for k in range(len(pres) - 1, -1, -1):
            dZ = dA * (pres[k] > 0)
            dW, db, dA = linear_backward(self.weights[k], acts[k], dZ)
            grads += [db, dW]
        return grads[::-1]


@dataclass
class SpectralTrial:
    seed: int
    target: np.ndarray
    relu_fit: np.ndarray
    siren_fit: np.ndarray
    relu_high: float
    siren_high: float


def spectral_bias_trial(seed: int, n: int = 32, hidden: int = 64, layers: int = 2,
                        steps: int = 300, lr: float = 1e-3) -> SpectralTrial:
    """Fit a ReLU MLP and a SIREN of identical shape to one high-frequency target.

    Both get ``steps`` full-batch Adam updates at ``lr``. Returns the fits
    and each residual's energy above half-Nyquist.
    """
    rng = RngStream(seed)
    target = high_frequency_target(n, rng)
    coords = make_grid(n, n)
    y = target.reshape(-1, 1).astype(np.float32)
    cfg = DecoderConfig(latent_dim=0, hidden_features=hidden, hidden_layers=layers)

    relu = ReluMLP(cfg, rng.spawn(1))
    opt = AdamState.zeros_like(relu.parameters(), lr=lr)
    for _ in range(steps):
        pred, cache = relu.forward(coords)
        _, dY = mse_value_and_grad(pred, y)
        adam_step(opt, relu.parameters(), relu.backward(cache, dY))
    relu_fit = relu.forward(coords)[0].reshape(n, n)

    siren = init_decoder(cfg, rng.spawn(2))
    empty = np.zeros((0,), dtype=np.float32)
    opt = AdamState.zeros_like(siren.parameters(), lr=lr)
    for _ in range(steps):
        pred, trace = decoder_forward(siren, coords, empty)
        _, dY = mse_value_and_grad(pred, y)
        grads, _ = decoder_backward(siren, trace, dY)
        adam_step(opt, siren.parameters(), grads)
        siren.version += 1
    siren_fit = decode_grid(siren, empty, n, n)

    return SpectralTrial(
        seed, target, relu_fit, siren_fit,
        high_frequency_energy(target - relu_fit),
        high_frequency_energy(target - siren_fit))
