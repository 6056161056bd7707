"""Reconstruction metrics on denormalized velocity fields (m/s)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import VMAX, VMIN, Dataset, denormalize, make_grid
from .siren import SirenDecoder, reconstruct
from .tensor import DimensionError

K1, K2 = 0.01, 0.03
DEFAULT_RANGE = VMAX - VMIN


class UndefinedRangeError(ValueError):
    """Ground truth is constant, so a range-based peak is zero."""


def _pair(V, Vhat):
    V = np.asarray(V, dtype=np.float64)
    Vhat = np.asarray(Vhat, dtype=np.float64)
    if V.shape != Vhat.shape:
        raise DimensionError(f"shape mismatch {V.shape} vs {Vhat.shape}")
    return V, Vhat


def mse(V, Vhat) -> float:
    V, Vhat = _pair(V, Vhat)
    return float(np.mean((V - Vhat) ** 2))


def psnr(V, Vhat, data_range: float | None = None) -> float:
    """PSNR in dB with the ground truth's own range as peak.

    Returns ``inf`` for identical fields. ``data_range`` overrides the peak
    (e.g. 2500 m/s for cross-sample comparisons).
    """
    V, Vhat = _pair(V, Vhat)
    R = float(V.max() - V.min()) if data_range is None else float(data_range)
    if R <= 0:
        raise UndefinedRangeError("ground truth is constant; PSNR range is zero")
    err = mse(V, Vhat)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(R * R / err)


def _ssim_from_stats(mu_x, mu_y, var_x, var_y, cov, R):
    c1 = (K1 * R) ** 2
    c2 = (K2 * R) ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))


def ssim(V, Vhat, data_range: float | None = None, window: int | None = None) -> float:
    """Structural similarity from whole-field means, variances and covariance.

    ``data_range`` defaults to the ground-truth range, falling back to the
    default velocity span when the truth is constant. ``window`` switches
    to the mean over all ``window x window`` patches.
    """
    V, Vhat = _pair(V, Vhat)
    R = float(V.max() - V.min()) if data_range is None else float(data_range)
    if R <= 0:
        R = DEFAULT_RANGE
    if window is None:
        mu_x, mu_y = V.mean(), Vhat.mean()
        var_x = np.mean((V - mu_x) ** 2)
        var_y = np.mean((Vhat - mu_y) ** 2)
        cov = np.mean((V - mu_x) * (Vhat - mu_y))
        return float(_ssim_from_stats(mu_x, mu_y, var_x, var_y, cov, R))
    wx = sliding_window_view(V, (window, window))
    wy = sliding_window_view(Vhat, (window, window))
    mu_x, mu_y = wx.mean(axis=(-2, -1)), wy.mean(axis=(-2, -1))
    var_x = wx.var(axis=(-2, -1))
    var_y = wy.var(axis=(-2, -1))
    cov = (wx * wy).mean(axis=(-2, -1)) - mu_x * mu_y
    return float(np.mean(_ssim_from_stats(mu_x, mu_y, var_x, var_y, cov, R)))


@dataclass
class SampleMetrics:
    index: int
    family: str
    psnr: float
    ssim: float
    mse: float


def _stats(xs) -> dict:
    a = np.asarray(xs, dtype=np.float64)
    if a.size == 0:
        return {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan}
    with np.errstate(invalid="ignore"):
        return {"mean": float(a.mean()), "std": float(a.std()),
                "min": float(a.min()), "max": float(a.max())}


@dataclass
class MetricReport:
    samples: list[SampleMetrics]
    per_family: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples) -> "MetricReport":
        def summary(group):
            return {
                "count": len(group),
                "psnr": _stats([s.psnr for s in group]),
                "ssim": _stats([s.ssim for s in group]),
                "mse": _stats([s.mse for s in group]),
                "psnr_inf": sum(math.isinf(s.psnr) for s in group),
            }
        fams = list(dict.fromkeys(s.family for s in samples))
        per_family = {f: summary([s for s in samples if s.family == f]) for f in fams}
        return cls(list(samples), per_family, summary(samples))

    def write_samples_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "family", "psnr_db", "ssim", "mse"])
            for s in self.samples:
                w.writerow([s.index, s.family, _fmt(s.psnr), _fmt(s.ssim), _fmt(s.mse)])

    def write_summary_csv(self, path) -> None:
        """One row per family plus an ``Overall`` row, mean and std of each metric."""
        cols = ["family", "count", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std",
                "mse_mean", "mse_std"]
        rows = list(self.per_family.items()) + [("Overall", self.overall)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for name, s in rows:
                w.writerow([name, s["count"]] + [
                    _fmt(s[m][k]) for m in ("psnr", "ssim", "mse") for k in ("mean", "std")])


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def evaluate(dataset: Dataset, decoder: SirenDecoder | None, latents, indices=None,
             fixed_range: float | None = None, ssim_window: int | None = None,
             reconstruct_fn=None) -> MetricReport:
    """Decode every sample on its native grid and score it in m/s.

    ``reconstruct_fn(i) -> normalized (H, W)`` replaces the decoder when
    given (used for stubs and external reconstructions).
    """
    indices = range(len(dataset)) if indices is None else indices
    coords = None
    samples = []
    for i in indices:
        if reconstruct_fn is not None:
            pred = np.asarray(reconstruct_fn(i))
        else:
            if latents is None or i >= len(latents):
                raise KeyError(f"no latent code for sample {i}")
            if coords is None:
                coords = make_grid(dataset.H, dataset.W, decoder.dtype)
            pred = reconstruct(decoder, latents[i], coords)
        pred = denormalize(pred.reshape(dataset.H, dataset.W), dataset.vmin, dataset.vmax)
        V = dataset.fields[i].values
        samples.append(SampleMetrics(
            int(i), dataset.fields[i].family,
            psnr(V, pred, fixed_range),
            ssim(V, pred, fixed_range, ssim_window),
            mse(V, pred)))
    return MetricReport.from_samples(samples)


def compression_ratio(H: int, W: int, latent_dim: int) -> float:
    """Grid values stored per latent value."""
    return (H * W) / latent_dim
