import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from field_codec.applications import (
    InterpolationResult,
    block_average,
    decode_grid,
    encode_new,
    error_map,
    high_frequency_energy,
    interpolate,
    power_spectrum,
    spectral_bias_trial,
    super_resolve,
)
from field_codec.data import build_dataset, denormalize
from field_codec.metrics import psnr
from field_codec.siren import DecoderConfig, init_decoder
from field_codec.tensor import DimensionError, RngStream
from field_codec.training import TrainConfig, Trainer, init_latents

SMALL = DecoderConfig(latent_dim=8, hidden_features=32, hidden_layers=2)


@pytest.fixture(scope="module")
def dec():
    return init_decoder(SMALL, RngStream(0))


@pytest.fixture(scope="module")
def trained():
    ds = build_dataset(1, 12, 12, seed=8)
    tr = Trainer.create(len(ds), SMALL, TrainConfig(epochs=400, batch_size=5, lr=1e-3, seed=1))
    tr.fit(ds)
    return ds, tr


# --- interpolation ----------------------------------------------------------

def test_interpolation_endpoints_exact(dec, rng):
    zA, zB = rng.normal(size=(2, 8)).astype(np.float32)
    res = interpolate(dec, zA, zB, H=9, W=11)
    assert res.alphas == [0.0, 0.17, 0.33, 0.5, 0.67, 0.83, 1.0]
    assert res.mse_to_A[0] == 0.0 and res.mse_to_B[-1] == 0.0
    assert res.decoded[0].tobytes() == decode_grid(dec, zA, 9, 11).tobytes()
    assert res.decoded[-1].tobytes() == decode_grid(dec, zB, 9, 11).tobytes()


def test_interpolation_degenerate_endpoints(dec, rng):
    z = rng.normal(size=8).astype(np.float32)
    res = interpolate(dec, z, z, H=6, W=6)
    assert all(d.tobytes() == res.decoded[0].tobytes() for d in res.decoded)
    assert not any(res.mse_to_A) and not any(res.mse_to_B)


def test_interpolation_midpoint_arithmetic(dec, rng):
    v = rng.normal(size=8).astype(np.float32)
    res = interpolate(dec, np.zeros(8, np.float32), v, alphas=[0.5], H=6, W=6)
    np.testing.assert_allclose(res.decoded[0], decode_grid(dec, v / 2, 6, 6), atol=1e-6)


def test_interpolation_errors(dec):
    with pytest.raises(DimensionError):
        interpolate(dec, np.zeros(7), np.zeros(8))
    with pytest.raises(ValueError):
        interpolate(dec, np.zeros(8), np.zeros(8), alphas=[1.5])


def test_interpolation_csv(tmp_path):
    res = InterpolationResult([0.0, 1.0], [np.zeros((2, 2))] * 2, [0.0, 1e-3], [1e-3, 0.0])
    res.write_csv(tmp_path / "i.csv")
    lines = (tmp_path / "i.csv").read_text().splitlines()
    assert lines[0] == "alpha,mse_to_A,mse_to_B" and len(lines) == 3


# --- super-resolution -------------------------------------------------------

def test_super_resolution_scale_one_is_native(dec, rng):
    z = rng.normal(size=8).astype(np.float32)
    native = decode_grid(dec, z, 10, 10)
    assert super_resolve(dec, z, 10, 10, scale=1).tobytes() == native.tobytes()


def test_super_resolution_paper_sizes(dec):
    z = np.zeros(8, np.float32)
    assert super_resolve(dec, z, 70, 70, scale=2).shape == (140, 140)
    assert super_resolve(dec, z, 70, 70, scale=4).shape == (280, 280)
    with pytest.raises(ValueError):
        super_resolve(dec, z, 70, 70, target=(35, 35))


def test_super_resolution_coincident_points(dec, rng):
    # (9 - 1) is a multiple of (5 - 1): every native node is on the dense grid
    z = rng.normal(size=8).astype(np.float32)
    native = decode_grid(dec, z, 5, 5)
    dense = super_resolve(dec, z, 5, 5, target=(9, 9))
    np.testing.assert_allclose(dense[::2, ::2], native, atol=1e-6)


def test_block_average():
    f = np.arange(16, dtype=float).reshape(4, 4)
    np.testing.assert_array_equal(block_average(f, 2), [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(ValueError):
        block_average(np.zeros((3, 4)), 2)


# --- encoding unseen fields -------------------------------------------------

def test_encode_zero_steps_returns_init(dec):
    target = np.zeros((6, 6), np.float32)
    z, losses = encode_new(dec, target, steps=0, rng=RngStream(5))
    expected = init_latents(1, 8, 0.01, RngStream(5))[0]
    assert z.tobytes() == expected.tobytes()
    assert len(losses) == 1


def test_encode_improves_loss(trained):
    ds, tr = trained
    z, losses = encode_new(tr.decoder, ds.target(2), steps=100, rng=RngStream(1))
    assert min(losses) <= losses[0]
    # the returned code is the best one seen
    _, check = encode_new(tr.decoder, ds.target(2), steps=0, rng=RngStream(1))
    assert check[0] == losses[0]


def test_reencoding_a_training_sample(trained):
    ds, tr = trained
    coords_shape = (ds.H, ds.W)
    for i in range(len(ds)):
        V = ds.fields[i].values
        trained_rec = denormalize(decode_grid(tr.decoder, tr.latents[i], *coords_shape))
        z, _ = encode_new(tr.decoder, ds.target(i), steps=500, lr=1e-2, rng=RngStream(i))
        fresh_rec = denormalize(decode_grid(tr.decoder, z, *coords_shape))
        assert psnr(V, fresh_rec) >= psnr(V, trained_rec) - 3.0


# --- error maps -------------------------------------------------------------

def test_error_map_examples():
    V = np.full((4, 5), 2000.0)
    err, loc, peak = error_map(V, V)
    assert not err.any() and peak == 0
    Vh = V.copy()
    Vh[2, 3] += 5
    err, loc, peak = error_map(V, Vh)
    assert loc == (2, 3) and peak == 5
    with pytest.raises(DimensionError):
        error_map(V, V[:2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_error_map_max_at_least_rms(seed):
    r = np.random.default_rng(seed)
    V, Vh = r.normal(size=(2, 7, 9))
    _, _, peak = error_map(V, Vh)
    assert peak >= math.sqrt(np.mean((V - Vh) ** 2)) - 1e-12


# --- spectra ----------------------------------------------------------------

def brute_force_spectrum(f):
    n = f.shape[0]
    power = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            acc = 0j
            for r in range(n):
                for c in range(n):
                    acc += f[r, c] * cmath.exp(-2j * math.pi * (u * r + v * c) / n)
            power[u, v] = abs(acc) ** 2
    k = [u if u <= n // 2 - (1 - n % 2) else u - n for u in range(n)]
    bins = {}
    for u in range(n):
        for v in range(n):
            b = int(round(math.hypot(k[u], k[v])))
            bins.setdefault(b, []).append(power[u, v])
    return {b: sum(p) / len(p) for b, p in bins.items()}


def test_constant_field_spectrum():
    bins, power = power_spectrum(np.full((8, 8), 3.0))
    assert power[0] == pytest.approx((3.0 * 64) ** 2)
    assert np.abs(power[1:]).max() < 1e-20


@pytest.mark.parametrize("k", [1, 3, 5])
def test_sinusoid_spectrum_peak(k):
    n = 16
    c = np.arange(n)
    f = np.tile(np.sin(2 * np.pi * k * c / n), (n, 1))
    bins, power = power_spectrum(f)
    assert int(bins[np.argmax(power)]) == k
    assert power[k] > 1e6 * np.delete(power, k).max() or np.delete(power, k).max() < 1e-20


def test_spectrum_matches_brute_force_dft(rng):
    f = rng.normal(size=(8, 8))
    ref = brute_force_spectrum(f)
    bins, power = power_spectrum(f)
    assert set(ref) == set(int(b) for b in bins)
    for b, p in zip(bins, power):
        assert p == pytest.approx(ref[int(b)], rel=1e-6)


def test_spectrum_needs_square():
    with pytest.raises(DimensionError):
        power_spectrum(np.zeros((4, 5)))


def test_high_frequency_energy_split():
    n = 16
    c = np.arange(n)
    low = np.tile(np.sin(2 * np.pi * 2 * c / n), (n, 1))
    high = np.tile(np.sin(2 * np.pi * 6 * c / n), (n, 1))
    assert high_frequency_energy(low) < 1e-18
    assert high_frequency_energy(high) == pytest.approx(2 * (n * n / 2) ** 2)


def test_spectral_trial_runs():
    t = spectral_bias_trial(0, n=16, hidden=16, layers=1, steps=50)
    assert t.target.shape == t.relu_fit.shape == t.siren_fit.shape == (16, 16)
    assert t.relu_high >= 0 and t.siren_high >= 0

