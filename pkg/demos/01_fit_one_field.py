"""Fit one velocity model with a tiny SIREN auto-decoder.

Generates a curved, faulted model, trains a decoder plus a single latent code
on it, then reports PSNR/SSIM and writes the truth, the reconstruction and
the error map as PGM snapshots next to this script.

    python3 demos/01_fit_one_field.py
"""

from pathlib import Path

import numpy as np

from field_codec.applications import decode_grid, error_map
from field_codec.data import denormalize, generate, make_grid, normalize
from field_codec.export import write_pgm
from field_codec.metrics import psnr, ssim
from field_codec.siren import DecoderConfig
from field_codec.tensor import RngStream
from field_codec.training import TrainConfig, Trainer, train_batch

out = Path(__file__).with_suffix("")
out.mkdir(exist_ok=True)

# A 35x35 CurveFault model: folded layers cut by one dipping fault.
field = generate("CurveFault", 35, 35, RngStream(0))
print(f"{field.family}: {field.values.min():.0f}..{field.values.max():.0f} m/s, "
      f"fault dip {field.meta['dip_deg']:.0f} deg, throw {field.meta['throw_px']} px")

# Decoder input is (x, z) plus a 32-d code; three 128-wide sine layers.
cfg = DecoderConfig(latent_dim=32, hidden_features=128, hidden_layers=3)
trainer = Trainer.create(1, cfg, TrainConfig(epochs=1, batch_size=1, lr=1e-4, seed=0))
coords = make_grid(35, 35)
target = normalize(field.values).reshape(1, -1)

# With one sample, each step sees the whole field; decoder and code move together.
for step in range(1, 1501):
    loss = train_batch(trainer.decoder, trainer.latents, [0], target, coords,
                       trainer.opt, trainer.config.latent_lambda)
    if step % 300 == 0:
        print(f"step {step:5d}  mse {loss.recon:.3e}  |z|^2 {loss.latent_penalty:.3e}")

rec = denormalize(decode_grid(trainer.decoder, trainer.latents[0], 35, 35))
err, loc, peak = error_map(field.values, rec)
print(f"PSNR {psnr(field.values, rec):.2f} dB  SSIM {ssim(field.values, rec):.4f}  "
      f"worst error {peak:.1f} m/s at {loc}")

write_pgm(out / "truth.pgm", field.values, 1500, 4000)
write_pgm(out / "reconstruction.pgm", rec, 1500, 4000)
write_pgm(out / "error.pgm", err, 0.0, max(float(np.max(err)), 1e-6))
print(f"snapshots in {out}/")
