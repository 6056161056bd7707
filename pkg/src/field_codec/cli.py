"""``field-codec`` command line.

Subcommands: gen-data, train, eval, reconstruct, interp, encode, spectrum.

Exit codes: 0 success, 2 bad configuration or arguments, 3 missing file,
4 malformed file / version or dataset mismatch, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint as ckpt
from .applications import (
    decode_grid,
    encode_new,
    error_map,
    interpolate,
    power_spectrum,
    spectral_bias_trial,
    super_resolve,
    write_spectrum_csv,
)
from .config import ConfigError, RunConfig, load_config
from .data import (
    FieldFormatError,
    build_dataset,
    denormalize,
    load_dataset,
    normalize,
    read_field,
    save_dataset,
    write_field,
)
from .export import write_pgm
from .metrics import compression_ratio, evaluate, psnr, ssim
from .siren import param_count
from .tensor import RngStream
from .training import Trainer, write_history

log = logging.getLogger("field_codec")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4, 5


class DatasetMismatchError(ValueError):
    pass


def _config(args) -> RunConfig:
    overrides = dict(kv.split("=", 1) for kv in args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_checkpoint(args, dataset=None):
    trainer, ds_hash = ckpt.load(args.checkpoint)
    if dataset is not None and ds_hash and ds_hash != dataset.fingerprint():
        raise DatasetMismatchError(
            f"checkpoint {args.checkpoint} was trained on a different dataset than {args.data_dir}")
    return trainer


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    cfg = _config(args)
    ds = build_dataset(cfg.samples_per_family, cfg.height, cfg.width, cfg.seed,
                       1.0 - cfg.eval_split)
    path = save_dataset(ds, args.data_dir or args.out_dir or ".")
    print(f"wrote {len(ds)} fields ({cfg.height}x{cfg.width}) and {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data_dir)
    out = _out_dir(args)
    if args.checkpoint:
        trainer = _load_checkpoint(args, ds)
        print(f"resuming from epoch {trainer.epoch}")
    else:
        trainer = Trainer.create(len(ds), cfg.decoder_config(), cfg.train_config())
    ds_hash = ds.fingerprint()

    def save(tr):
        path = ckpt.save(tr, out / f"checkpoint_{tr.epoch:05d}.srnc", ds_hash)
        log.info("saved %s", path)

    trainer.fit(ds, epochs=cfg.epochs if not args.checkpoint else max(cfg.epochs, trainer.epoch),
                on_checkpoint=save, log_every=args.log_every)
    ckpt.save(trainer, out / "final.srnc", ds_hash)
    write_history(out / "history.csv", trainer.history)
    last = trainer.history[-1] if trainer.history else None
    if last:
        print(f"epoch {last.epoch}: total loss {last.total_loss:.4e}, lr {last.lr:.2e}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data_dir)
    trainer = _load_checkpoint(args, ds)
    fixed = args.fixed_range if args.fixed_range is not None else (cfg.fixed_range or None)
    report = evaluate(ds, trainer.decoder, trainer.latents, fixed_range=fixed,
                      ssim_window=cfg.ssim_window or None)
    out = _out_dir(args)
    report.write_samples_csv(out / "metrics.csv")
    report.write_summary_csv(out / "summary.csv")
    dcfg = trainer.decoder.config
    n_dec = param_count(dcfg)
    n_lat = len(ds) * dcfg.latent_dim
    o = report.overall
    print(f"samples: {len(ds)}")
    print(f"PSNR (dB): mean {o['psnr']['mean']:.2f} std {o['psnr']['std']:.2f}")
    print(f"SSIM:      mean {o['ssim']['mean']:.4f} std {o['ssim']['std']:.4f}")
    print(f"MSE:       mean {o['mse']['mean']:.4e}")
    for fam, s in report.per_family.items():
        print(f"  {fam:<11} PSNR {s['psnr']['mean']:6.2f}  SSIM {s['ssim']['mean']:.4f}  n={s['count']}")
    ratio = compression_ratio(ds.H, ds.W, dcfg.latent_dim)
    print(f"compression ratio: {ds.H * ds.W} -> {dcfg.latent_dim} = {ratio:.1f}:1")
    print(f"trainable parameters: decoder {n_dec:,} + latents {n_lat:,} = {n_dec + n_lat:,}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    ds = load_dataset(args.data_dir)
    trainer = _load_checkpoint(args, ds)
    i = args.index
    if not 0 <= i < len(ds):
        raise ConfigError(f"index {i} out of range for {len(ds)} samples")
    z = trainer.latents[i]
    out = _out_dir(args)
    H = W = None
    if args.resolution:
        H = W = args.resolution
    norm = super_resolve(trainer.decoder, z, ds.H, ds.W, target=(H, W) if H else None)
    values = denormalize(np.clip(norm, -1, 1), ds.vmin, ds.vmax)
    stem = f"recon_{i:05d}_{norm.shape[0]}x{norm.shape[1]}"
    write_field(out / f"{stem}.vfld", values)
    write_pgm(out / f"{stem}.pgm", values, ds.vmin, ds.vmax)
    print(f"wrote {stem}.vfld / .pgm ({norm.shape[0]}x{norm.shape[1]})")
    if norm.shape == (ds.H, ds.W):
        V = ds.fields[i].values
        err, loc, peak = error_map(V, values)
        write_pgm(out / f"error_{i:05d}.pgm", err, 0.0, max(peak, 1e-12))
        print(f"PSNR {psnr(V, values):.2f} dB, SSIM {ssim(V, values):.4f}, "
              f"max error {peak:.1f} m/s at {loc}")
    return EXIT_OK


def cmd_interp(args) -> int:
    ds = load_dataset(args.data_dir)
    trainer = _load_checkpoint(args, ds)
    a, b = args.index_a, args.index_b
    for i in (a, b):
        if not 0 <= i < len(ds):
            raise ConfigError(f"index {i} out of range for {len(ds)} samples")
    alphas = [float(s) for s in args.alphas.split(",")] if args.alphas else None
    kw = {"alphas": alphas} if alphas else {}
    res = interpolate(trainer.decoder, trainer.latents[a], trainer.latents[b], H=ds.H, W=ds.W, **kw)
    out = _out_dir(args)
    res.write_csv(out / "interpolation.csv")
    for alpha, fld in zip(res.alphas, res.fields(ds.vmin, ds.vmax)):
        stem = f"interp_{a}_{b}_a{alpha:.2f}"
        write_field(out / f"{stem}.vfld", fld)
        write_pgm(out / f"{stem}.pgm", fld.values, ds.vmin, ds.vmax)
    print("alpha  mse_to_A   mse_to_B")
    for alpha, ma, mb in zip(res.alphas, res.mse_to_A, res.mse_to_B):
        print(f"{alpha:.2f}  {ma:.2e}  {mb:.2e}")
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _config(args)
    trainer = _load_checkpoint(args)
    fld = read_field(args.field)
    target = normalize(fld.values)
    z, losses = encode_new(trainer.decoder, target, cfg.encode_steps, cfg.encode_lr,
                           cfg.latent_lambda, RngStream(cfg.seed))
    out = _out_dir(args)
    stem = Path(args.field).stem
    np.save(out / f"{stem}_latent.npy", z)
    H, W = target.shape
    values = denormalize(np.clip(decode_grid(trainer.decoder, z, H, W), -1, 1))
    write_field(out / f"{stem}_recon.vfld", values)
    print(f"loss {losses[0]:.3e} -> {min(losses):.3e}; "
          f"PSNR {psnr(fld.values, values):.2f} dB, SSIM {ssim(fld.values, values):.4f}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    out = _out_dir(args)
    trials = [spectral_bias_trial(args.seed_base + k, n=args.size, steps=args.steps)
              for k in range(args.trials)]
    with open(out / "spectral_trials.csv", "w") as fh:
        fh.write("seed,relu_high_energy,siren_high_energy\n")
        for t in trials:
            fh.write(f"{t.seed},{t.relu_high!r},{t.siren_high!r}\n")
    t0 = trials[0]
    for name, arr in (("target", t0.target), ("relu", t0.relu_fit), ("siren", t0.siren_fit),
                      ("relu_residual", t0.target - t0.relu_fit),
                      ("siren_residual", t0.target - t0.siren_fit)):
        write_spectrum_csv(out / f"spectrum_{name}.csv", *power_spectrum(arr))
    wins = sum(t.siren_high < t.relu_high for t in trials)
    print(f"SIREN residual above half-Nyquist lower in {wins}/{len(trials)} trials")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--data-dir")
    common.add_argument("--checkpoint")
    common.add_argument("--out-dir")
    common.add_argument("--threads", type=int)
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded BLAS for bit-reproducible runs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="field-codec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common]).set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", parents=[common])
    s.add_argument("--log-every", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common])
    s.add_argument("--fixed-range", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("reconstruct", parents=[common])
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--resolution", type=int)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("interp", parents=[common])
    s.add_argument("--index-a", type=int, required=True)
    s.add_argument("--index-b", type=int, required=True)
    s.add_argument("--alphas", help="comma-separated, e.g. 0,0.5,1")
    s.set_defaults(func=cmd_interp)

    s = sub.add_parser("encode", parents=[common])
    s.add_argument("--field", required=True, help=".vfld file to encode")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("spectrum", parents=[common])
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--seed-base", type=int, default=0)
    s.set_defaults(func=cmd_spectrum)
    return p


def _threads(args) -> int | None:
    if args.deterministic:
        return 1
    if args.threads:
        return args.threads
    env = os.environ.get("FIELD_CODEC_THREADS")
    return int(env) if env else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    n = _threads(args)
    limit = threadpool_limits(n) if n else contextlib.nullcontext()
    try:
        with limit:
            return args.func(args)
    except (ConfigError, ValueError) as e:
        if isinstance(e, (FieldFormatError, ckpt.CheckpointError, DatasetMismatchError)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_FORMAT
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return EXIT_MISSING
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
