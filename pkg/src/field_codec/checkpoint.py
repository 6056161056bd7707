"""Binary checkpoints for a training run.

Layout (little-endian)::

    b"SRNC"  u32 version
    u32 n    n bytes of UTF-8 JSON (configs, epoch, scheduler, Adam scalars,
             RNG state, dataset fingerprint, history, tensor names)
    u32 count, then per tensor: u32 rows, u32 cols, rows*cols float32

Tensors follow a fixed order: decoder W/b pairs, latent table, then the Adam
first and second moments in the same order. Vectors are stored as 1 x n.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .siren import DecoderConfig, SirenDecoder
from .tensor import RngStream
from .training import AdamState, EpochRecord, PlateauScheduler, TrainConfig, Trainer

MAGIC = b"SRNC"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def save(trainer: Trainer, path, dataset_hash: str = "") -> Path:
    dec = trainer.decoder
    if dec.dtype != np.float32:
        raise CheckpointError("checkpoints store float32 tensors only")
    tensors = dec.parameters() + [trainer.latents]
    tensors = tensors + list(trainer.opt.m) + list(trainer.opt.v)
    sched = trainer.scheduler
    meta = {
        "decoder_config": asdict(dec.config),
        "train_config": trainer.config.to_dict(),
        "epoch": trainer.epoch,
        "decoder_version": dec.version,
        "scheduler": {"best_loss": sched.best_loss if np.isfinite(sched.best_loss) else None,
                      "epochs_since_improve": sched.epochs_since_improve},
        "adam": {"t": trainer.opt.t, "lr": trainer.opt.lr, "names": trainer.opt.names},
        "rng": {"seed": trainer.rng.seed, "state": trainer.rng.get_state()},
        "dataset_hash": dataset_hash,
        "history": [asdict(r) for r in trainer.history],
        "n_tensors": len(tensors),
    }
    blob = json.dumps(meta, default=_json_default).encode()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC + _U32.pack(VERSION))
        fh.write(_U32.pack(len(blob)) + blob)
        fh.write(_U32.pack(len(tensors)))
        for t in tensors:
            t2 = t.reshape(1, -1) if t.ndim == 1 else t
            fh.write(struct.pack("<II", *t2.shape))
            fh.write(np.ascontiguousarray(t2, dtype="<f4").tobytes())
    return path


def load(path) -> tuple[Trainer, str]:
    """Rebuild the trainer from ``path``; returns ``(trainer, dataset_hash)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    version = _U32.unpack_from(raw, 4)[0]
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {VERSION}")
    off = 8
    n = _U32.unpack_from(raw, off)[0]
    off += 4
    meta = json.loads(raw[off:off + n].decode())
    off += n
    count = _U32.unpack_from(raw, off)[0]
    off += 4
    tensors = []
    for _ in range(count):
        if off + 8 > len(raw):
            raise CheckpointError(f"{path}: truncated tensor header")
        rows, cols = struct.unpack_from("<II", raw, off)
        off += 8
        nbytes = 4 * rows * cols
        if off + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated tensor payload")
        tensors.append(np.frombuffer(raw, "<f4", rows * cols, off).reshape(rows, cols).astype(np.float32))
        off += nbytes

    dcfg = DecoderConfig(**meta["decoder_config"])
    n_layers = len(dcfg.layer_shapes())
    params = tensors[:2 * n_layers]
    weights = params[0::2]
    biases = [b.reshape(-1) for b in params[1::2]]
    latents = tensors[2 * n_layers]
    n_slots = 2 * n_layers + 1
    moments = tensors[n_slots:]
    if len(moments) != 2 * n_slots:
        raise CheckpointError(f"{path}: expected {3 * n_slots} tensors, found {len(tensors)}")
    dec = SirenDecoder(dcfg, weights, biases, meta["decoder_version"])

    def like(arrs):
        return [a.reshape(p.shape) for a, p in zip(arrs, dec.parameters() + [latents])]

    adam = meta["adam"]
    cfg = TrainConfig(**meta["train_config"])
    opt = AdamState(like(moments[:n_slots]), like(moments[n_slots:]), adam["names"],
                    lr=adam["lr"], beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps, t=adam["t"])
    s = meta["scheduler"]
    sched = PlateauScheduler(cfg.patience, cfg.factor, cfg.plateau_threshold, cfg.min_lr,
                             np.inf if s["best_loss"] is None else s["best_loss"],
                             s["epochs_since_improve"])
    rng = RngStream(meta["rng"]["seed"])
    rng.set_state(meta["rng"]["state"])
    history = [EpochRecord(**r) for r in meta["history"]]
    trainer = Trainer(dec, latents, opt, sched, rng, cfg, meta["epoch"], history)
    return trainer, meta["dataset_hash"]
