"""Joint auto-decoder training: decoder weights and one latent per field.

Objective per batch of fields ``i`` in ``B``::

    loss = mean_{i,j} (f(x_j; z_i) - V_i[j])^2  +  lam * mean_{i in B} ||z_i||^2

Both the decoder and the touched latent rows are updated by one Adam
instance; a plateau scheduler halves the learning rate when the epoch loss
stalls.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, make_grid
from .siren import (
    DecoderConfig,
    SirenDecoder,
    decoder_backward,
    decoder_forward,
    init_decoder,
    param_count,
)
from .tensor import DEFAULT_DTYPE, RngStream, l2_value_and_grad, mse_value_and_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 32
    lr: float = 2e-4
    latent_lambda: float = 1e-4
    latent_sigma: float = 0.01
    seed: int = 0
    checkpoint_every: int = 100
    eval_split: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 50
    factor: float = 0.5
    plateau_threshold: float = 1e-4
    min_lr: float = 1e-6

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "latent_sigma", "checkpoint_every", "patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.latent_lambda < 0:
            raise ValueError("latent_lambda must be non-negative")
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        if not 0 <= self.eval_split < 1:
            raise ValueError("eval_split must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def init_latents(n: int, d: int, sigma: float, rng: RngStream, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """``(n, d)`` table of i.i.d. N(0, sigma^2) codes."""
    if n < 1 or d < 0 or not sigma > 0:
        raise ValueError(f"bad latent table spec n={n} d={d} sigma={sigma}")
    return (rng.normal((n, d), dtype=np.float64) * sigma).astype(dtype)


@dataclass
class AdamState:
    """Moments for a list of parameter tensors, plus the shared step count.

    Tensors updated with ``rows=`` only touch the moments of those rows, so
    rows that sit out a step keep both value and moments unchanged.
    """

    m: list[np.ndarray]
    v: list[np.ndarray]
    names: list[str]
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def zeros_like(cls, params, names=None, **kw) -> "AdamState":
        names = names or [f"param{k}" for k in range(len(params))]
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   list(names), **kw)


def adam_step(state: AdamState, params, grads, rows=None) -> None:
    """One bias-corrected Adam update, in place.

    ``rows`` optionally maps a parameter position to the row indices that
    ``grads[k]`` covers (a sparse update of a table); ``grads[k]`` then has
    one row per index.
    """
    rows = rows or {}
    for k, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {state.names[k]}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, (p, g) in enumerate(zip(params, grads)):
        m, v = state.m[k], state.v[k]
        idx = rows.get(k)
        if idx is None:
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        else:
            mr = b1 * m[idx] + (1.0 - b1) * g
            vr = b2 * v[idx] + (1.0 - b2) * (g * g)
            m[idx], v[idx] = mr, vr
            p[idx] -= state.lr * (mr / bc1) / (np.sqrt(vr / bc2) + state.eps)


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` stalled epochs.

    An epoch counts as an improvement when its loss is below
    ``best * (1 - threshold)``.
    """

    patience: int = 50
    factor: float = 0.5
    threshold: float = 1e-4
    min_lr: float = 1e-6
    best_loss: float = math.inf
    epochs_since_improve: int = 0

    def __post_init__(self):
        if not 0 < self.factor < 1 or self.patience < 1:
            raise ValueError("need 0 < factor < 1 and patience >= 1")

    def step(self, loss: float, lr: float) -> float:
        if not math.isfinite(loss):
            raise FloatingPointError(f"scheduler got non-finite loss {loss}")
        if loss < self.best_loss * (1.0 - self.threshold):
            self.best_loss = loss
            self.epochs_since_improve = 0
            return lr
        self.epochs_since_improve += 1
        if self.epochs_since_improve >= self.patience:
            self.epochs_since_improve = 0
            return max(lr * self.factor, self.min_lr)
        return lr


def scheduler_step(sched: PlateauScheduler, epoch_loss: float, current_lr: float) -> float:
    return sched.step(epoch_loss, current_lr)


@dataclass
class BatchLoss:
    recon: float
    latent_penalty: float   # mean ||z_i||^2 over the batch, unweighted
    latent_lambda: float

    @property
    def total(self) -> float:
        return self.recon + self.latent_lambda * self.latent_penalty


def batch_loss_and_grads(dec: SirenDecoder, latents: np.ndarray, coords: np.ndarray,
                         targets: np.ndarray, lam: float):
    """Loss plus gradients for a batch of fields without applying an update.

    ``latents`` is ``(B, d)``, ``targets`` is ``(B, M)``.
    """
    B = latents.shape[0]
    values, trace = decoder_forward(dec, coords, latents)
    recon, d_values = mse_value_and_grad(values[:, 0], np.asarray(targets, dec.dtype).ravel())
    param_grads, d_latent = decoder_backward(dec, trace, d_values)
    penalty = 0.0
    d_pen = np.empty_like(latents)
    for r in range(B):
        p, dz = l2_value_and_grad(latents[r], 1.0)
        penalty += p
        d_pen[r] = dz
    penalty /= B
    d_latent = d_latent + d_pen * d_pen.dtype.type(lam / B)
    return BatchLoss(recon, penalty, lam), param_grads, d_latent


def train_batch(dec: SirenDecoder, latents: np.ndarray, batch_indices, targets, coords,
                opt: AdamState, lam: float, freeze_decoder: bool = False) -> BatchLoss:
    """One Adam step on the decoder and the latent rows in ``batch_indices``.

    ``opt`` covers ``dec.parameters() + [latents]``; the latent table is the
    last slot. Returns the loss measured before the update.
    """
    idx = np.asarray(batch_indices, dtype=np.int64)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= latents.shape[0]:
        raise IndexError(f"batch indices out of range for {latents.shape[0]} latents")
    loss, param_grads, d_latent = batch_loss_and_grads(dec, latents[idx], coords, targets, lam)
    if not math.isfinite(loss.total):
        raise FloatingPointError(f"non-finite loss {loss.total}")
    params = dec.parameters()
    slot = len(params)
    if freeze_decoder:
        # the shared step count still advances; only the latent slot moves
        sub = AdamState([opt.m[slot]], [opt.v[slot]], [opt.names[slot]],
                        opt.lr, opt.beta1, opt.beta2, opt.eps, opt.t)
        adam_step(sub, [latents], [d_latent], rows={0: idx})
        opt.t = sub.t
    else:
        adam_step(opt, params + [latents], param_grads + [d_latent], rows={slot: idx})
        dec.version += 1
    return loss


@dataclass
class EpochRecord:
    epoch: int
    recon_mse: float
    latent_penalty: float
    total_loss: float
    lr: float


HISTORY_HEADER = ("epoch", "recon_mse", "latent_penalty", "total_loss", "lr")


@dataclass
class Trainer:
    """Mutable training state; ``checkpoint.save`` persists all of it."""

    decoder: SirenDecoder
    latents: np.ndarray
    opt: AdamState
    scheduler: PlateauScheduler
    rng: RngStream
    config: TrainConfig
    epoch: int = 0
    history: list[EpochRecord] = field(default_factory=list)

    @classmethod
    def create(cls, n_samples: int, dec_config: DecoderConfig, cfg: TrainConfig,
               dtype=DEFAULT_DTYPE) -> "Trainer":
        rng = RngStream(cfg.seed)
        dec = init_decoder(dec_config, rng, dtype)
        latents = init_latents(n_samples, dec_config.latent_dim, cfg.latent_sigma, rng, dtype)
        opt = AdamState.zeros_like(dec.parameters() + [latents],
                                   dec.parameter_names() + ["latents"],
                                   lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
        sched = PlateauScheduler(cfg.patience, cfg.factor, cfg.plateau_threshold, cfg.min_lr)
        return cls(dec, latents, opt, sched, rng, cfg)

    def run_epoch(self, targets: np.ndarray, coords: np.ndarray) -> EpochRecord:
        """Shuffle, sweep every batch once, then step the scheduler."""
        n = targets.shape[0]
        bs = min(self.config.batch_size, n)
        order = self.rng.permutation(n)
        recon = penalty = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss = train_batch(self.decoder, self.latents, idx, targets[idx], coords,
                               self.opt, self.config.latent_lambda)
            recon += loss.recon * len(idx)
            penalty += loss.latent_penalty * len(idx)
        recon /= n
        penalty /= n
        total = recon + self.config.latent_lambda * penalty
        lr_used = self.opt.lr
        self.opt.lr = self.scheduler.step(total, self.opt.lr)
        self.epoch += 1
        rec = EpochRecord(self.epoch, recon, penalty, total, lr_used)
        self.history.append(rec)
        return rec

    def fit(self, dataset: Dataset, epochs: int | None = None, on_checkpoint=None,
            log_every: int = 0) -> "Trainer":
        """Train until ``epochs`` total epochs have run.

        ``on_checkpoint(trainer)`` fires after every epoch divisible by
        ``config.checkpoint_every``.
        """
        epochs = self.config.epochs if epochs is None else epochs
        if len(dataset) != self.latents.shape[0]:
            raise ValueError(f"dataset has {len(dataset)} fields, trainer {self.latents.shape[0]} latents")
        coords = make_grid(dataset.H, dataset.W, self.decoder.dtype)
        targets = dataset.normalized.astype(self.decoder.dtype)
        while self.epoch < epochs:
            rec = self.run_epoch(targets, coords)
            if log_every and rec.epoch % log_every == 0:
                log.info("epoch %d recon %.3e total %.3e lr %.1e",
                         rec.epoch, rec.recon_mse, rec.total_loss, rec.lr)
            if on_checkpoint is not None and rec.epoch % self.config.checkpoint_every == 0:
                on_checkpoint(self)
        return self


def train(dataset: Dataset, cfg: TrainConfig, dec_config: DecoderConfig | None = None,
          on_checkpoint=None, dtype=DEFAULT_DTYPE):
    """Train on every field in ``dataset``; returns ``(decoder, latents, history)``."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    trainer = Trainer.create(len(dataset), dec_config or DecoderConfig(), cfg, dtype)
    trainer.fit(dataset, on_checkpoint=on_checkpoint)
    return trainer.decoder, trainer.latents, trainer.history


def total_trainable(dec_config: DecoderConfig, n_samples: int) -> int:
    return param_count(dec_config) + n_samples * dec_config.latent_dim


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for r in history:
            w.writerow([r.epoch, repr(r.recon_mse), repr(r.latent_penalty), repr(r.total_loss), repr(r.lr)])
