"""Run configuration: ``key = value`` text files with typed defaults.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .siren import DecoderConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # decoder
    latent_dim: int = 256
    hidden_features: int = 512
    hidden_layers: int = 4
    omega0: float = 30.0
    # training
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
    # data
    height: int = 70
    width: int = 70
    samples_per_family: int = 200
    # metrics; fixed_range <= 0 means per-sample ground-truth range
    fixed_range: float = 0.0
    ssim_window: int = 0
    # encoding unseen fields
    encode_steps: int = 500
    encode_lr: float = 1e-2

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(self.latent_dim, self.hidden_features, self.hidden_layers, self.omega0)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def with_overrides(self, pairs: dict) -> "RunConfig":
        return replace(self, **_coerce(pairs))


def _coerce(pairs: dict) -> dict:
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, value in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        conv = int if types[key] in ("int", int) else float
        try:
            out[key] = conv(value)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {value!r}") from None
    return out


def parse_config_text(text: str) -> dict:
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key] = value
    return pairs


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file {p} not found")
        cfg = cfg.with_overrides(parse_config_text(p.read_text()))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
