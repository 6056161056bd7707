"""Synthetic velocity models, normalization, coordinate grids and field I/O.

The five generators are procedural stand-ins for the OpenFWI families.
Real OpenFWI maps can be brought in through the ``.vfld`` raw format
(``write_field``/``read_field``) once converted to m/s float32 arrays.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .tensor import RngStream

VMIN = 1500.0
VMAX = 4000.0

FAMILIES = ("FlatVel", "CurveVel", "FlatFault", "CurveFault", "Style")
EXTERNAL = "External"

FIELD_MAGIC = b"VFLD"
FIELD_VERSION = 1
HEADER = struct.Struct("<4sIII")
MAX_POINTS = 1 << 28

# minimum velocity step between adjacent layers
MIN_CONTRAST = 150.0


class FieldFormatError(ValueError):
    """Base class for malformed ``.vfld`` files."""


class BadMagicError(FieldFormatError):
    pass


class UnsupportedVersionError(FieldFormatError):
    pass


class TruncatedPayloadError(FieldFormatError):
    pass


class DimensionOverflowError(FieldFormatError):
    pass


@dataclass
class VelocityField:
    values: np.ndarray              # (H, W) float32, m/s
    family: str = EXTERNAL
    vmin: float = VMIN
    vmax: float = VMAX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES and self.family != EXTERNAL:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.vmin < self.vmax:
            raise ValueError(f"vmin {self.vmin} must be below vmax {self.vmax}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def make_grid(H: int, W: int, dtype=np.float32) -> np.ndarray:
    """Pixel-centre coordinates on [-1, 1]^2, row-major.

    Row ``j`` holds ``(x, z)`` for pixel column ``j % W`` and depth row
    ``j // W``; corners land exactly on +-1.
    """
    if H < 2 or W < 2:
        raise ValueError(f"grid needs H, W >= 2, got {H}x{W}")
    xs = np.linspace(-1.0, 1.0, W)
    zs = np.linspace(-1.0, 1.0, H)
    xx, zz = np.meshgrid(xs, zs)
    return np.stack([xx.ravel(), zz.ravel()], axis=1).astype(dtype)


def normalize(values, vmin: float = VMIN, vmax: float = VMAX) -> np.ndarray:
    """Map velocities to [-1, 1]. Out-of-range values are clamped with a warning."""
    if not vmin < vmax:
        raise ValueError("vmin must be below vmax")
    v = np.asarray(values, dtype=np.float64)
    n_out = int(np.count_nonzero((v < vmin) | (v > vmax)))
    if n_out:
        warnings.warn(f"normalize: clamped {n_out} values outside [{vmin}, {vmax}]")
        v = np.clip(v, vmin, vmax)
    return (2.0 * (v - vmin) / (vmax - vmin) - 1.0).astype(np.float32)


def denormalize(norm, vmin: float = VMIN, vmax: float = VMAX) -> np.ndarray:
    n = np.asarray(norm, dtype=np.float64)
    return ((n + 1.0) * 0.5 * (vmax - vmin) + vmin).astype(np.float32)


# ---------------------------------------------------------------------------
# generators

def _layer_velocities(n: int, rng: RngStream) -> np.ndarray:
    top = VMAX - MIN_CONTRAST * (n - 1)
    base = np.sort(rng.uniform(VMIN, top, n, dtype=np.float64))
    return base + MIN_CONTRAST * np.arange(n)


def _max_layers(H: int) -> int:
    return int(min(7, 2 + (0.84 * H) // max(2.0, 0.04 * H)))


def _interfaces(n: int, H: int, rng: RngStream) -> np.ndarray:
    """Sorted depths (in pixels) of the ``n - 1`` layer boundaries."""
    # keep layers at least ~2 px thick so every one is visible; sorting
    # uniforms on the shortened span then re-inserting the gaps is the same
    # distribution as rejection sampling, without the loop
    gap = max(2.0, 0.04 * H)
    free = 0.84 * H - gap * (n - 2)
    if free < 0:
        raise ValueError(f"{n} layers do not fit in {H} rows")
    u = np.sort(rng.uniform(0.0, free, n - 1, dtype=np.float64))
    return 0.08 * H + u + gap * np.arange(n - 1)


class LayeredModel:
    """Velocity as a function of (x, depth) for a stack of layers.

    Interfaces are ``depth_k(x) = base_k + sum_j a_kj sin(2 pi f_kj x/W + p_kj)``,
    single-valued in x by construction. A point's layer is the number of
    interfaces at or above it, which never decreases with depth.
    """

    def __init__(self, H, W, velocities, bases, harmonics=None):
        self.H, self.W = H, W
        self.velocities = np.asarray(velocities, dtype=np.float64)
        self.bases = np.asarray(bases, dtype=np.float64)
        # harmonics[k] = list of (amplitude, cycles, phase)
        self.harmonics = harmonics or [[] for _ in self.bases]

    def interface_depths(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((len(self.bases),) + x.shape)
        for k, base in enumerate(self.bases):
            d = np.full(x.shape, base)
            for amp, cyc, ph in self.harmonics[k]:
                d = d + amp * np.sin(2 * np.pi * cyc * x / self.W + ph)
            out[k] = d
        return out

    def __call__(self, x, z) -> np.ndarray:
        x, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(z, float))
        layer = np.zeros(x.shape, dtype=int)
        for d in self.interface_depths(x):
            layer += (z >= d)
        return self.velocities[layer]

    def render(self) -> np.ndarray:
        zz, xx = np.mgrid[0:self.H, 0:self.W]
        return self(xx, zz)


def _layered(H, W, rng: RngStream, curved: bool) -> LayeredModel:
    n = int(rng.integers(3, _max_layers(H) + 1))
    vel = _layer_velocities(n, rng)
    bases = _interfaces(n, H, rng)
    harmonics = None
    if curved:
        harmonics = []
        for _ in bases:
            n_h = int(rng.integers(1, 4))
            # total amplitude of the fold stays within 15% of H
            amps = rng.uniform(0.0, 1.0, n_h, dtype=np.float64)
            amps *= rng.uniform(0.03, 0.15) * H / max(amps.sum(), 1e-12)
            cycles = rng.uniform(0.3, 1.5, n_h, dtype=np.float64) * np.arange(1, n_h + 1)
            phases = rng.uniform(0.0, 2 * np.pi, n_h, dtype=np.float64)
            harmonics.append(list(zip(amps, cycles, phases)))
    return LayeredModel(H, W, vel, bases, harmonics)


def _fault(background: LayeredModel, H, W, rng: RngStream):
    """Cut ``background`` with one planar fault, returning (values, meta).

    Points right of the fault trace (the hanging wall) show the background
    displaced downward by ``throw`` pixels: v(x, z) = bg(x, z - throw).
    """
    dip = float(rng.uniform(20.0, 70.0))
    throw = max(1, int(round(float(rng.uniform(0.05, 0.20)) * H)))
    x0 = float(rng.uniform(0.35, 0.65)) * (W - 1)
    z0 = float(rng.uniform(0.35, 0.65)) * (H - 1)
    zz, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    trace_x = x0 + (zz - z0) / math.tan(math.radians(dip))
    hanging = xx > trace_x
    values = np.where(hanging, background(xx, zz - throw), background(xx, zz))
    meta = {"dip_deg": dip, "throw_px": throw, "x0": x0, "z0": z0, "hanging_wall": hanging}
    return values, meta


def _has_visible_fault(values, meta, min_jump=100.0) -> bool:
    hanging = meta["hanging_wall"]
    edge = hanging[:, 1:] != hanging[:, :-1]
    jumps = np.abs(np.diff(values, axis=1))[edge]
    return jumps.size > 0 and float(jumps.max()) >= min_jump


def _style(H, W, rng: RngStream) -> tuple[np.ndarray, dict]:
    radius = float(rng.uniform(2.0, 6.0))
    noise = rng.normal((H, W), dtype=np.float64)
    smooth = gaussian_filter(noise, sigma=radius / 2.0, mode="reflect")
    lo, hi = smooth.min(), smooth.max()
    values = VMIN + (smooth - lo) / (hi - lo) * (VMAX - VMIN)
    return values, {"blur_radius": radius}


def generate(family: str, H: int, W: int, rng: RngStream) -> VelocityField:
    """Procedural velocity model for one family; deterministic in ``rng``."""
    if H < 8 or W < 8:
        raise ValueError(f"generate needs H, W >= 8, got {H}x{W}")
    if family == "Style":
        values, meta = _style(H, W, rng)
    elif family in ("FlatVel", "CurveVel"):
        model = _layered(H, W, rng, curved=family == "CurveVel")
        values, meta = model.render(), {"background": model}
    elif family in ("FlatFault", "CurveFault"):
        for _ in range(100):
            model = _layered(H, W, rng, curved=family == "CurveFault")
            values, meta = _fault(model, H, W, rng)
            if _has_visible_fault(values, meta):
                break
        meta["background"] = model
    else:
        raise ValueError(f"unknown family {family!r}")
    values = np.clip(values, VMIN, VMAX).astype(np.float32)
    return VelocityField(values, family, VMIN, VMAX, meta)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class Dataset:
    fields: list[VelocityField]
    normalized: np.ndarray          # (N, H*W) float32 in [-1, 1]
    split: list[str]                # "train" / "val" per index
    H: int
    W: int
    vmin: float = VMIN
    vmax: float = VMAX

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def families(self) -> list[str]:
        return [f.family for f in self.fields]

    def indices(self, split: str | None = None) -> list[int]:
        return [i for i, s in enumerate(self.split) if split is None or s == split]

    def target(self, i: int) -> np.ndarray:
        return self.normalized[i].reshape(self.H, self.W)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<II", self.H, self.W))
        for f in self.fields:
            h.update(f.family.encode())
            h.update(np.ascontiguousarray(f.values, dtype="<f4").tobytes())
        return h.hexdigest()


def stratified_split(families, train_fraction=0.8, rng: RngStream | None = None) -> list[str]:
    """Tag each index train/val so every family keeps the same ratio."""
    split = ["train"] * len(families)
    for fam in dict.fromkeys(families):
        idx = np.array([i for i, f in enumerate(families) if f == fam])
        if rng is not None:
            idx = idx[rng.permutation(len(idx))]
        n_train = int(round(train_fraction * len(idx)))
        for i in idx[n_train:]:
            split[int(i)] = "val"
    return split


def dataset_from_fields(fields, split=None, vmin=VMIN, vmax=VMAX, rng=None) -> Dataset:
    if not fields:
        raise ValueError("dataset needs at least one field")
    H, W = fields[0].shape
    if any(f.shape != (H, W) for f in fields):
        raise ValueError("all fields must share one grid size")
    normed = np.stack([normalize(f.values, vmin, vmax).ravel() for f in fields])
    if split is None:
        split = stratified_split([f.family for f in fields], 0.8, rng)
    return Dataset(list(fields), normed, list(split), H, W, vmin, vmax)


def build_dataset(counts, H: int = 70, W: int = 70, seed: int = 0,
                  train_fraction: float = 0.8) -> Dataset:
    """Generate, normalize and split a dataset.

    ``counts`` is either one int (per family) or a ``{family: n}`` mapping.
    Sample ``i`` draws from its own stream seeded with ``seed ^ i``.
    """
    if isinstance(counts, int):
        counts = {fam: counts for fam in FAMILIES}
    if any(n < 1 for n in counts.values()):
        raise ValueError("every family count must be >= 1")
    fields = []
    for fam, n in counts.items():
        for _ in range(n):
            i = len(fields)
            fields.append(generate(fam, H, W, RngStream(seed ^ i)))
    split = stratified_split([f.family for f in fields], train_fraction,
                             RngStream(seed).spawn(0x5EED))
    return dataset_from_fields(fields, split)


def write_field(path, fld: VelocityField | np.ndarray) -> None:
    values = fld.values if isinstance(fld, VelocityField) else np.asarray(fld)
    H, W = values.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(FIELD_MAGIC, FIELD_VERSION, H, W))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_field(path, family: str = EXTERNAL) -> VelocityField:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError(f"{path}: {len(raw)} bytes is shorter than the header")
    magic, version, H, W = HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FIELD_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} not supported")
    if H * W > MAX_POINTS:
        raise DimensionOverflowError(f"{path}: {H}x{W} exceeds {MAX_POINTS} points")
    need = HEADER.size + 4 * H * W
    if len(raw) < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(raw)} of {need} bytes")
    values = np.frombuffer(raw, dtype="<f4", count=H * W, offset=HEADER.size)
    values = values.reshape(H, W).astype(np.float32)
    vmin = min(VMIN, float(values.min()))
    vmax = max(VMAX, float(values.max()))
    return VelocityField(values, family, vmin, vmax)


MANIFEST = "manifest.csv"


def save_dataset(ds: Dataset, directory) -> Path:
    """Write every field as ``fields/NNNNN.vfld`` plus ``manifest.csv``."""
    root = Path(directory)
    (root / "fields").mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "family", "path", "split"])
        for i, (fld, split) in enumerate(zip(ds.fields, ds.split)):
            rel = f"fields/{i:05d}.vfld"
            write_field(root / rel, fld)
            w.writerow([i, fld.family, rel, split])
    return root / MANIFEST


def load_dataset(directory, vmin=VMIN, vmax=VMAX) -> Dataset:
    root = Path(directory)
    manifest = root / MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {root}")
    fields, split = [], []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            fld = read_field(root / row["path"], family=row["family"])
            fields.append(fld)
            split.append(row["split"])
    return dataset_from_fields(fields, split, vmin, vmax)
