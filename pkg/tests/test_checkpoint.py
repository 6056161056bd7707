import numpy as np
import pytest

from field_codec import checkpoint as ckpt
from field_codec.data import build_dataset, make_grid
from field_codec.export import read_pgm, write_pgm
from field_codec.siren import DecoderConfig, decoder_forward
from field_codec.training import TrainConfig, Trainer

from conftest import TINY


@pytest.fixture
def setup():
    ds = build_dataset(1, 8, 8, seed=3)
    tr = Trainer.create(len(ds), TINY, TrainConfig(epochs=3, batch_size=2, lr=1e-3, seed=7))
    tr.fit(ds)
    return ds, tr


def forward_bytes(tr, ds):
    vals, _ = decoder_forward(tr.decoder, make_grid(ds.H, ds.W), tr.latents)
    return vals.tobytes()


def test_round_trip_forward_bit_identical(setup, tmp_path):
    ds, tr = setup
    path = ckpt.save(tr, tmp_path / "a.srnc", ds.fingerprint())
    back, h = ckpt.load(path)
    assert h == ds.fingerprint()
    assert back.epoch == tr.epoch == 3
    assert forward_bytes(back, ds) == forward_bytes(tr, ds)
    assert [r.total_loss for r in back.history] == [r.total_loss for r in tr.history]


def test_resume_next_step_bit_identical(setup, tmp_path):
    ds, tr = setup
    ckpt.save(tr, tmp_path / "a.srnc")
    back, _ = ckpt.load(tmp_path / "a.srnc")
    tr.fit(ds, epochs=5)
    back.fit(ds, epochs=5)
    assert forward_bytes(back, ds) == forward_bytes(tr, ds)
    assert back.latents.tobytes() == tr.latents.tobytes()
    assert back.opt.t == tr.opt.t
    assert [r.total_loss for r in back.history] == [r.total_loss for r in tr.history]


def test_bad_magic_and_version(setup, tmp_path):
    ds, tr = setup
    raw = ckpt.save(tr, tmp_path / "a.srnc").read_bytes()
    (tmp_path / "m.srnc").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "m.srnc")
    (tmp_path / "v.srnc").write_bytes(raw[:4] + (9).to_bytes(4, "little") + raw[8:])
    with pytest.raises(ckpt.CheckpointVersionError):
        ckpt.load(tmp_path / "v.srnc")
    (tmp_path / "t.srnc").write_bytes(raw[:-10])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "t.srnc")


def test_float64_trainer_rejected(tmp_path):
    tr = Trainer.create(2, DecoderConfig(2, 4, 1), TrainConfig(epochs=1), dtype=np.float64)
    with pytest.raises(ckpt.CheckpointError):
        ckpt.save(tr, tmp_path / "x.srnc")


def test_pgm_round_trip(tmp_path, rng):
    v = rng.uniform(1500, 4000, (7, 9))
    write_pgm(tmp_path / "a.pgm", v, 1500, 4000)
    back, lo, hi = read_pgm(tmp_path / "a.pgm")
    assert (lo, hi) == (1500, 4000)
    assert back.shape == (7, 9)
    # 8-bit quantization over the declared range
    assert np.abs(back - v).max() <= 2500 / 255 / 2 + 1e-6
