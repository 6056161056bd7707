import csv

import numpy as np
import pytest

from field_codec import checkpoint as ckpt
from field_codec.cli import main
from field_codec.config import ConfigError, load_config, parse_config_text
from field_codec.data import generate, load_dataset, read_field, write_field
from field_codec.tensor import RngStream

TINY_SETS = ["latent_dim=4", "hidden_features=16", "hidden_layers=1",
             "samples_per_family=2", "height=12", "width=12",
             "epochs=6", "checkpoint_every=3", "batch_size=5", "lr=1e-3"]


def sets(extra=()):
    out = []
    for kv in list(TINY_SETS) + list(extra):
        out += ["--set", kv]
    return out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, run = root / "data", root / "run"
    assert main(["gen-data", "--data-dir", str(data), *sets()]) == 0
    assert main(["train", "--data-dir", str(data), "--out-dir", str(run),
                 "--deterministic", *sets()]) == 0
    return root, data, run


def test_gen_data_layout(workspace):
    _, data, _ = workspace
    ds = load_dataset(data)
    assert len(ds) == 10 and (ds.H, ds.W) == (12, 12)
    assert (data / "manifest.csv").exists()


def test_train_outputs(workspace):
    _, _, run = workspace
    assert (run / "checkpoint_00003.srnc").exists() and (run / "checkpoint_00006.srnc").exists()
    assert (run / "final.srnc").exists()
    rows = list(csv.reader(open(run / "history.csv")))
    assert len(rows) == 1 + 6
    tr, _ = ckpt.load(run / "final.srnc")
    assert tr.epoch == 6


def test_eval_prints_accounting(workspace, capsys):
    _, data, run = workspace
    capsys.readouterr()
    assert main(["eval", "--data-dir", str(data), "--checkpoint", str(run / "final.srnc"),
                 "--out-dir", str(run / "eval")]) == 0
    out = capsys.readouterr().out
    assert "144 -> 4 = 36.0:1" in out
    # decoder: (16*6+16) + (16*16+16) + (1*16+1) = 401; latents 10*4
    assert "decoder 401 + latents 40 = 441" in out
    assert (run / "eval" / "metrics.csv").exists() and (run / "eval" / "summary.csv").exists()


def test_reconstruct_native_and_dense(workspace, capsys):
    _, data, run = workspace
    out = run / "rec"
    common = ["--data-dir", str(data), "--checkpoint", str(run / "final.srnc"), "--out-dir", str(out)]
    assert main(["reconstruct", "--index", "3", *common]) == 0
    assert "PSNR" in capsys.readouterr().out
    assert read_field(out / "recon_00003_12x12.vfld").shape == (12, 12)
    assert (out / "error_00003.pgm").exists()
    assert main(["reconstruct", "--index", "3", "--resolution", "48", *common]) == 0
    assert read_field(out / "recon_00003_48x48.vfld").shape == (48, 48)
    assert main(["reconstruct", "--index", "99", *common]) == 2


def test_interp(workspace):
    _, data, run = workspace
    out = run / "interp"
    assert main(["interp", "--index-a", "0", "--index-b", "9", "--data-dir", str(data),
                 "--checkpoint", str(run / "final.srnc"), "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "interpolation.csv")))
    assert len(rows) == 7
    assert float(rows[0]["mse_to_A"]) == 0.0 and float(rows[-1]["mse_to_B"]) == 0.0


def test_encode(workspace, capsys):
    root, _, run = workspace
    write_field(root / "new.vfld", generate("CurveVel", 12, 12, RngStream(77)))
    assert main(["encode", "--field", str(root / "new.vfld"), "--checkpoint",
                 str(run / "final.srnc"), "--out-dir", str(run / "enc"),
                 "--set", "encode_steps=20"]) == 0
    assert np.load(run / "enc" / "new_latent.npy").shape == (4,)
    assert read_field(run / "enc" / "new_recon.vfld").shape == (12, 12)


def test_spectrum(tmp_path, capsys):
    assert main(["spectrum", "--size", "16", "--trials", "2", "--steps", "20",
                 "--out-dir", str(tmp_path)]) == 0
    assert "/2 trials" in capsys.readouterr().out
    rows = list(csv.DictReader(open(tmp_path / "spectral_trials.csv")))
    assert len(rows) == 2
    assert (tmp_path / "spectrum_siren_residual.csv").read_text().startswith("bin,power")


def test_resume_from_checkpoint(workspace, tmp_path):
    _, data, run = workspace
    out = tmp_path / "resume"
    assert main(["train", "--data-dir", str(data), "--checkpoint", str(run / "checkpoint_00003.srnc"),
                 "--out-dir", str(out), "--deterministic", *sets()]) == 0
    a, _ = ckpt.load(out / "final.srnc")
    b, _ = ckpt.load(run / "final.srnc")
    assert a.latents.tobytes() == b.latents.tobytes()


# --- exit codes -------------------------------------------------------------

def test_missing_data_dir(tmp_path):
    assert main(["eval", "--data-dir", str(tmp_path / "nope"), "--checkpoint", "x.srnc"]) == 3


def test_bad_checkpoint_file(workspace, tmp_path):
    _, data, _ = workspace
    (tmp_path / "bad.srnc").write_bytes(b"nonsense")
    assert main(["eval", "--data-dir", str(data), "--checkpoint", str(tmp_path / "bad.srnc")]) == 4


def test_dataset_mismatch(workspace, tmp_path):
    _, _, run = workspace
    other = tmp_path / "other"
    assert main(["gen-data", "--data-dir", str(other), *sets(["seed=5"])]) == 0
    assert main(["eval", "--data-dir", str(other), "--checkpoint", str(run / "final.srnc")]) == 4


def test_unknown_config_key(tmp_path):
    assert main(["gen-data", "--data-dir", str(tmp_path), "--set", "colour=blue"]) == 2
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 5\nhidden = 3\n")
    assert main(["gen-data", "--data-dir", str(tmp_path), "--config", str(cfg)]) == 2


def test_config_file_parsing(tmp_path):
    assert parse_config_text("# comment\n\nlr = 0.01  # inline\nepochs=7\n") == {"lr": "0.01", "epochs": "7"}
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 7\nlr = 0.01\n")
    rc = load_config(cfg, {"epochs": "9"})
    assert rc.epochs == 9 and rc.lr == 0.01
    with pytest.raises(ConfigError):
        load_config(None, {"epochs": "many"})
