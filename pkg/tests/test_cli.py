import json
import socket
import subprocess
import sys

import pytest

from streamnerf.cli import _raster_shape, main
from streamnerf.dataset import load_dataset

SMALL_CONFIG = {
    "buffer": {"capacity": 30, "target_rate_hz": 50.0},
    "model": {"levels": 2, "table_size": 256, "base_resolution": 4, "hidden_width": 16},
    "render": {"samples_per_ray": 8},
    "train": {"rays_per_step": 64, "max_steps": 20},
    "eval": {"interval": 10, "views": 2, "holdout_every": 5},
}


def cli(*args, **kw):
    return subprocess.run([sys.executable, "-m", "streamnerf", *args], capture_output=True, text=True, **kw)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "helix"
    assert main(["synth", "--frames", "20", "--width", "8", "--height", "8", "--focal", "8", "--out", str(out)]) == 0
    (root / "cfg.json").write_text(json.dumps(SMALL_CONFIG))
    return root


def test_raster_shape():
    assert _raster_shape(300) == (15, 20)
    assert _raster_shape(7) == (1, 7)


def test_synth_raster(tmp_path):
    assert main(["synth", "--trajectory", "raster", "--frames", "6", "--width", "4", "--height", "4",
                 "--focal", "4", "--out", str(tmp_path)]) == 0
    assert len(load_dataset(tmp_path)) == 6


def test_train_offline(data, tmp_path):
    res = cli("train-offline", "--dataset", str(data / "helix"), "--config", str(data / "cfg.json"),
              "--out", str(tmp_path))
    assert res.returncode == 0, res.stderr
    summary = json.loads(res.stdout)
    assert summary["steps"] == 20 and summary["status"] == "max_steps"
    assert (tmp_path / "metrics.csv").exists() and (tmp_path / "model.ckpt").exists()
    assert (tmp_path / "snap_000020.ppm").exists()


def test_publish_into_train_online(data, tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    trainer = subprocess.Popen(
        [sys.executable, "-m", "streamnerf", "train-online", "--listen", f"127.0.0.1:{port}",
         "--config", str(data / "cfg.json"), "--holdout-dataset", str(data / "helix"),
         "--max-steps", "200", "--out", str(tmp_path)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    pub = cli("publish", "--dataset", str(data / "helix"), "--rate", "100", "--holdout-every", "5",
              "--dest", f"127.0.0.1:{port}", timeout=60)
    out, err = trainer.communicate(timeout=120)
    assert pub.returncode == 0, pub.stderr
    assert "sent 16 frames" in pub.stdout
    assert trainer.returncode == 0, err
    summary = json.loads(out)
    assert summary["buffered_images"] == 16
    assert summary["baseline_psnr"] is not None
