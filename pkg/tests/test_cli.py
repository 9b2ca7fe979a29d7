"""End-to-end CLI tests: gen-channels, train, eval, sweep, nuf."""

import json
import os

import pytest

from vbidet.cli import main
from vbidet.unrolled import load_params


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestGenChannels:
    def test_writes_file_and_manifest(self, workdir):
        cfg = _write(
            workdir / "gen.json",
            {"n_channels": 4, "n_r": 4, "n_t": 2, "source": "iid", "seed": 3},
        )
        assert main(["gen-channels", "--config", cfg, "--out", "ch.bin"]) == 0
        from vbidet.channel import load_channels

        chans = load_channels("ch.bin")
        assert len(chans) == 4 and chans[0].H.shape == (4, 2)
        assert os.path.exists("ch.bin.manifest.json")


class TestTrain:
    def test_offline_train_writes_params_and_loss(self, workdir):
        cfg = _write(
            workdir / "train.json",
            {
                "kind": "vbinet", "n_t": 2, "n_r": 4, "n_layers": 2,
                "batch": 16, "iters": 8, "seed": 1, "lr": 1e-3,
                "snr_range_db": [4.0, 12.0],
            },
        )
        assert main(["train", "--config", cfg, "--out", "net"]) == 0
        params = load_params("net.json")
        assert params.c.size == 2
        lines = open("net_loss.csv").read().splitlines()
        assert lines[0] == "iteration,loss" and len(lines) == 9

    def test_online_train_one_file_per_channel(self, workdir):
        gen = _write(
            workdir / "gen.json",
            {"n_channels": 2, "n_r": 4, "n_t": 2, "source": "iid", "seed": 3},
        )
        main(["gen-channels", "--config", gen, "--out", "ch.bin"])
        cfg = _write(
            workdir / "train.json",
            {
                "kind": "mmnet_iid", "n_t": 2, "n_r": 4, "n_layers": 2,
                "batch": 8, "iters": 5, "iters_online": 2, "seed": 1,
                "mode": "online", "channels_path": "ch.bin",
            },
        )
        assert main(["train", "--config", cfg, "--out", "mm"]) == 0
        assert os.path.exists("mm_ch0000.json") and os.path.exists("mm_ch0001.json")


class TestExperiments:
    def test_sweep_and_seed_override(self, workdir):
        cfg = _write(
            workdir / "sweep.json",
            {
                "kind": "sweep",
                "detectors": [{"family": "zf"}, {"family": "lmmse"}],
                "n_t": 2, "n_r": 4, "snr_grid_db": [6.0], "seed": 1,
                "min_errors": 100, "min_symbols": 2000, "max_symbols": 8000,
                "block_vectors": 256,
            },
        )
        assert main(["sweep", "--config", cfg, "--out", "a.csv"]) == 0
        assert main(["sweep", "--config", cfg, "--out", "b.csv"]) == 0
        assert open("a.csv", "rb").read() == open("b.csv", "rb").read()
        assert main(["sweep", "--config", cfg, "--seed", "2", "--out", "c.csv"]) == 0
        assert open("a.csv", "rb").read() != open("c.csv", "rb").read()
        doc = json.loads(open("a.csv.manifest.json").read())
        assert doc["outputs"]["csv"] == "a.csv"

    def test_eval_single_detector(self, workdir):
        cfg = _write(
            workdir / "eval.json",
            {
                "detector": {"family": "zf"},
                "n_t": 2, "n_r": 4, "snr_grid_db": [6.0], "seed": 1,
                "min_errors": 100, "min_symbols": 1000, "max_symbols": 4000,
                "block_vectors": 128,
            },
        )
        assert main(["eval", "--config", cfg, "--out", "e.csv"]) == 0
        lines = open("e.csv").read().splitlines()
        assert len(lines) == 2 and lines[1].startswith("zf,")

    def test_nuf_runner(self, workdir):
        cfg = _write(
            workdir / "nuf.json",
            {
                "kind": "nuf",
                "detectors": [{"family": "lmmse"}],
                "n_t": 2, "n_r": 4, "snr_grid_db": [6.0],
                "nuf_grid_db": [0.0, 3.0], "seed": 1,
                "min_errors": 100, "min_symbols": 1000, "max_symbols": 4000,
                "block_vectors": 128,
            },
        )
        assert main(["nuf", "--config", cfg, "--out", "n.csv"]) == 0
        lines = open("n.csv").read().splitlines()
        assert len(lines) == 3
