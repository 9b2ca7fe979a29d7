"""Experiment command line: train, sweep, layers, nuf, gen-channels, eval.

Every subcommand takes ``--config <file>`` (JSON) plus ``--seed`` and
``--out`` overrides; each run writes its result files next to a manifest
recording the resolved config and its hash.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .channel import ChannelRealization, gen_iid, gen_kronecker, load_channels, save_channels
from .training import TrainConfig, train_offline, train_online
from .unrolled import save_params


def _load_config(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def _apply_overrides(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_path(args, default: str) -> str:
    return args.out if args.out else default


def cmd_train(args) -> int:
    cfg_dict = _apply_overrides(_load_config(args.config), args)
    mode = cfg_dict.get("mode", "offline")
    channels_path = cfg_dict.pop("channels_path", None)
    tc = TrainConfig(**{k: _coerce_tuple(k, v) for k, v in cfg_dict.items()})
    out = _out_path(args, f"{tc.kind}_L{tc.n_layers}")
    if mode == "online":
        if not channels_path:
            raise SystemExit("online training requires channels_path in the config")
        results = train_online(load_channels(channels_path), tc)
        params_files = []
        for k, res in enumerate(results):
            p = f"{out}_ch{k:04d}.json"
            save_params(p, res.params)
            params_files.append(p)
        losses = np.concatenate([r.loss_curve for r in results])
    else:
        res = train_offline(tc)
        p = f"{out}.json"
        save_params(p, res.params)
        params_files = [p]
        losses = res.loss_curve
    loss_csv = f"{out}_loss.csv"
    with open(loss_csv, "w") as f:
        f.write("iteration,loss\n")
        for i, v in enumerate(losses):
            f.write(f"{i},{v!r}\n")
    harness.write_manifest(
        f"{out}.manifest.json", cfg_dict, {"params": params_files, "loss_curve": loss_csv}
    )
    print(f"trained {tc.kind}: {params_files[-1]} (final loss {losses[-1]:.4g})")
    return 0


def _coerce_tuple(key: str, value):
    return tuple(value) if key == "snr_range_db" else value


def _run_experiment(args, runner, default_out: str) -> int:
    cfg_dict = _apply_overrides(_load_config(args.config), args)
    spec = harness.ExperimentSpec.from_dict(cfg_dict)
    out = _out_path(args, default_out)
    result = runner(spec)
    rows = result[0] if isinstance(result, tuple) else result
    harness.write_csv(out, rows)
    harness.write_manifest(out + ".manifest.json", spec.to_dict(), {"csv": out})
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_sweep(args) -> int:
    return _run_experiment(args, harness.run_ser_sweep, "sweep.csv")


def cmd_layers(args) -> int:
    return _run_experiment(args, harness.run_layer_sweep, "layers.csv")


def cmd_nuf(args) -> int:
    return _run_experiment(args, harness.run_noise_uncertainty, "nuf.csv")


def cmd_eval(args) -> int:
    # Single-detector convenience wrapper around the sweep runner.
    cfg_dict = _apply_overrides(_load_config(args.config), args)
    if "detector" in cfg_dict:
        cfg_dict["detectors"] = [cfg_dict.pop("detector")]
    cfg_dict["kind"] = "eval"
    spec = harness.ExperimentSpec.from_dict(cfg_dict)
    out = _out_path(args, "eval.csv")
    rows = harness.run_ser_sweep(spec)
    harness.write_csv(out, rows)
    harness.write_manifest(out + ".manifest.json", spec.to_dict(), {"csv": out})
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_gen_channels(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    n = int(cfg.get("n_channels", 16))
    n_r, n_t = int(cfg["n_r"]), int(cfg["n_t"])
    rho = float(cfg.get("rho", 0.0))
    source = cfg.get("source", "iid")
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC4A9)))
    chans: list[ChannelRealization] = []
    for k in range(n):
        if source == "iid":
            ch = gen_iid(n_r, n_t, rng)
        elif source == "kronecker":
            ch = gen_kronecker(n_r, n_t, rho, rng)
        else:
            raise SystemExit(f"unknown channel source {source!r}")
        chans.append(ChannelRealization(H=ch.H, source=ch.source, subcarrier=k))
    out = _out_path(args, "channels.bin")
    save_channels(out, chans)
    harness.write_manifest(out + ".manifest.json", cfg, {"channels": out})
    print(f"wrote {n} {source} channels ({n_r}x{n_t}) to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vbidet", description="MIMO detection experiments and training"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in [
        ("train", cmd_train, "train a detector network"),
        ("sweep", cmd_sweep, "SER vs SNR sweep"),
        ("layers", cmd_layers, "SER vs layer count"),
        ("nuf", cmd_nuf, "noise-uncertainty study"),
        ("eval", cmd_eval, "evaluate one detector"),
        ("gen-channels", cmd_gen_channels, "write a channel file"),
    ]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
