"""Monte-Carlo SER evaluation and the four study designs.

Experiments are driven by JSON configs (see README); every reported SER
carries its error/symbol counts, the run seed, and a hash of the resolved
config, and re-running the same config+seed reproduces the CSV byte for
byte.  Evaluation RNG streams are derived from ``(seed, EVAL_DOMAIN,
detector, snr, block)`` so they never collide with training streams, and
deliberately exclude the noise-uncertainty factor so detectors see
identical samples across NUF values.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from . import unrolled as ur
from .channel import (
    draw_samples_stacked,
    gen_iid_stacked,
    gen_kronecker_stacked,
    load_channels,
    noise_var_for_snr,
)
from .classic import lmmse_stacked, ml_stacked, zf_stacked
from .constellation import Constellation, hard_decision, make_qam
from .ifvb import IfvbConfig, ifvb_iterates, improved_ifvb_iterates
from .linalg import truncated_svd_stacked
from .training import TrainConfig, train_offline

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "StoppingRule",
    "CSV_HEADER",
    "build_detector",
    "evaluate_ser",
    "run_ser_sweep",
    "run_layer_sweep",
    "run_noise_uncertainty",
    "write_csv",
    "write_manifest",
    "config_hash",
    "EVAL_DOMAIN",
]

EVAL_DOMAIN = 0x5EBA11
CSV_HEADER = "detector,snr_db,nuf_db,layers,ser,symbols,errors,seed,config_hash"


@dataclass(frozen=True)
class StoppingRule:
    """Stop once enough errors AND symbols accrued, or at the symbol cap."""

    min_errors: int = 500
    min_symbols: int = 100_000
    max_symbols: int = 10_000_000

    def done(self, errors: int, symbols: int) -> bool:
        if symbols >= self.max_symbols:
            return True
        return errors >= self.min_errors and symbols >= self.min_symbols


@dataclass(frozen=True)
class ResultRow:
    detector: str
    snr_db: float
    nuf_db: float
    layers: int
    ser: float
    symbols: int
    errors: int
    seed: int
    config_hash: str

    def to_csv(self) -> str:
        return ",".join(
            [
                self.detector,
                repr(float(self.snr_db)),
                repr(float(self.nuf_db)),
                str(self.layers),
                repr(float(self.ser)),
                str(self.symbols),
                str(self.errors),
                str(self.seed),
                self.config_hash,
            ]
        )


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment run."""

    kind: str  # sweep | layers | nuf | eval
    detectors: list = field(default_factory=list)  # list of detector config dicts
    n_t: int = 16
    n_r: int = 32
    modulation: int = 4
    channel: dict = field(default_factory=lambda: {"source": "iid"})
    snr_grid_db: list = field(default_factory=lambda: [0.0, 4.0, 8.0, 12.0])
    nuf_grid_db: list = field(default_factory=lambda: [0.0])
    layer_grid: list = field(default_factory=lambda: [1, 2, 4, 6, 8, 10, 20])
    seed: int = 0
    min_errors: int = 500
    min_symbols: int = 100_000
    max_symbols: int = 10_000_000
    block_vectors: int = 1024
    train: dict = field(default_factory=dict)  # layer-sweep training overrides
    allow_mmnet_full: bool = False
    allow_oampnet_large: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def stopping(self) -> StoppingRule:
        if self.min_errors < 100:
            raise ValueError("min_errors below 100 makes reported SERs unauditable")
        return StoppingRule(self.min_errors, self.min_symbols, self.max_symbols)


def config_hash(d: dict) -> str:
    canon = json.dumps(d, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Detector registry
# ---------------------------------------------------------------------------


@dataclass
class Detector:
    """A named, batch-callable detector bound to its parameters."""

    name: str
    family: str
    needs_noise_var: bool
    layers: int
    fn: object  # (y3, h3, nv_vec) -> hard indices (B, N_t)


def _load_any_params(dcfg: dict):
    if "params" not in dcfg:
        raise ValueError(f"detector {dcfg.get('family')} requires a 'params' file or object")
    p = dcfg["params"]
    return ur.load_params(p) if isinstance(p, str) else p


def build_detector(dcfg: dict, constellation: Constellation, allow_mmnet_full=False) -> Detector:
    """Build a batch detector from a config dict ({"family": ..., options})."""
    family = dcfg["family"]
    name = dcfg.get("name", family)
    pts = constellation.points

    if family == "zf":
        fn = lambda y3, h3, nv: hard_decision(zf_stacked(y3, h3)[..., 0], constellation)
        return Detector(name, family, False, 0, fn)
    if family == "lmmse":
        fn = lambda y3, h3, nv: hard_decision(lmmse_stacked(y3, h3, nv)[..., 0], constellation)
        return Detector(name, family, True, 0, fn)
    if family == "ml":
        fn = lambda y3, h3, nv: ml_stacked(y3, h3, constellation)[0]
        return Detector(name, family, False, 0, fn)
    if family == "ifvb":
        cfg = IfvbConfig(
            t_choice=dcfg.get("t_choice", "diag_gram"),
            max_iter=int(dcfg.get("max_iter", 100)),
        )

        def fn(y3, h3, nv, cfg=cfg):
            xs, _ = ifvb_iterates(y3, h3, pts, cfg)
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, False, cfg.max_iter, fn)
    if family == "improved_ifvb":
        cfg = IfvbConfig(
            max_iter=int(dcfg.get("max_iter", 100)), delta=float(dcfg.get("delta", 1.0))
        )

        def fn(y3, h3, nv, cfg=cfg):
            svd = truncated_svd_stacked(np.ascontiguousarray(h3))
            xs, _, _ = improved_ifvb_iterates(y3, svd, pts, cfg)
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, False, cfg.max_iter, fn)
    if family == "oamp":
        iters = int(dcfg.get("max_iter", 100))

        def fn(y3, h3, nv, iters=iters):
            trace = bl.oamp_detect(y3, h3, constellation, nv, iters)
            return trace.result.hard

        return Detector(name, family, True, iters, fn)
    if family == "oampnet":
        params = _load_any_params(dcfg)
        n_layers = int(dcfg.get("layers", params.gamma.size))

        def fn(y3, h3, nv, params=params, n_layers=n_layers):
            xs = bl.oampnet_layers(
                y3, h3, nv[:, None, None], pts,
                params.gamma, params.theta, params.phi, params.xi, n_layers,
            )
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, True, n_layers, fn)
    if family == "mmnet_iid":
        params = _load_any_params(dcfg)
        n_layers = int(dcfg.get("layers", params.theta1.size))

        def fn(y3, h3, nv, params=params, n_layers=n_layers):
            xs = bl.mmnet_iid_layers(
                y3, h3, nv[:, None, None], pts, params.theta1, params.theta2, n_layers
            )
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, True, n_layers, fn)
    if family == "mmnet_full":
        if not allow_mmnet_full:
            raise ValueError(
                "mmnet_full is an online-training detector; offline sweeps refuse it "
                "unless allow_mmnet_full is set"
            )
        params = _load_any_params(dcfg)
        n_layers = int(dcfg.get("layers", params.a_re.shape[0]))

        def fn(y3, h3, nv, params=params, n_layers=n_layers):
            trace = bl.mmnet_full_forward(y3, h3, constellation, nv, params, n_layers)
            return trace.result.hard

        return Detector(name, family, True, n_layers, fn)
    if family == "vbinet":
        params = _load_any_params(dcfg)
        n_layers = int(dcfg.get("layers", params.c.size))

        def fn(y3, h3, nv, params=params, n_layers=n_layers):
            xs, _ = ur.vbinet_layers(
                y3, h3, pts, params.psi.reshape(-1, 1), params.c, n_layers
            )
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, False, n_layers, fn)
    if family == "improved_vbinet":
        params = _load_any_params(dcfg)
        n_layers = int(dcfg.get("layers", params.c.size))

        def fn(y3, h3, nv, params=params, n_layers=n_layers):
            svd = truncated_svd_stacked(np.ascontiguousarray(h3))
            xs, _, _ = ur.improved_vbinet_layers(
                y3, svd, pts, params.psi.reshape(-1, 1),
                params.delta, params.c, params.kappa, n_layers,
            )
            return hard_decision(xs[-1][..., 0], constellation)

        return Detector(name, family, False, n_layers, fn)
    raise ValueError(f"unknown detector family {family!r}")


# ---------------------------------------------------------------------------
# Monte-Carlo evaluation
# ---------------------------------------------------------------------------


class _ChannelSource:
    """Per-block channel drawing for iid / kronecker / file sources."""

    def __init__(self, cfg: dict, n_r: int, n_t: int):
        self.cfg = cfg
        self.n_r = n_r
        self.n_t = n_t
        self.source = cfg.get("source", "iid")
        if self.source == "file":
            self._channels = load_channels(cfg["path"])
        elif self.source == "fixed":
            self._channels = [cfg["H"]]
        elif self.source not in ("iid", "kronecker"):
            raise ValueError(f"unknown channel source {self.source!r}")

    def draw(self, b: int, block_idx: int, rng: np.random.Generator) -> np.ndarray:
        if self.source == "iid":
            return gen_iid_stacked(b, self.n_r, self.n_t, rng)
        if self.source == "kronecker":
            return gen_kronecker_stacked(b, self.n_r, self.n_t, float(self.cfg["rho"]), rng)
        chans = self._channels
        idx = (block_idx * b + np.arange(b)) % len(chans)
        hs = [chans[i].H if hasattr(chans[i], "H") else np.asarray(chans[i]) for i in idx]
        return np.stack(hs).astype(np.complex128)


def _block_rng(seed: int, det_name: str, snr_db: float, block_idx: int) -> np.random.Generator:
    tag = zlib.crc32(det_name.encode())
    snr_key = int(round(snr_db * 1000.0)) & 0xFFFFFFFF
    return np.random.default_rng(
        np.random.SeedSequence((seed, EVAL_DOMAIN, tag, snr_key, block_idx))
    )


def evaluate_ser(
    det: Detector,
    source: _ChannelSource,
    constellation: Constellation,
    snr_db: float,
    stop: StoppingRule,
    seed: int,
    nuf_db: float = 0.0,
    block_vectors: int = 1024,
    cfg_hash: str = "-",
) -> ResultRow:
    """Count symbol errors until the stopping rule is met.

    The NUF scales only the noise variance handed to detectors that take
    one; sample generation always uses the true value, and the RNG stream
    excludes the NUF so all NUF rows see identical samples.
    """
    eta = 10.0 ** (nuf_db / 10.0)
    errors = 0
    symbols = 0
    block_idx = 0
    while not stop.done(errors, symbols):
        rng = _block_rng(seed, det.name, snr_db, block_idx)
        h3 = source.draw(block_vectors, block_idx, rng)
        nv = np.atleast_1d(noise_var_for_snr(h3, snr_db))
        idx, _, y3 = draw_samples_stacked(h3, constellation, nv, rng)
        hard = det.fn(y3, h3, nv * eta)
        errors += int(np.sum(hard != idx))
        symbols += idx.size
        block_idx += 1
    return ResultRow(
        detector=det.name,
        snr_db=float(snr_db),
        nuf_db=float(nuf_db),
        layers=det.layers,
        ser=errors / symbols,
        symbols=symbols,
        errors=errors,
        seed=seed,
        config_hash=cfg_hash,
    )


# ---------------------------------------------------------------------------
# Study designs
# ---------------------------------------------------------------------------


# OAMP's per-layer N_r x N_r inverse makes it prohibitive at large scale;
# the large-scale study excludes it unless explicitly forced.
_OAMPNET_NR_LIMIT = 64


def _detectors(spec: ExperimentSpec, constellation: Constellation) -> list[Detector]:
    dets = []
    for d in spec.detectors:
        if (
            d["family"] in ("oamp", "oampnet")
            and spec.n_r >= _OAMPNET_NR_LIMIT
            and not spec.allow_oampnet_large
        ):
            raise ValueError(
                f"{d['family']} at N_r={spec.n_r} is computationally prohibitive "
                "(per-layer N_r x N_r inverse); set allow_oampnet_large to force it"
            )
        dets.append(build_detector(d, constellation, allow_mmnet_full=spec.allow_mmnet_full))
    return dets


def run_ser_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    """SER of every configured detector across the SNR grid."""
    constellation = make_qam(spec.modulation)
    dets = _detectors(spec, constellation)
    source = _ChannelSource(spec.channel, spec.n_r, spec.n_t)
    h = config_hash(spec.to_dict())
    rows = []
    for det in dets:
        for snr in spec.snr_grid_db:
            rows.append(
                evaluate_ser(
                    det, source, constellation, snr, spec.stopping, spec.seed,
                    block_vectors=spec.block_vectors, cfg_hash=h,
                )
            )
    return rows


def run_noise_uncertainty(spec: ExperimentSpec) -> list[ResultRow]:
    """SER across the NUF grid; one row per (detector, snr, nuf) for parity."""
    constellation = make_qam(spec.modulation)
    dets = _detectors(spec, constellation)
    source = _ChannelSource(spec.channel, spec.n_r, spec.n_t)
    h = config_hash(spec.to_dict())
    rows = []
    for det in dets:
        for snr in spec.snr_grid_db:
            for nuf in spec.nuf_grid_db:
                rows.append(
                    evaluate_ser(
                        det, source, constellation, snr, spec.stopping, spec.seed,
                        nuf_db=nuf, block_vectors=spec.block_vectors, cfg_hash=h,
                    )
                )
    return rows


def run_layer_sweep(spec: ExperimentSpec) -> tuple[list[ResultRow], dict]:
    """Train (or load) one model per layer count and evaluate at a fixed SNR.

    The training config comes from ``spec.train`` (kind, batch, iters, lr,
    snr_range_db, ...); returns the rows plus {L: params}.
    """
    constellation = make_qam(spec.modulation)
    if len(spec.snr_grid_db) != 1:
        raise ValueError("layer sweep expects a single evaluation SNR")
    tcfg = dict(spec.train)
    kind = tcfg.pop("kind", "vbinet")
    source = _ChannelSource(spec.channel, spec.n_r, spec.n_t)
    h = config_hash(spec.to_dict())
    rows, trained = [], {}
    for n_layers in spec.layer_grid:
        cfg = TrainConfig(
            kind=kind, n_t=spec.n_t, n_r=spec.n_r, n_layers=int(n_layers),
            modulation=spec.modulation, seed=spec.seed,
            channel=spec.channel.get("source", "iid"),
            rho=float(spec.channel.get("rho", 0.0)),
            **tcfg,
        )
        params = train_offline(cfg, constellation).params
        trained[int(n_layers)] = params
        det = build_detector(
            {"family": kind, "name": f"{kind}_L{n_layers}", "params": params},
            constellation,
        )
        rows.append(
            evaluate_ser(
                det, source, constellation, spec.snr_grid_db[0], spec.stopping,
                spec.seed, block_vectors=spec.block_vectors, cfg_hash=h,
            )
        )
    return rows, trained


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def write_csv(path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.to_csv() + "\n")


def write_manifest(path, spec_dict: dict, outputs: dict) -> None:
    manifest = {
        "config": spec_dict,
        "config_hash": config_hash(spec_dict),
        "outputs": outputs,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
