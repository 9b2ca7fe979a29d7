"""Loss, exact gradients, Adam, and the offline/online training loops.

Gradients are computed by reverse-mode differentiation through the
unrolled layer graphs (:mod:`vbidet.autodiff`); the finite-difference
contract in the test suite is the independent check that keeps them
honest.  All learnable parameters are real; parameter vectors follow the
per-kind orderings documented in :func:`pack_params`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import baselines as bl
from . import unrolled as ur
from .channel import (
    ChannelRealization,
    Sample,
    draw_samples_stacked,
    gen_iid_stacked,
    gen_kronecker_stacked,
    noise_var_for_snr,
)
from .constellation import Constellation, make_qam
from .ifvb import DetectionTrace
from .linalg import truncated_svd_stacked

__all__ = [
    "TrainConfig",
    "TrainResult",
    "AdamState",
    "layer_loss",
    "gradient",
    "adam_step",
    "train_offline",
    "train_online",
    "pack_params",
    "unpack_params",
    "TRAINABLE_KINDS",
]

TRAINABLE_KINDS = ("vbinet", "improved_vbinet", "oampnet", "mmnet_iid", "mmnet_full")
_OFFLINE_KINDS = ("vbinet", "improved_vbinet", "oampnet", "mmnet_iid")

# Seed-domain tags keeping training streams disjoint from evaluation.
_TRAIN_DOMAIN = 0x7E41
_ONLINE_DOMAIN = 0x7E42


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on; hashable into the manifest."""

    kind: str
    n_t: int
    n_r: int
    n_layers: int = 10
    modulation: int = 4
    batch: int = 128
    iters: int = 2000
    snr_range_db: tuple[float, float] = (2.0, 16.0)
    lr: float = 1e-3
    seed: int = 0
    mode: str = "offline"  # offline | online
    channel: str = "iid"  # iid | kronecker
    rho: float = 0.0
    iters_online: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    allow_offline_mmnet_full: bool = False

    def __post_init__(self):
        if self.batch < 1 or self.iters < 1 or self.n_layers < 1:
            raise ValueError("batch, iters and n_layers must be >= 1")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError("snr_range_db must be (lo, hi) with lo <= hi")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kind not in TRAINABLE_KINDS:
            raise ValueError(f"unknown trainable kind {self.kind!r}")


@dataclass
class TrainResult:
    params: object
    loss_curve: np.ndarray


@dataclass
class AdamState:
    """First/second moment accumulators plus the bias-correction counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n: int, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(vec: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One Adam update with bias correction; mutates ``state``, returns new params."""
    if vec.shape != grad.shape or vec.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment lengths disagree")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return vec - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def layer_loss(trace: DetectionTrace, x_true: np.ndarray) -> float:
    """Mean over layers of the squared error of every layer's output.

    ``x_true`` must match the trace's sample shape ((N_t,) for a single
    sample, (B, N_t) for batched traces); batched traces are averaged over
    the batch.
    """
    outputs = trace.layer_outputs()
    if not outputs:
        raise ValueError("trace holds no layer outputs")
    x_true = np.asarray(x_true)
    if outputs[-1].shape != x_true.shape:
        raise ValueError(
            f"layer outputs of shape {outputs[-1].shape} do not match x_true {x_true.shape}"
        )
    n_batch = 1 if x_true.ndim == 1 else x_true.shape[0]
    total = sum(float(np.sum(np.abs(x_t - x_true) ** 2)) for x_t in outputs)
    return total / (len(outputs) * n_batch)


def _loss_node(xs: list, x3: np.ndarray, n_layers: int, n_batch: int):
    total = None
    for x_t in xs[1:]:
        term = ad.asum(ad.absq(x_t - x3))
        total = term if total is None else total + term
    return total / float(n_layers * n_batch)


# ---------------------------------------------------------------------------
# Parameter packing (documented flat orderings)
# ---------------------------------------------------------------------------


def pack_params(params) -> np.ndarray:
    """Flatten a parameter object.

    Orderings: vbinet [psi, c]; improved_vbinet [psi, delta, c, kappa];
    oampnet [gamma, theta, phi, xi]; mmnet_iid [theta1, theta2];
    mmnet_full per layer [a_re.ravel, a_im.ravel, theta2.ravel].
    """
    if isinstance(params, ur.VbinetParams):
        return np.concatenate([params.psi, params.c])
    if isinstance(params, ur.ImprovedVbinetParams):
        return np.concatenate([params.psi, params.delta, params.c, params.kappa])
    if isinstance(params, bl.OampnetParams):
        return np.concatenate([params.gamma, params.theta, params.phi, params.xi])
    if isinstance(params, bl.MmnetIidParams):
        return np.concatenate([params.theta1, params.theta2])
    if isinstance(params, bl.MmnetFullParams):
        blocks = []
        for t in range(params.a_re.shape[0]):
            blocks += [params.a_re[t].ravel(), params.a_im[t].ravel(), params.theta2[t].ravel()]
        return np.concatenate(blocks)
    raise TypeError(f"unsupported parameter object {type(params)!r}")


def unpack_params(template, vec: np.ndarray):
    """Rebuild a parameter object of the template's kind from a flat vector."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != pack_params(template).size:
        raise ValueError("flat vector length does not match the template")
    if isinstance(template, ur.VbinetParams):
        n_t, n_l = template.psi.size, template.c.size
        return ur.VbinetParams(psi=vec[:n_t].copy(), c=vec[n_t : n_t + n_l].copy())
    if isinstance(template, ur.ImprovedVbinetParams):
        n_t, n_l = template.psi.size, template.c.size
        parts = np.split(vec, [n_t, n_t + n_l, n_t + 2 * n_l])
        return ur.ImprovedVbinetParams(
            psi=parts[0].copy(), delta=parts[1].copy(), c=parts[2].copy(), kappa=parts[3].copy()
        )
    if isinstance(template, bl.OampnetParams):
        n_l = template.gamma.size
        parts = np.split(vec, [n_l, 2 * n_l, 3 * n_l])
        return bl.OampnetParams(
            gamma=parts[0].copy(), theta=parts[1].copy(), phi=parts[2].copy(), xi=parts[3].copy()
        )
    if isinstance(template, bl.MmnetIidParams):
        n_l = template.theta1.size
        return bl.MmnetIidParams(theta1=vec[:n_l].copy(), theta2=vec[n_l:].copy())
    if isinstance(template, bl.MmnetFullParams):
        n_l, n_t, n_r = template.a_re.shape
        per = 2 * n_t * n_r + 2 * n_t
        a_re = np.empty_like(template.a_re)
        a_im = np.empty_like(template.a_im)
        theta2 = np.empty_like(template.theta2)
        for t in range(n_l):
            block = vec[t * per : (t + 1) * per]
            a_re[t] = block[: n_t * n_r].reshape(n_t, n_r)
            a_im[t] = block[n_t * n_r : 2 * n_t * n_r].reshape(n_t, n_r)
            theta2[t] = block[2 * n_t * n_r :].reshape(n_t, 2)
        return bl.MmnetFullParams(a_re=a_re, a_im=a_im, theta2=theta2)
    raise TypeError(f"unsupported parameter object {type(template)!r}")


# ---------------------------------------------------------------------------
# Tape leaves and the forward dispatch
# ---------------------------------------------------------------------------


def _make_leaves(kind: str, params) -> dict:
    if kind == "vbinet":
        return {
            "psi": ad.leaf(params.psi.reshape(-1, 1)),
            "c": [ad.leaf(v) for v in params.c],
        }
    if kind == "improved_vbinet":
        return {
            "psi": ad.leaf(params.psi.reshape(-1, 1)),
            "delta": [ad.leaf(v) for v in params.delta],
            "c": [ad.leaf(v) for v in params.c],
            "kappa": [ad.leaf(v) for v in params.kappa],
        }
    if kind == "oampnet":
        return {
            k: [ad.leaf(v) for v in getattr(params, k)]
            for k in ("gamma", "theta", "phi", "xi")
        }
    if kind == "mmnet_iid":
        return {
            "theta1": [ad.leaf(v) for v in params.theta1],
            "theta2": [ad.leaf(v) for v in params.theta2],
        }
    if kind == "mmnet_full":
        n_l = params.a_re.shape[0]
        return {
            "a_re": [ad.leaf(params.a_re[t]) for t in range(n_l)],
            "a_im": [ad.leaf(params.a_im[t]) for t in range(n_l)],
            "t2_re": [ad.leaf(params.theta2[t, :, 0].reshape(-1, 1)) for t in range(n_l)],
            "t2_im": [ad.leaf(params.theta2[t, :, 1].reshape(-1, 1)) for t in range(n_l)],
        }
    raise ValueError(f"unknown trainable kind {kind!r}")


def _grad_of(node: ad.Node) -> np.ndarray:
    return np.zeros(node.value.shape) if node.grad is None else node.grad


def _pack_grads(kind: str, leaves: dict) -> np.ndarray:
    if kind == "vbinet":
        return np.concatenate(
            [_grad_of(leaves["psi"]).ravel(), [float(_grad_of(n)) for n in leaves["c"]]]
        )
    if kind == "improved_vbinet":
        return np.concatenate(
            [_grad_of(leaves["psi"]).ravel()]
            + [[float(_grad_of(n)) for n in leaves[k]] for k in ("delta", "c", "kappa")]
        )
    if kind == "oampnet":
        return np.concatenate(
            [[float(_grad_of(n)) for n in leaves[k]] for k in ("gamma", "theta", "phi", "xi")]
        )
    if kind == "mmnet_iid":
        return np.concatenate(
            [[float(_grad_of(n)) for n in leaves[k]] for k in ("theta1", "theta2")]
        )
    if kind == "mmnet_full":
        blocks = []
        for t in range(len(leaves["a_re"])):
            g_re = _grad_of(leaves["t2_re"][t]).ravel()
            g_im = _grad_of(leaves["t2_im"][t]).ravel()
            blocks += [
                _grad_of(leaves["a_re"][t]).ravel(),
                _grad_of(leaves["a_im"][t]).ravel(),
                np.stack([g_re, g_im], axis=-1).ravel(),
            ]
        return np.concatenate(blocks)
    raise ValueError(f"unknown trainable kind {kind!r}")


@dataclass
class Batch:
    """One training batch in stacked layout."""

    y3: np.ndarray  # (B, N_r, 1)
    h3: np.ndarray  # (B, N_r, N_t)
    x3: np.ndarray  # (B, N_t, 1)
    x_idx: np.ndarray  # (B, N_t)
    noise_var: np.ndarray  # (B,)
    svd: object = None  # SvdFactors, filled lazily for the SVD-domain net

    @property
    def size(self) -> int:
        return self.y3.shape[0]


def _forward_xs(kind: str, leaves: dict, batch: Batch, points: np.ndarray, n_layers: int):
    if kind == "vbinet":
        xs, _ = ur.vbinet_layers(batch.y3, batch.h3, points, leaves["psi"], leaves["c"], n_layers)
        return xs
    if kind == "improved_vbinet":
        svd = batch.svd if batch.svd is not None else truncated_svd_stacked(batch.h3)
        xs, _, _ = ur.improved_vbinet_layers(
            batch.y3, svd, points,
            leaves["psi"], leaves["delta"], leaves["c"], leaves["kappa"], n_layers,
        )
        return xs
    nv_col = batch.noise_var[:, None, None]
    if kind == "oampnet":
        return bl.oampnet_layers(
            batch.y3, batch.h3, nv_col, points,
            leaves["gamma"], leaves["theta"], leaves["phi"], leaves["xi"], n_layers,
        )
    if kind == "mmnet_iid":
        return bl.mmnet_iid_layers(
            batch.y3, batch.h3, nv_col, points, leaves["theta1"], leaves["theta2"], n_layers
        )
    if kind == "mmnet_full":
        a_seq = [re + 1j * im for re, im in zip(leaves["a_re"], leaves["a_im"])]
        th2_seq = list(zip(leaves["t2_re"], leaves["t2_im"]))
        return bl.mmnet_full_layers(batch.y3, batch.h3, nv_col, points, a_seq, th2_seq, n_layers)
    raise ValueError(f"unknown trainable kind {kind!r}")


def loss_and_grad(
    kind: str, params, batch: Batch, constellation: Constellation, n_layers: int
) -> tuple[float, np.ndarray]:
    """Mean batch loss and its exact gradient w.r.t. every learnable parameter."""
    leaves = _make_leaves(kind, params)
    xs = _forward_xs(kind, leaves, batch, constellation.points, n_layers)
    for t, x_t in enumerate(xs):
        if not np.all(np.isfinite(ad.value_of(x_t).view(np.float64))):
            raise FloatingPointError(f"non-finite layer output at layer {t}")
    node = _loss_node(xs, batch.x3, n_layers, batch.size)
    ad.backward(node)
    g = _pack_grads(kind, leaves)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient")
    return float(node.value), g


def batch_from_samples(
    pairs: list[tuple[ChannelRealization | np.ndarray, Sample]]
) -> Batch:
    """Assemble a Batch from (channel, sample) pairs (the public grad surface)."""
    hs = [p[0].H if isinstance(p[0], ChannelRealization) else np.asarray(p[0]) for p in pairs]
    samples = [p[1] for p in pairs]
    return Batch(
        y3=np.stack([s.y for s in samples])[..., None],
        h3=np.stack(hs),
        x3=np.stack([s.x for s in samples])[..., None],
        x_idx=np.stack([s.x_indices for s in samples]),
        noise_var=np.array([s.noise_var for s in samples]),
    )


def gradient(
    kind: str,
    params,
    pairs: list[tuple[ChannelRealization | np.ndarray, Sample]],
    constellation: Constellation,
    n_layers: int | None = None,
) -> np.ndarray:
    """Gradient of the mean loss over explicit (channel, sample) pairs."""
    batch = batch_from_samples(pairs)
    if n_layers is None:
        n_layers = _default_layers(params)
    _, g = loss_and_grad(kind, params, batch, constellation, n_layers)
    return g


def _default_layers(params) -> int:
    for attr in ("c", "gamma", "theta1"):
        if hasattr(params, attr):
            return getattr(params, attr).size
    return params.a_re.shape[0]


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _init_for(cfg: TrainConfig):
    if cfg.kind in ("vbinet", "improved_vbinet"):
        return ur.init_params(cfg.kind, cfg.n_t, cfg.n_r, cfg.n_layers)
    return bl.init_baseline_params(cfg.kind, cfg.n_t, cfg.n_r, cfg.n_layers)


def _draw_channels(cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.channel == "iid":
        return gen_iid_stacked(cfg.batch, cfg.n_r, cfg.n_t, rng)
    if cfg.channel == "kronecker":
        return gen_kronecker_stacked(cfg.batch, cfg.n_r, cfg.n_t, cfg.rho, rng)
    raise ValueError(f"unknown channel source {cfg.channel!r}")


def _draw_batch(
    cfg: TrainConfig,
    rng: np.random.Generator,
    constellation: Constellation,
    fixed_h: np.ndarray | None = None,
) -> Batch:
    if fixed_h is None:
        h3 = _draw_channels(cfg, rng)
    else:
        h3 = np.broadcast_to(fixed_h[None], (cfg.batch,) + fixed_h.shape)
    lo, hi = cfg.snr_range_db
    snr = rng.uniform(lo, hi, cfg.batch)
    nv = noise_var_for_snr(h3, 0.0) * 10.0 ** (-snr / 10.0)
    idx, x3, y3 = draw_samples_stacked(h3, constellation, nv, rng)
    svd = truncated_svd_stacked(np.ascontiguousarray(h3)) if cfg.kind == "improved_vbinet" else None
    return Batch(y3=y3, h3=h3, x3=x3, x_idx=idx, noise_var=nv, svd=svd)


def _fit(
    cfg: TrainConfig,
    vec: np.ndarray,
    template,
    rng: np.random.Generator,
    constellation: Constellation,
    iters: int,
    fixed_h: np.ndarray | None,
    state: AdamState,
) -> tuple[np.ndarray, list[float]]:
    losses = []
    for it in range(iters):
        batch = _draw_batch(cfg, rng, constellation, fixed_h)
        params = unpack_params(template, vec)
        try:
            loss, g = loss_and_grad(cfg.kind, params, batch, constellation, cfg.n_layers)
        except FloatingPointError as exc:
            raise FloatingPointError(f"training diverged at iteration {it}: {exc}") from exc
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        losses.append(loss)
        vec = adam_step(vec, g, state, cfg.lr)
    return vec, losses


def train_offline(cfg: TrainConfig, constellation: Constellation | None = None) -> TrainResult:
    """Offline training: every iteration draws fresh channels and SNRs."""
    if cfg.kind == "mmnet_full" and not cfg.allow_offline_mmnet_full:
        raise ValueError(
            "mmnet_full generalizes only to the channel it was trained on; "
            "use online training or set allow_offline_mmnet_full"
        )
    constellation = constellation or make_qam(cfg.modulation)
    template = _init_for(cfg)
    vec = pack_params(template)
    state = AdamState.init(vec.size, cfg.beta1, cfg.beta2, cfg.eps_adam)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TRAIN_DOMAIN)))
    vec, losses = _fit(cfg, vec, template, rng, constellation, cfg.iters, None, state)
    return TrainResult(params=unpack_params(template, vec), loss_curve=np.asarray(losses))


def train_online(
    channels: list[ChannelRealization],
    cfg: TrainConfig,
    constellation: Constellation | None = None,
) -> list[TrainResult]:
    """Online training with warm starts along the channel list.

    Channel 0 trains from scratch for ``cfg.iters`` iterations; every
    subsequent channel starts from its predecessor's parameters and runs
    ``cfg.iters_online`` iterations.  Returns one result per channel, in
    order.
    """
    if not channels:
        raise ValueError("train_online needs at least one channel")
    constellation = constellation or make_qam(cfg.modulation)
    template = _init_for(cfg)
    vec = pack_params(template)
    state = AdamState.init(vec.size, cfg.beta1, cfg.beta2, cfg.eps_adam)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _ONLINE_DOMAIN)))
    out = []
    for k, ch in enumerate(channels):
        iters = cfg.iters if k == 0 else cfg.iters_online
        vec, losses = _fit(cfg, vec, template, rng, constellation, iters, ch.H, state)
        out.append(TrainResult(params=unpack_params(template, vec), loss_curve=np.asarray(losses)))
    return out
