"""Unrolled trainable detectors built on the inverse-free variational core.

``vbinet_forward`` unfolds the plain iteration into L layers with a shared
learnable diagonal T (parameterized ``psi_i^2 + floor`` to stay positive)
and a per-layer damping factor ``c_t``; neither forward takes a noise
variance, the layers estimate it.  ``improved_vbinet_forward`` unfolds the
SVD-domain iteration with learnable ``Psi`` (shared), per-layer ``delta_t``
(noise-tracking weight), damping ``c_t``, and ``kappa_t``, the surrogate's
stand-in scale for the symbol covariance.

The layer cores are written against :mod:`vbidet.autodiff` dispatch
helpers, so the same code runs the fast NumPy path for evaluation and the
tape path for training.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from ._nle import nle_moments
from .constellation import Constellation
from .ifvb import DetectionTrace, _as_trace
from .linalg import SvdFactors

__all__ = [
    "VbinetParams",
    "ImprovedVbinetParams",
    "vbinet_forward",
    "improved_vbinet_forward",
    "vbinet_layers",
    "improved_vbinet_layers",
    "init_params",
    "save_params",
    "load_params",
    "T_FLOOR",
]

# Floor added to psi^2 so the learnable diagonal T stays positive.
T_FLOOR = 1e-8

_GAMMA_A = 1e-10
_GAMMA_B = 1e-10
_EPS0 = 1.0


@dataclass
class VbinetParams:
    """Learnable parameters of the plain network: N_t + L reals."""

    psi: np.ndarray  # (N_t,), T_ii = psi_i^2 + T_FLOOR, shared across layers
    c: np.ndarray  # (L,) damping factors

    @property
    def n_params(self) -> int:
        return self.psi.size + self.c.size

    @property
    def t_diagonal(self) -> np.ndarray:
        return self.psi**2 + T_FLOOR


@dataclass
class ImprovedVbinetParams:
    """Learnable parameters of the SVD-domain network: N_t + 3L reals."""

    psi: np.ndarray  # (N_t,), Tbar = Sigma^2 + Psi^2 elementwise
    delta: np.ndarray  # (L,)
    c: np.ndarray  # (L,)
    kappa: np.ndarray  # (L,)

    @property
    def n_params(self) -> int:
        return self.psi.size + self.delta.size + self.c.size + self.kappa.size


def _gamma_update(g, n_r: int):
    return (_GAMMA_A + 0.5 * n_r) / (_GAMMA_B + 0.5 * ad.maximum(g, 0.0))


def vbinet_layers(y3, h3, points, psi_col, c_seq, n_layers: int):
    """Layer recursion shared by evaluation and training.

    ``psi_col`` is (N_t, 1) and ``c_seq`` a length-L sequence; both may be
    arrays or tape nodes.  Returns (xs, eps) with L+1 entries each.
    """
    b, n_r, n_t = h3.shape
    t_diag = psi_col * psi_col + T_FLOOR
    hh = np.swapaxes(h3, -1, -2).conj()

    x = np.zeros((b, n_t, 1), dtype=np.complex128)
    eps = np.full((b, 1, 1), _EPS0)
    xs, epss = [x], [eps]
    for t in range(n_layers):
        resid = y3 - ad.matmul(h3, x)
        corr = ad.matmul(hh, resid)
        r = x + corr / t_diag
        phi = 1.0 / (eps * t_diag)
        mean, m2 = nle_moments(r, phi, points)
        c_t = c_seq[t]
        x_new = c_t * mean + (1.0 - c_t) * x
        sigma_net = (c_t * c_t) * (m2 - ad.absq(mean))
        d = x_new - x
        g = (
            ad.asum(ad.absq(resid), axis=(-2, -1), keepdims=True)
            - 2.0 * ad.real(ad.asum(ad.conj(d) * corr, axis=(-2, -1), keepdims=True))
            + ad.asum(t_diag * ad.absq(d), axis=(-2, -1), keepdims=True)
            + ad.asum(t_diag * sigma_net, axis=(-2, -1), keepdims=True)
        )
        eps = _gamma_update(g, n_r)
        x = x_new
        xs.append(x)
        epss.append(eps)
    return xs, epss


def vbinet_forward(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    params: VbinetParams,
    n_layers: int | None = None,
) -> DetectionTrace:
    """Run the plain network; accepts a single sample or a stacked batch."""
    n_layers = params.c.size if n_layers is None else n_layers
    if n_layers > params.c.size:
        raise ValueError("requested more layers than damping parameters")
    y3, h3, single = _stack(y, h)
    xs, epss = vbinet_layers(
        y3, h3, constellation.points, params.psi.reshape(-1, 1), params.c, n_layers
    )
    return _as_trace(xs, epss, None, constellation, single)


def improved_vbinet_layers(
    y3,
    svd: SvdFactors,
    points,
    psi_col,
    delta_seq,
    c_seq,
    kappa_seq,
    n_layers: int,
    exact_sigma_trace: bool = False,
):
    """SVD-domain layer recursion; array or tape-node parameters.

    ``exact_sigma_trace`` replaces the kappa_t^2 I covariance stand-in with
    the exact per-sample trace (the reduction hook tying the network back to
    the iterative algorithm); training always uses the stand-in.
    """
    u, sigma, v = svd.U, svd.sigma, svd.V
    b = y3.shape[0]
    n_r, n_t = u.shape[-2], v.shape[-1]
    a_mat = u * sigma[..., None, :]
    ah = np.swapaxes(a_mat, -1, -2).conj()
    vh = np.swapaxes(v, -1, -2).conj()
    w2 = np.abs(v) ** 2
    w2t = np.swapaxes(w2, -1, -2)
    sig2 = (sigma**2)[..., :, None]
    t_bar = sig2 + psi_col * psi_col
    sum_t_bar = ad.asum(t_bar, axis=(-2, -1), keepdims=True)

    s = np.zeros((b, n_t, 1), dtype=np.complex128)
    eps = np.full((b, 1, 1), _EPS0)
    xs = [np.zeros((b, n_t, 1), dtype=np.complex128)]
    ss, epss = [s], [eps]
    for t in range(n_layers):
        t_t = t_bar + delta_seq[t] / eps
        resid = y3 - ad.matmul(a_mat, s)
        corr = ad.matmul(ah, resid)
        rbar = s + corr / t_t
        r = ad.matmul(v, rbar)
        phibar = 1.0 / (eps * t_t)
        phi = ad.matmul(w2, phibar)
        mean, m2 = nle_moments(r, phi, points)
        c_t = c_seq[t]
        s_new = c_t * ad.matmul(vh, mean) + (1.0 - c_t) * s
        d = s_new - s
        if exact_sigma_trace:
            sigma_x = m2 - ad.absq(mean)
            trace_term = (c_t * c_t) * ad.asum(
                t_bar * ad.matmul(w2t, sigma_x), axis=(-2, -1), keepdims=True
            )
        else:
            k_t = kappa_seq[t]
            trace_term = (c_t * c_t) * (k_t * k_t) * sum_t_bar
        g = (
            ad.asum(ad.absq(resid), axis=(-2, -1), keepdims=True)
            - 2.0 * ad.real(ad.asum(ad.conj(d) * corr, axis=(-2, -1), keepdims=True))
            + ad.asum(t_bar * ad.absq(d), axis=(-2, -1), keepdims=True)
            + trace_term
        )
        eps = _gamma_update(g, n_r)
        s = s_new
        xs.append(ad.matmul(v, s))
        ss.append(s)
        epss.append(eps)
    return xs, ss, epss


def improved_vbinet_forward(
    y: np.ndarray,
    svd: SvdFactors,
    constellation: Constellation,
    params: ImprovedVbinetParams,
    n_layers: int | None = None,
    h_check: np.ndarray | None = None,
    exact_sigma_trace: bool = False,
) -> DetectionTrace:
    """Run the SVD-domain network on precomputed factors.

    ``h_check`` optionally validates that the factors reconstruct the
    sample's channel (reconstruction residual below 1e-8 relative).
    """
    y = np.asarray(y, dtype=np.complex128)
    single = y.ndim == 1
    y3 = y[None, :, None] if single else (y[..., None] if y.ndim == 2 else y)
    if svd.U.ndim == 2:
        svd = SvdFactors(U=svd.U[None], sigma=svd.sigma[None], V=svd.V[None])
    if h_check is not None:
        h3 = np.asarray(h_check, dtype=np.complex128)
        h3 = h3[None] if h3.ndim == 2 else h3
        err = np.linalg.norm(svd.reconstruct() - h3) / max(np.linalg.norm(h3), 1e-300)
        if err > 1e-8:
            raise ValueError(f"SVD factors do not match the channel (residual {err:.2e})")
    n_layers = params.c.size if n_layers is None else n_layers
    if n_layers > params.c.size:
        raise ValueError("requested more layers than damping parameters")
    xs, ss, epss = improved_vbinet_layers(
        y3,
        svd,
        constellation.points,
        params.psi.reshape(-1, 1),
        params.delta,
        params.c,
        params.kappa,
        n_layers,
        exact_sigma_trace=exact_sigma_trace,
    )
    return _as_trace(xs, epss, ss, constellation, single)


def _stack(y, h):
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    single = y.ndim == 1
    if single:
        y = y[None, :, None]
    elif y.ndim == 2:
        y = y[..., None]
    if h.ndim == 2:
        h = h[None]
    return y, h, single


def init_params(
    kind: str, n_t: int, n_r: int, n_layers: int, rng: np.random.Generator | None = None
):
    """Deterministic initialization for either network family.

    The plain network starts at ``T = N_r I`` (the mean Gram diagonal) with
    unit damping, so layer 0 of training coincides with the iterative
    detector; the improved network starts at ``Psi = 0``, ``delta_t = 1``,
    ``c_t = 1``, ``kappa_t = 0.5``.  ``rng`` is reserved for future
    stochastic schemes.
    """
    if kind == "vbinet":
        return VbinetParams(
            psi=np.full(n_t, np.sqrt(n_r)), c=np.ones(n_layers)
        )
    if kind == "improved_vbinet":
        return ImprovedVbinetParams(
            psi=np.zeros(n_t),
            delta=np.ones(n_layers),
            c=np.ones(n_layers),
            kappa=np.full(n_layers, 0.5),
        )
    raise ValueError(f"unknown network kind {kind!r}")


# ---------------------------------------------------------------------------
# JSON serialization: decimal floats via repr round-trip bitwise.
# ---------------------------------------------------------------------------


def params_to_dict(params) -> dict:
    if isinstance(params, VbinetParams):
        return {
            "kind": "vbinet",
            "n_t": params.psi.size,
            "n_layers": params.c.size,
            "psi": params.psi.tolist(),
            "c": params.c.tolist(),
        }
    if isinstance(params, ImprovedVbinetParams):
        return {
            "kind": "improved_vbinet",
            "n_t": params.psi.size,
            "n_layers": params.c.size,
            "psi": params.psi.tolist(),
            "delta": params.delta.tolist(),
            "c": params.c.tolist(),
            "kappa": params.kappa.tolist(),
        }
    raise TypeError(f"unsupported parameter object {type(params)!r}")


def params_from_dict(d: dict):
    kind = d["kind"]
    if kind == "vbinet":
        return VbinetParams(psi=np.asarray(d["psi"]), c=np.asarray(d["c"]))
    if kind == "improved_vbinet":
        return ImprovedVbinetParams(
            psi=np.asarray(d["psi"]),
            delta=np.asarray(d["delta"]),
            c=np.asarray(d["c"]),
            kappa=np.asarray(d["kappa"]),
        )
    raise ValueError(f"unknown parameter kind {kind!r}")


def save_params(path: str | os.PathLike, params) -> None:
    from .baselines import baseline_params_to_dict  # local to avoid cycle

    try:
        d = params_to_dict(params)
    except TypeError:
        d = baseline_params_to_dict(params)
    with open(path, "w") as f:
        json.dump(d, f, indent=1)


def load_params(path: str | os.PathLike):
    from .baselines import baseline_params_from_dict

    with open(path) as f:
        d = json.load(f)
    if d["kind"] in ("vbinet", "improved_vbinet"):
        return params_from_dict(d)
    return baseline_params_from_dict(d)
