"""Comparison networks: OAMP/OAMPNet and the two MMNet variants.

All three forwards require the noise variance as an explicit input (unlike
the variational networks, which estimate it); feeding a scaled value is
exactly the mechanism of the noise-uncertainty study.  The layer cores are
written against the autodiff dispatch helpers so the same code serves
evaluation and training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from ._nle import nle_moments, nle_moments_anisotropic
from .constellation import Constellation
from .ifvb import DetectionTrace, _as_trace

__all__ = [
    "OampnetParams",
    "MmnetIidParams",
    "MmnetFullParams",
    "oamp_detect",
    "oampnet_forward",
    "mmnet_iid_forward",
    "mmnet_full_forward",
    "oampnet_layers",
    "mmnet_iid_layers",
    "mmnet_full_layers",
    "init_baseline_params",
    "baseline_params_to_dict",
    "baseline_params_from_dict",
    "V2_FLOOR",
]

# Floor on the LE error-variance estimate, which the published expression
# lets go negative near convergence.
V2_FLOOR = 1e-9


@dataclass
class OampnetParams:
    """Four reals per layer: LE step gamma, variance-shaping theta, NLE phi/xi."""

    gamma: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    xi: np.ndarray

    @property
    def n_params(self) -> int:
        return self.gamma.size * 4


@dataclass
class MmnetIidParams:
    """Two scalars per layer: LE step theta1 and variance scale theta2."""

    theta1: np.ndarray
    theta2: np.ndarray

    @property
    def n_params(self) -> int:
        return self.theta1.size + self.theta2.size


@dataclass
class MmnetFullParams:
    """Full trainable LE matrices: per layer a complex (N_t, N_r) A plus an
    (N_t, 2) axis-wise variance-scale block, 2 N_t (N_r + 1) reals in total."""

    a_re: np.ndarray  # (L, N_t, N_r)
    a_im: np.ndarray  # (L, N_t, N_r)
    theta2: np.ndarray  # (L, N_t, 2) real/imag axis scales

    @property
    def n_params(self) -> int:
        return self.a_re.size + self.a_im.size + self.theta2.size


def _noise_var_col(noise_var, b: int) -> np.ndarray:
    nv = np.asarray(noise_var, dtype=np.float64).reshape(-1)
    if np.any(nv <= 0):
        raise ValueError("noise_var must be positive")
    if nv.size == 1:
        nv = np.full(b, nv[0])
    return nv[:, None, None]


def _stack(y, h):
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    single = y.ndim == 1
    if single:
        y = y[None, :, None]
    elif y.ndim == 2:
        y = y[..., None]
    if h.ndim == 2:
        h = np.broadcast_to(h[None], (y.shape[0],) + h.shape)
    return y, h, single


# ---------------------------------------------------------------------------
# OAMP / OAMPNet
# ---------------------------------------------------------------------------


def oamp_detect(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    noise_var,
    max_iter: int = 100,
) -> DetectionTrace:
    """Standalone OAMP loop with the textbook fixed factors.

    Kept as an independent reimplementation of the iteration (no shared
    layer code with :func:`oampnet_forward`) so the two can cross-check
    each other.
    """
    y3, h3, single = _stack(y, h)
    b, n_r, n_t = h3.shape
    nv = _noise_var_col(noise_var, b)
    hh = np.swapaxes(h3, -1, -2).conj()
    hht = h3 @ hh
    tr_gram = np.sum(np.abs(h3) ** 2, axis=(-2, -1), keepdims=True)
    eye = np.eye(n_r)
    points = constellation.points

    def absq(z):
        return (z * z.conj()).real

    x = np.zeros((b, n_t, 1), dtype=np.complex128)
    xs = [x]
    for _ in range(max_iter):
        resid = y3 - h3 @ x
        v2 = np.maximum(
            (np.sum(absq(resid), axis=(-2, -1), keepdims=True) - n_r * nv) / tr_gram,
            V2_FLOOR,
        )
        w_hat = v2 * np.swapaxes(np.linalg.solve(v2 * hht + nv * eye, h3), -1, -2).conj()
        tr_wh = np.real(np.sum(w_hat * np.swapaxes(h3, -1, -2), axis=(-2, -1), keepdims=True))
        w = (n_t / tr_wh) * w_hat
        r = x + w @ resid
        c_mat = np.eye(n_t) - w @ h3
        sigma2 = (
            np.sum(absq(c_mat), axis=(-2, -1), keepdims=True) * v2
            + nv * np.sum(absq(w), axis=(-2, -1), keepdims=True)
        ) / n_t
        mean, _ = nle_moments(r, sigma2, points)
        x = mean
        xs.append(x)
    return _as_trace(xs, [], None, constellation, single)


def oampnet_layers(y3, h3, nv_col, points, gamma_seq, theta_seq, phi_seq, xi_seq, n_layers):
    """OAMPNet layer recursion (array or tape-node parameters)."""
    b, n_r, n_t = h3.shape
    hh = np.swapaxes(h3, -1, -2).conj()
    hht = h3 @ hh
    h3t = np.swapaxes(h3, -1, -2)
    tr_gram = np.sum(np.abs(h3) ** 2, axis=(-2, -1), keepdims=True)
    eye_r = np.eye(n_r)
    eye_t = np.eye(n_t)

    x = np.zeros((b, n_t, 1), dtype=np.complex128)
    xs = [x]
    for t in range(n_layers):
        resid = y3 - ad.matmul(h3, x)
        v2 = ad.maximum(
            (ad.asum(ad.absq(resid), axis=(-2, -1), keepdims=True) - n_r * nv_col) / tr_gram,
            V2_FLOOR,
        )
        m = v2 * hht + nv_col * eye_r
        w_hat = v2 * ad.adjoint(ad.solve(m, h3))
        tr_wh = ad.real(ad.asum(w_hat * h3t, axis=(-2, -1), keepdims=True))
        w = (n_t / tr_wh) * w_hat
        r = x + gamma_seq[t] * ad.matmul(w, resid)
        c_mat = eye_t - theta_seq[t] * ad.matmul(w, h3)
        sigma2 = (
            ad.asum(ad.absq(c_mat), axis=(-2, -1), keepdims=True) * v2
            + (theta_seq[t] * theta_seq[t]) * nv_col * ad.asum(ad.absq(w), axis=(-2, -1), keepdims=True)
        ) / n_t
        mean, _ = nle_moments(r, sigma2, points)
        x = phi_seq[t] * (mean - xi_seq[t] * r)
        xs.append(x)
    return xs


def oampnet_forward(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    noise_var,
    params: OampnetParams,
    n_layers: int | None = None,
) -> DetectionTrace:
    """OAMPNet forward pass; requires the (possibly misreported) noise variance."""
    n_layers = params.gamma.size if n_layers is None else n_layers
    y3, h3, single = _stack(y, h)
    nv = _noise_var_col(noise_var, y3.shape[0])
    xs = oampnet_layers(
        y3, h3, nv, constellation.points,
        params.gamma, params.theta, params.phi, params.xi, n_layers,
    )
    return _as_trace(xs, [], None, constellation, single)


# ---------------------------------------------------------------------------
# MMNet
# ---------------------------------------------------------------------------


def mmnet_iid_layers(y3, h3, nv_col, points, theta1_seq, theta2_seq, n_layers):
    """MMNet-iid layer recursion: A_t = theta1_t H^H, scalar variance."""
    b, n_r, n_t = h3.shape
    hh = np.swapaxes(h3, -1, -2).conj()
    gram = hh @ h3
    fro2 = np.sum(np.abs(h3) ** 2, axis=(-2, -1), keepdims=True)
    eye_t = np.eye(n_t)

    x = np.zeros((b, n_t, 1), dtype=np.complex128)
    xs = [x]
    for t in range(n_layers):
        th1 = theta1_seq[t]
        resid = y3 - ad.matmul(h3, x)
        r = x + th1 * ad.matmul(hh, resid)
        mismatch = ad.asum(ad.absq(eye_t - th1 * gram), axis=(-2, -1), keepdims=True) / fro2
        excess = ad.maximum(
            ad.asum(ad.absq(resid), axis=(-2, -1), keepdims=True) - n_r * nv_col, 0.0
        )
        amp = (th1 * th1) * fro2 * nv_col  # ||A_t||_F^2 / eps
        sigma2 = (theta2_seq[t] / n_t) * (mismatch * excess + amp)
        mean, _ = nle_moments(r, sigma2, points)
        x = mean
        xs.append(x)
    return xs


def mmnet_iid_forward(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    noise_var,
    params: MmnetIidParams,
    n_layers: int | None = None,
) -> DetectionTrace:
    """MMNet-iid forward pass (2 scalars per layer)."""
    n_layers = params.theta1.size if n_layers is None else n_layers
    y3, h3, single = _stack(y, h)
    nv = _noise_var_col(noise_var, y3.shape[0])
    xs = mmnet_iid_layers(
        y3, h3, nv, constellation.points, params.theta1, params.theta2, n_layers
    )
    return _as_trace(xs, [], None, constellation, single)


def mmnet_full_layers(y3, h3, nv_col, points, a_seq, theta2_seq, n_layers):
    """Full-matrix MMNet recursion.

    ``a_seq[t]`` is a complex (N_t, N_r) matrix (array or node);
    ``theta2_seq[t]`` an (N_t, 2) axis-scale block driving per-axis
    posterior widths.
    """
    b, n_r, n_t = h3.shape
    fro2 = np.sum(np.abs(h3) ** 2, axis=(-2, -1), keepdims=True)
    eye_t = np.eye(n_t)

    x = np.zeros((b, n_t, 1), dtype=np.complex128)
    xs = [x]
    for t in range(n_layers):
        a_t = a_seq[t]
        resid = y3 - ad.matmul(h3, x)
        r = x + ad.matmul(a_t, resid)
        mismatch = ad.asum(ad.absq(eye_t - ad.matmul(a_t, h3)), axis=(-2, -1), keepdims=True) / fro2
        excess = ad.maximum(
            ad.asum(ad.absq(resid), axis=(-2, -1), keepdims=True) - n_r * nv_col, 0.0
        )
        amp = ad.asum(ad.absq(a_t), axis=(-2, -1), keepdims=True) * nv_col
        base = mismatch * excess + amp  # (B, 1, 1)
        th2 = theta2_seq[t]
        phi_re = (th2[0] / n_t) * base
        phi_im = (th2[1] / n_t) * base
        mean, _ = nle_moments_anisotropic(r, phi_re, phi_im, points)
        x = mean
        xs.append(x)
    return xs


def mmnet_full_forward(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    noise_var,
    params: MmnetFullParams,
    n_layers: int | None = None,
) -> DetectionTrace:
    """Full-matrix MMNet forward pass (online-training detector)."""
    n_layers = params.a_re.shape[0] if n_layers is None else n_layers
    y3, h3, single = _stack(y, h)
    if params.a_re.shape[2] != h3.shape[1] or params.a_re.shape[1] != h3.shape[2]:
        raise ValueError(
            f"A matrices of shape {params.a_re.shape[1:]} do not fit a "
            f"{h3.shape[1]}x{h3.shape[2]} channel"
        )
    nv = _noise_var_col(noise_var, y3.shape[0])
    a_seq = [params.a_re[t] + 1j * params.a_im[t] for t in range(n_layers)]
    th2_seq = [
        (params.theta2[t, :, 0][:, None], params.theta2[t, :, 1][:, None])
        for t in range(n_layers)
    ]
    xs = mmnet_full_layers(y3, h3, nv, constellation.points, a_seq, th2_seq, n_layers)
    return _as_trace(xs, [], None, constellation, single)


def init_baseline_params(kind: str, n_t: int, n_r: int, n_layers: int):
    """Deterministic baseline initializations.

    OAMPNet starts at the fixed-factor OAMP point (1, 1, 1, 0); MMNet-iid at
    a 1/N_r gradient step with unit variance scale; the full MMNet at the
    matched-filter step A = H-agnostic 1/N_r scaling of a flat matrix.
    """
    if kind == "oampnet":
        return OampnetParams(
            gamma=np.ones(n_layers),
            theta=np.ones(n_layers),
            phi=np.ones(n_layers),
            xi=np.zeros(n_layers),
        )
    if kind == "mmnet_iid":
        return MmnetIidParams(theta1=np.full(n_layers, 1.0 / n_r), theta2=np.ones(n_layers))
    if kind == "mmnet_full":
        return MmnetFullParams(
            a_re=np.full((n_layers, n_t, n_r), 1.0 / n_r),
            a_im=np.zeros((n_layers, n_t, n_r)),
            theta2=np.ones((n_layers, n_t, 2)),
        )
    raise ValueError(f"unknown baseline kind {kind!r}")


def baseline_params_to_dict(params) -> dict:
    if isinstance(params, OampnetParams):
        return {
            "kind": "oampnet",
            "n_layers": params.gamma.size,
            "gamma": params.gamma.tolist(),
            "theta": params.theta.tolist(),
            "phi": params.phi.tolist(),
            "xi": params.xi.tolist(),
        }
    if isinstance(params, MmnetIidParams):
        return {
            "kind": "mmnet_iid",
            "n_layers": params.theta1.size,
            "theta1": params.theta1.tolist(),
            "theta2": params.theta2.tolist(),
        }
    if isinstance(params, MmnetFullParams):
        return {
            "kind": "mmnet_full",
            "n_layers": params.a_re.shape[0],
            "n_t": params.a_re.shape[1],
            "n_r": params.a_re.shape[2],
            "a_re": params.a_re.tolist(),
            "a_im": params.a_im.tolist(),
            "theta2": params.theta2.tolist(),
        }
    raise TypeError(f"unsupported parameter object {type(params)!r}")


def baseline_params_from_dict(d: dict):
    kind = d["kind"]
    if kind == "oampnet":
        return OampnetParams(
            gamma=np.asarray(d["gamma"]),
            theta=np.asarray(d["theta"]),
            phi=np.asarray(d["phi"]),
            xi=np.asarray(d["xi"]),
        )
    if kind == "mmnet_iid":
        return MmnetIidParams(theta1=np.asarray(d["theta1"]), theta2=np.asarray(d["theta2"]))
    if kind == "mmnet_full":
        return MmnetFullParams(
            a_re=np.asarray(d["a_re"]),
            a_im=np.asarray(d["a_im"]),
            theta2=np.asarray(d["theta2"]),
        )
    raise ValueError(f"unknown parameter kind {kind!r}")
