"""Inverse-free variational Bayesian detectors.

Two non-learned iterative algorithms built on the same skeleton: a linear
estimation step ``r_t = x_t + T^(-1) H^H (y - H x_t)`` against a diagonal
curvature bound T, a constellation-posterior NLE step, and a Gamma update
of the noise precision from the quadratic surrogate g.  The plain variant
works in the symbol domain with a fixed T; the improved variant moves to
the SVD domain, where ``T_t = Tbar + (delta / eps_t) I`` tracks the noise
estimate and tolerates correlated channels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .classic import DetectionResult
from .constellation import Constellation, hard_decision
from .kernels import posterior_moments
from .linalg import SvdFactors, largest_eigenvalue_stacked, truncated_svd_stacked

__all__ = [
    "IfvbConfig",
    "DetectionTrace",
    "ifvb_detect",
    "improved_ifvb_detect",
    "ifvb_iterates",
    "improved_ifvb_iterates",
    "gamma_epsilon_update",
    "surrogate_g",
    "t_diagonal",
    "LAMBDA_GUARD",
]

# Additive guard on the largest eigenvalue for the scaled-identity T.
LAMBDA_GUARD = 1e-10


@dataclass(frozen=True)
class IfvbConfig:
    """Configuration shared by both IFVB variants.

    ``t_choice`` selects the curvature bound of the plain variant:
    "scaled_identity" ((lambda_max + guard) I), "diag_gram"
    (diagonal of H^H H), or an explicit positive diagonal array.
    ``delta`` is the noise-tracking weight of the improved variant.
    """

    t_choice: str | np.ndarray = "scaled_identity"
    max_iter: int = 100
    a: float = 1e-10
    b: float = 1e-10
    eps0: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Gamma hyperparameters a, b must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.eps0 <= 0 or self.delta <= 0:
            raise ValueError("eps0 and delta must be positive")


@dataclass
class DetectionTrace:
    """Per-iteration estimates produced by an iterative detector or network.

    ``xs`` holds max_iter + 1 entries including the all-zero initialization;
    ``eps`` the matching noise-precision estimates (empty for detectors that
    do not track one); ``ss`` the SVD-domain iterates when applicable.
    """

    xs: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    ss: list | None = None
    result: DetectionResult | None = None

    @property
    def xhat(self):
        return self.xs[-1]

    def layer_outputs(self) -> list:
        """The L post-layer estimates consumed by the training loss."""
        return self.xs[1:]


def gamma_epsilon_update(g, a: float, b: float, n_r: int):
    """Posterior-mean noise precision (a + N_r/2) / (b + max(g, 0)/2)."""
    return (a + 0.5 * n_r) / (b + 0.5 * np.maximum(g, 0.0))


def surrogate_g(y: np.ndarray, h: np.ndarray, x: np.ndarray, z: np.ndarray, t_diag) -> float:
    """Quadratic surrogate g(x, z) that upper-bounds ||y - Hx||^2 when
    T >= H^H H (equality at T = H^H H)."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    d = x - z
    rz = h @ z - y
    t = np.broadcast_to(np.asarray(t_diag, dtype=np.float64).reshape(-1), d.shape)
    return float(
        np.sum(np.abs(rz) ** 2)
        + 2.0 * np.real(np.vdot(d, h.conj().T @ rz))
        + np.sum(t * np.abs(d) ** 2)
    )


def t_diagonal(h3: np.ndarray, t_choice) -> np.ndarray:
    """Diagonal of the curvature bound T as a (B, N_t, 1) array."""
    b, _, n_t = h3.shape
    if isinstance(t_choice, str):
        if t_choice == "scaled_identity":
            lam = largest_eigenvalue_stacked(np.swapaxes(h3, -1, -2).conj() @ h3)
            return np.broadcast_to((lam + LAMBDA_GUARD)[:, None, None], (b, n_t, 1)).copy()
        if t_choice == "diag_gram":
            return np.sum(np.abs(h3) ** 2, axis=-2)[..., None]
        raise ValueError(f"unknown t_choice {t_choice!r}")
    t = np.asarray(t_choice, dtype=np.float64).reshape(-1)
    if t.shape[0] != n_t or np.any(t <= 0):
        raise ValueError("custom T diagonal must be positive with length N_t")
    return np.broadcast_to(t[None, :, None], (b, n_t, 1)).copy()


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


def ifvb_iterates(
    y3: np.ndarray,
    h3: np.ndarray,
    points: np.ndarray,
    cfg: IfvbConfig,
    x0: np.ndarray | None = None,
) -> tuple[list, list]:
    """Batched IFVB iterations; returns (xs, eps) lists of length max_iter+1.

    ``x0`` warm-starts the iteration (defaults to the zero prior mean).
    """
    b, n_r, n_t = h3.shape
    t_diag = t_diagonal(h3, cfg.t_choice)
    t_inv = 1.0 / t_diag
    hh = np.swapaxes(h3, -1, -2).conj()

    x = (
        np.zeros((b, n_t, 1), dtype=np.complex128)
        if x0 is None
        else np.asarray(x0, dtype=np.complex128).reshape(b, n_t, 1)
    )
    eps = np.full((b, 1, 1), cfg.eps0)
    xs, epss = [x], [eps]
    clamped = False
    for _ in range(cfg.max_iter):
        resid = y3 - h3 @ x
        corr = hh @ resid
        r = x + t_inv * corr
        phi = 1.0 / (eps * t_diag)
        mean, m2 = posterior_moments(r, phi, points)
        d = mean - x
        sigma = m2 - np.abs(mean) ** 2
        g = (
            np.sum(np.abs(resid) ** 2, axis=(-2, -1), keepdims=True)
            - 2.0 * np.real(np.sum(np.conj(d) * corr, axis=(-2, -1), keepdims=True))
            + np.sum(t_diag * np.abs(d) ** 2, axis=(-2, -1), keepdims=True)
            + np.sum(t_diag * sigma, axis=(-2, -1), keepdims=True)
        )
        clamped = clamped or bool(np.any(g < 0))
        eps = gamma_epsilon_update(g, cfg.a, cfg.b, n_r)
        x = mean
        xs.append(x)
        epss.append(eps)
    if clamped and isinstance(cfg.t_choice, str) and cfg.t_choice == "scaled_identity":
        warnings.warn(
            "surrogate g went negative under the scaled-identity T; "
            "this violates the curvature bound and indicates a bug"
        )
    return xs, epss


def ifvb_detect(
    y: np.ndarray, h: np.ndarray, constellation: Constellation, cfg: IfvbConfig | None = None
) -> DetectionTrace:
    """IFVB detector for a single sample (or a stacked batch)."""
    cfg = cfg or IfvbConfig()
    y3, h3, single = _stack(y, h)
    xs, epss = ifvb_iterates(y3, h3, constellation.points, cfg)
    return _as_trace(xs, epss, None, constellation, single)


def improved_ifvb_iterates(
    y3: np.ndarray,
    svd: SvdFactors,
    points: np.ndarray,
    cfg: IfvbConfig,
) -> tuple[list, list, list]:
    """Batched improved-IFVB iterations in the SVD domain.

    Returns (xs, ss, eps); ``xs[t] = V s_t`` so the symbol-domain trace is
    uniform with the plain variant.
    """
    u, sigma, v = svd.U, svd.sigma, svd.V
    b = y3.shape[0]
    n_r = u.shape[-2]
    n_t = v.shape[-1]
    a_mat = u * sigma[..., None, :]
    ah = np.swapaxes(a_mat, -1, -2).conj()
    vh = np.swapaxes(v, -1, -2).conj()
    t_bar = (sigma**2)[..., :, None]  # (B, N_t, 1)

    s = np.zeros((b, n_t, 1), dtype=np.complex128)
    eps = np.full((b, 1, 1), cfg.eps0)
    xs = [np.zeros((b, n_t, 1), dtype=np.complex128)]
    ss, epss = [s], [eps]
    for _ in range(cfg.max_iter):
        t_t = t_bar + cfg.delta / eps
        resid = y3 - a_mat @ s
        corr = ah @ resid
        rbar = s + corr / t_t
        r = v @ rbar
        phibar = 1.0 / (eps * t_t)
        # Phi_i = v_i^r PhiBar (v_i^r)^H: cross-correlations neglected.
        phi = (np.abs(v) ** 2) @ phibar
        mean, m2 = posterior_moments(r, phi, points)
        s_new = vh @ mean
        sigma_x = m2 - np.abs(mean) ** 2
        sigma_s_diag = np.einsum("...ij,...i->...j", np.abs(v) ** 2, sigma_x[..., 0])[..., None]
        d = s_new - s
        g = (
            np.sum(np.abs(resid) ** 2, axis=(-2, -1), keepdims=True)
            - 2.0 * np.real(np.sum(np.conj(d) * corr, axis=(-2, -1), keepdims=True))
            + np.sum(t_bar * np.abs(d) ** 2, axis=(-2, -1), keepdims=True)
            + np.sum(t_bar * sigma_s_diag, axis=(-2, -1), keepdims=True)
        )
        eps = gamma_epsilon_update(g.real, cfg.a, cfg.b, n_r)
        s = s_new
        xs.append(v @ s)
        ss.append(s)
        epss.append(eps)
    return xs, ss, epss


def improved_ifvb_detect(
    y: np.ndarray,
    h: np.ndarray,
    constellation: Constellation,
    cfg: IfvbConfig | None = None,
    svd: SvdFactors | None = None,
) -> DetectionTrace:
    """Improved IFVB detector; the SVD is computed once up front if not given."""
    cfg = cfg or IfvbConfig()
    y3, h3, single = _stack(y, h)
    if svd is None:
        svd = truncated_svd_stacked(h3)
    elif svd.U.ndim == 2:
        svd = SvdFactors(U=svd.U[None], sigma=svd.sigma[None], V=svd.V[None])
    xs, ss, epss = improved_ifvb_iterates(y3, svd, constellation.points, cfg)
    return _as_trace(xs, epss, ss, constellation, single)


def _as_trace(xs, epss, ss, constellation: Constellation, single: bool) -> DetectionTrace:
    if single:
        xs = [x[0, :, 0] for x in xs]
        epss = [float(e[0, 0, 0]) for e in epss]
        if ss is not None:
            ss = [s[0, :, 0] for s in ss]
        xhat = xs[-1]
    else:
        xs = [x[..., 0] for x in xs]
        epss = [e[..., 0, 0] for e in epss]
        if ss is not None:
            ss = [s[..., 0] for s in ss]
        xhat = xs[-1]
    result = DetectionResult(xhat=xhat, hard=hard_decision(xhat, constellation))
    return DetectionTrace(xs=xs, eps=epss, ss=ss, result=result)
