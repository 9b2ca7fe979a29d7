"""Channel and sample generation plus the channel-file loader.

Built-in sources are i.i.d. circular complex Gaussian entries and the
Kronecker-correlated Rayleigh model ``H = R^(1/2) G T^(1/2)`` with
exponential correlation ``rho^|i-j|`` on both sides.  Externally produced
channels (e.g. ray-traced ones) enter through :func:`load_channels`.

All generators are pure functions of (dims, params, rng); parallel
Monte-Carlo derives one RNG stream per block from the experiment seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constellation import Constellation

__all__ = [
    "ChannelRealization",
    "Sample",
    "gen_iid",
    "gen_kronecker",
    "gen_iid_stacked",
    "gen_kronecker_stacked",
    "noise_var_for_snr",
    "draw_sample",
    "draw_samples_stacked",
    "save_channels",
    "load_channels",
    "ChannelFileError",
]


class ChannelFileError(ValueError):
    """Malformed channel file (bad header, truncation, dimension mismatch)."""


@dataclass(frozen=True)
class ChannelRealization:
    """One channel matrix plus provenance metadata."""

    H: np.ndarray  # (N_r, N_t) complex128
    source: str  # "iid" | "kronecker(rho)" | "file"
    subcarrier: int | None = None

    @property
    def n_r(self) -> int:
        return self.H.shape[0]

    @property
    def n_t(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class Sample:
    """One transmission: symbol indices, modulated vector, observation."""

    x_indices: np.ndarray  # (N_t,) int64
    x: np.ndarray  # (N_t,) complex128
    y: np.ndarray  # (N_r,) complex128
    noise_var: float  # 1/eps


def _cn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian with per-entry variance ``var``."""
    s = np.sqrt(var / 2.0)
    return rng.normal(0.0, s, shape) + 1j * rng.normal(0.0, s, shape)


def gen_iid(n_r: int, n_t: int, rng: np.random.Generator) -> ChannelRealization:
    """Channel with i.i.d. CN(0, 1) entries."""
    return ChannelRealization(H=_cn(rng, (n_r, n_t)), source="iid")


def gen_iid_stacked(b: int, n_r: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of ``b`` i.i.d. channels, shape (b, n_r, n_t)."""
    return _cn(rng, (b, n_r, n_t))


def exp_correlation(n: int, rho: float) -> np.ndarray:
    """Exponential correlation matrix with entries rho^|i-j|."""
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _sqrtm_psd(c: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(c.astype(np.complex128))
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.conj().T


def gen_kronecker(
    n_r: int, n_t: int, rho: float, rng: np.random.Generator
) -> ChannelRealization:
    """Kronecker-correlated Rayleigh channel with coefficient ``rho``."""
    h = gen_kronecker_stacked(1, n_r, n_t, rho, rng)[0]
    return ChannelRealization(H=h, source=f"kronecker({rho})")


def gen_kronecker_stacked(
    b: int, n_r: int, n_t: int, rho: float, rng: np.random.Generator
) -> np.ndarray:
    """Stack of ``b`` Kronecker-correlated channels, shape (b, n_r, n_t)."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    g = _cn(rng, (b, n_r, n_t))
    if rho == 0.0:
        return g
    r_half = _sqrtm_psd(exp_correlation(n_r, rho))
    t_half = _sqrtm_psd(exp_correlation(n_t, rho))
    return r_half @ g @ t_half


def noise_var_for_snr(h: np.ndarray, snr_db: float) -> float | np.ndarray:
    """Per-entry noise variance 1/eps realizing ``snr_db`` for channel ``h``.

    Uses the conditional signal power E[||Hx||^2 | H] = ||H||_F^2 under
    unit-power symbols, so the SNR is exact per realization.  Stacked
    ``h`` of shape (b, n_r, n_t) yields a (b,) vector.
    """
    h = np.asarray(h)
    fro2 = np.sum(np.abs(h) ** 2, axis=(-2, -1))
    if np.any(fro2 == 0.0):
        raise ValueError("zero channel has no finite SNR operating point")
    n_r = h.shape[-2]
    nv = fro2 * 10.0 ** (-snr_db / 10.0) / n_r
    return float(nv) if nv.ndim == 0 else nv


def draw_sample(
    channel: ChannelRealization | np.ndarray,
    constellation: Constellation,
    noise_var: float,
    rng: np.random.Generator,
) -> Sample:
    """Draw x uniform over the constellation and y = Hx + n."""
    h = channel.H if isinstance(channel, ChannelRealization) else np.asarray(channel)
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    idx = rng.integers(0, constellation.size, h.shape[1])
    x = constellation.modulate(idx)
    y = h @ x + _cn(rng, h.shape[0], noise_var)
    return Sample(x_indices=idx, x=x, y=y, noise_var=float(noise_var))


def draw_samples_stacked(
    h: np.ndarray,
    constellation: Constellation,
    noise_var: np.ndarray | float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized sampling for stacked channels (b, n_r, n_t).

    Returns (x_indices (b, n_t), x (b, n_t, 1), y (b, n_r, 1)).  Symbol
    indices are drawn before the noise so the stream layout is stable.
    """
    b, n_r, n_t = h.shape
    nv = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), (b,))
    idx = rng.integers(0, constellation.size, (b, n_t))
    x = constellation.modulate(idx)[..., None]
    n = _cn(rng, (b, n_r, 1), 1.0) * np.sqrt(nv)[:, None, None]
    y = h @ x + n
    return idx, x, y


# ---------------------------------------------------------------------------
# Channel file format: one JSON header line, then raw little-endian float64
# (re, im) pairs, row-major, channels concatenated in subcarrier order.
# ---------------------------------------------------------------------------

_DTYPE_TAG = "c128le"


def save_channels(path: str | os.PathLike, channels: Sequence[ChannelRealization]) -> None:
    """Write channels to ``path`` in the documented binary format."""
    if not channels:
        raise ValueError("refusing to write an empty channel file")
    n_r, n_t = channels[0].H.shape
    header = {
        "n_channels": len(channels),
        "n_r": n_r,
        "n_t": n_t,
        "dtype": _DTYPE_TAG,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("ascii"))
        for ch in channels:
            if ch.H.shape != (n_r, n_t):
                raise ValueError("all channels in a file must share dimensions")
            f.write(np.ascontiguousarray(ch.H, dtype="<c16").tobytes())


def load_channels(path: str | os.PathLike) -> list[ChannelRealization]:
    """Read a channel file, preserving subcarrier order.

    Raises :class:`ChannelFileError` on malformed headers, truncation
    (reported with the byte offset) and count mismatches.
    """
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line.decode("ascii"))
            n_channels = int(header["n_channels"])
            n_r = int(header["n_r"])
            n_t = int(header["n_t"])
            dtype = header["dtype"]
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise ChannelFileError(f"malformed channel-file header: {exc}") from exc
        if dtype != _DTYPE_TAG:
            raise ChannelFileError(f"unsupported dtype tag {dtype!r}")
        if n_channels < 1 or n_r < 1 or n_t < 1:
            raise ChannelFileError("header dimensions must be positive")
        payload = f.read()

    record = n_r * n_t * 16  # bytes per channel
    if len(payload) % record != 0:
        offset = len(line) + len(payload)
        raise ChannelFileError(
            f"truncated channel record: file ends at byte offset {offset}, "
            f"expected payload to be a multiple of {record} bytes"
        )
    found = len(payload) // record
    if found != n_channels:
        raise ChannelFileError(
            f"dimension mismatch: header promises {n_channels} channels, file holds {found}"
        )
    flat = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    if not np.all(np.isfinite(flat.view(np.float64))):
        raise ChannelFileError("channel file contains non-finite entries")
    out = []
    for k in range(n_channels):
        h = flat[k * n_r * n_t : (k + 1) * n_r * n_t].reshape(n_r, n_t)
        out.append(ChannelRealization(H=h, source="file", subcarrier=k))
    return out
