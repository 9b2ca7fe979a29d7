"""Head-to-head benchmark: compiled NLE kernel vs the NumPy fallback.

Times the raw posterior-moment / hard-decision kernels and an end-to-end
IFVB detection block under each backend.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from vbidet import _moments_np, kernels
from vbidet.channel import draw_samples_stacked, gen_iid_stacked, noise_var_for_snr
from vbidet.constellation import make_qam
from vbidet.ifvb import IfvbConfig, ifvb_iterates

try:
    from vbidet import _moments as _compiled
except ImportError:
    _compiled = None


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_moments(repeats: int):
    rng = np.random.default_rng(0)
    qam = make_qam(16)
    n = 200_000
    r = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
    phi = 10.0 ** rng.uniform(-3, 1, n)
    rows = []
    for name, module in [("numpy", _moments_np), ("compiled", _compiled)]:
        if module is None:
            rows.append((name, None, None))
            continue
        t_m = _time(lambda: kernels.posterior_moments(r, phi, qam.points, module=module), repeats)
        t_h = _time(lambda: kernels.nearest_index(r, qam.points, module=module), repeats)
        rows.append((name, t_m, t_h))
    return n, rows


def bench_ifvb_block(repeats: int):
    """End-to-end: one IFVB block (512 vectors, 16x32, 50 iterations)."""
    rng = np.random.default_rng(1)
    qpsk = make_qam(4)
    h3 = gen_iid_stacked(512, 32, 16, rng)
    nv = noise_var_for_snr(h3, 10.0)
    _, _, y3 = draw_samples_stacked(h3, qpsk, nv, rng)
    cfg = IfvbConfig(t_choice="diag_gram", max_iter=50)

    rows = []
    saved = kernels._impl
    try:
        for name, module in [("numpy", _moments_np), ("compiled", _compiled)]:
            if module is None:
                rows.append((name, None))
                continue
            kernels._impl = module
            rows.append((name, _time(lambda: ifvb_iterates(y3, h3, qpsk.points, cfg), repeats)))
    finally:
        kernels._impl = saved
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"compiled kernel available: {_compiled is not None}")
    n, rows = bench_moments(args.repeats)
    print(f"\nposterior moments / hard decision over {n} elements (16-QAM), best of {args.repeats}:")
    for name, t_m, t_h in rows:
        if t_m is None:
            print(f"  {name:9s}  unavailable")
        else:
            print(f"  {name:9s}  moments {t_m * 1e3:8.2f} ms   nearest {t_h * 1e3:8.2f} ms")

    rows = bench_ifvb_block(args.repeats)
    print("\nIFVB block, 512 vectors 16x32, 50 iterations:")
    base = None
    for name, t in rows:
        if t is None:
            print(f"  {name:9s}  unavailable")
            continue
        note = ""
        if base is None:
            base = t
        else:
            note = f"  ({base / t:.2f}x vs numpy)"
        print(f"  {name:9s}  {t * 1e3:8.1f} ms{note}")


if __name__ == "__main__":
    main()
