"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The learned-detector
criteria train at desk scale inside session fixtures (several minutes
total); tolerances and scales are pinned here, not calibrated elsewhere.
"""

import time

import numpy as np
import pytest

import vbidet
from helpers import brute_force_moments, central_diff_gradient, qpsk_tanh_mean, random_complex, ser_sigma
from vbidet import baselines as bl
from vbidet import unrolled as ur
from vbidet.channel import (
    gen_iid,
    gen_iid_stacked,
    gen_kronecker_stacked,
    draw_samples_stacked,
    noise_var_for_snr,
)
from vbidet.classic import lmmse_stacked, ml_stacked, zf_stacked
from vbidet.constellation import hard_decision, make_qam, posterior_moments_array
from vbidet.ifvb import (
    LAMBDA_GUARD,
    IfvbConfig,
    ifvb_detect,
    ifvb_iterates,
    improved_ifvb_detect,
    improved_ifvb_iterates,
    surrogate_g,
)
from vbidet.linalg import gram, largest_eigenvalue, truncated_svd, truncated_svd_stacked
from vbidet.training import (
    Batch,
    TrainConfig,
    layer_loss,
    loss_and_grad,
    pack_params,
    train_offline,
    train_online,
    unpack_params,
)

QPSK = make_qam(4)


def _report(criterion: str, detail: str):
    print(f"\n[acceptance] {criterion}: PASS — {detail}", flush=True)


def _eval_ser(fn, snr_db, gen, seed=2400, block=2048, min_symbols=100_000, min_errors=500,
              cap=8_000_000):
    """Shared-stream Monte-Carlo SER: same seed => identical samples, so
    detector comparisons are paired."""
    rng = np.random.default_rng(seed)
    err = sym = 0
    while (sym < min_symbols or err < min_errors) and sym < cap:
        h3 = gen(block, rng)
        nv = np.atleast_1d(noise_var_for_snr(h3, snr_db))
        idx, _, y3 = draw_samples_stacked(h3, QPSK, nv, rng)
        err += int(np.sum(fn(y3, h3, nv) != idx))
        sym += idx.size
    return err / sym, err, sym


def _gen_iid(n_r, n_t):
    return lambda b, rng: gen_iid_stacked(b, n_r, n_t, rng)


def _vbinet_fn(params, n_layers):
    return lambda y3, h3, nv: hard_decision(
        ur.vbinet_layers(y3, h3, QPSK.points, params.psi.reshape(-1, 1), params.c, n_layers)[0][-1][..., 0],
        QPSK,
    )


def _improved_fn(params, n_layers):
    def fn(y3, h3, nv):
        svd = truncated_svd_stacked(np.ascontiguousarray(h3))
        xs, _, _ = ur.improved_vbinet_layers(
            y3, svd, QPSK.points, params.psi.reshape(-1, 1),
            params.delta, params.c, params.kappa, n_layers,
        )
        return hard_decision(xs[-1][..., 0], QPSK)

    return fn


def _ifvb_fn(t_choice, max_iter=100):
    cfg = IfvbConfig(t_choice=t_choice, max_iter=max_iter)
    return lambda y3, h3, nv: hard_decision(
        ifvb_iterates(y3, h3, QPSK.points, cfg)[0][-1][..., 0], QPSK
    )


def _lmmse_fn():
    return lambda y3, h3, nv: hard_decision(lmmse_stacked(y3, h3, nv)[..., 0], QPSK)


# ---------------------------------------------------------------------------
# Trained-model fixtures (desk scale)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def vbinet_8x16_seeds():
    out = {}
    for seed in (0, 1, 2):
        cfg = TrainConfig(
            kind="vbinet", n_t=8, n_r=16, n_layers=10, batch=128, iters=3000,
            seed=seed, lr=5e-3, snr_range_db=(2.0, 16.0),
        )
        out[seed] = train_offline(cfg, QPSK).params
    return out


@pytest.fixture(scope="module")
def vbinet_4x8_by_layers():
    out = {}
    for n_layers in (1, 10, 20):
        cfg = TrainConfig(
            kind="vbinet", n_t=4, n_r=8, n_layers=n_layers, batch=128, iters=3000,
            seed=0, lr=5e-3, snr_range_db=(2.0, 16.0),
        )
        out[n_layers] = train_offline(cfg, QPSK).params
    return out


@pytest.fixture(scope="module")
def trained_16x32():
    nets = {}
    nets["vbinet"] = train_offline(
        TrainConfig(kind="vbinet", n_t=16, n_r=32, n_layers=10, batch=128,
                    iters=800, seed=0, lr=5e-3, snr_range_db=(2.0, 16.0)),
        QPSK,
    ).params
    nets["oampnet"] = train_offline(
        TrainConfig(kind="oampnet", n_t=16, n_r=32, n_layers=10, batch=64,
                    iters=300, seed=0, lr=1e-3, snr_range_db=(2.0, 16.0)),
        QPSK,
    ).params
    nets["mmnet_iid"] = train_offline(
        TrainConfig(kind="mmnet_iid", n_t=16, n_r=32, n_layers=10, batch=128,
                    iters=1500, seed=0, lr=5e-3, snr_range_db=(2.0, 16.0)),
        QPSK,
    ).params
    return nets


@pytest.fixture(scope="module")
def kron_8x16_nets():
    common = dict(n_t=8, n_r=16, n_layers=10, batch=128, iters=2500, seed=0,
                  lr=5e-3, snr_range_db=(4.0, 18.0), channel="kronecker", rho=0.8)
    plain = train_offline(TrainConfig(kind="vbinet", **common), QPSK).params
    improved = train_offline(TrainConfig(kind="improved_vbinet", **common), QPSK).params
    return plain, improved


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_criterion_01_posterior_moment_oracle():
    """QPSK moments match the tanh closed form and brute-force enumeration
    to 1e-10 over 1e4 seeded (r, phi) in under a second."""
    rng = np.random.default_rng(1001)
    n = 10_000
    r = random_complex(rng, n, scale=3.0)
    phi = 10.0 ** rng.uniform(-6, 4, n)
    t0 = time.time()
    mean, m2 = posterior_moments_array(r, phi, QPSK)
    elapsed = time.time() - t0
    np.testing.assert_allclose(mean, qpsk_tanh_mean(r, phi), atol=1e-10)
    np.testing.assert_allclose(m2, 1.0, atol=1e-10)
    for i in range(0, n, 97):  # brute-force spot checks across the grid
        bm, bm2, _ = brute_force_moments(complex(r[i]), float(phi[i]), QPSK.points)
        assert abs(mean[i] - bm) <= 1e-10
        assert abs(m2[i] - bm2) <= 1e-10
    assert elapsed < 1.0
    _report("criterion 1", f"1e4 moment evaluations in {elapsed * 1e3:.0f} ms, max dev < 1e-10")


def test_criterion_02_lemma_bound():
    """g(x, z) >= ||y - Hx||^2 - 1e-9 under T1; equality at T = H^H H."""
    rng = np.random.default_rng(1002)
    worst_gap = np.inf
    worst_eq = 0.0
    for _ in range(1000):
        h = random_complex(rng, (8, 5))
        x, z = random_complex(rng, 5), random_complex(rng, 5)
        y = random_complex(rng, 8)
        resid2 = float(np.sum(np.abs(y - h @ x) ** 2))
        t1 = largest_eigenvalue(gram(h)) + LAMBDA_GUARD
        g = surrogate_g(y, h, x, z, np.full(5, t1))
        worst_gap = min(worst_gap, g - resid2)
        assert g >= resid2 - 1e-9
        d = x - z
        rz = h @ z - y
        g_eq = (
            float(np.sum(np.abs(rz) ** 2))
            + 2 * float(np.real(np.vdot(d, h.conj().T @ rz)))
            + float(np.real(np.vdot(d, gram(h) @ d)))
        )
        worst_eq = max(worst_eq, abs(g_eq - resid2))
        assert abs(g_eq - resid2) <= 1e-9
    _report("criterion 2", f"1000 instances, min slack {worst_gap:.3e}, max equality dev {worst_eq:.2e}")


def test_criterion_03_gradient_contract():
    """AD gradients match central finite differences (eval-path loss) to
    1e-4 relative for all five detector kinds, 20 micro-instances each."""
    t0 = time.time()
    worst = {}
    for kind in ("vbinet", "improved_vbinet", "oampnet", "mmnet_iid", "mmnet_full"):
        errs = []
        for inst in range(20):
            rng = np.random.default_rng(3000 + 31 * inst)
            n_t = int(rng.integers(2, 5))
            n_r = 2 * n_t
            n_layers = int(rng.integers(1, 4))
            h3 = gen_iid_stacked(3, n_r, n_t, rng)
            nv = np.atleast_1d(noise_var_for_snr(h3, 5.0))
            idx, x3, y3 = draw_samples_stacked(h3, QPSK, nv, rng)
            batch = Batch(y3=y3, h3=h3, x3=x3, x_idx=idx, noise_var=nv)
            params = (
                ur.init_params(kind, n_t, n_r, n_layers)
                if kind in ("vbinet", "improved_vbinet")
                else bl.init_baseline_params(kind, n_t, n_r, n_layers)
            )
            vec = pack_params(params) + 0.02 * rng.normal(size=pack_params(params).size)
            params = unpack_params(params, vec)
            _, g = loss_and_grad(kind, params, batch, QPSK, n_layers)

            def eval_loss(v, template=params, kind=kind, batch=batch, n_layers=n_layers):
                p = unpack_params(template, v)
                if kind == "vbinet":
                    trace = ur.vbinet_forward(batch.y3, batch.h3, QPSK, p, n_layers)
                elif kind == "improved_vbinet":
                    svd = truncated_svd_stacked(batch.h3)
                    trace = ur.improved_vbinet_forward(batch.y3, svd, QPSK, p, n_layers)
                elif kind == "oampnet":
                    trace = bl.oampnet_forward(batch.y3, batch.h3, QPSK, batch.noise_var, p, n_layers)
                elif kind == "mmnet_iid":
                    trace = bl.mmnet_iid_forward(batch.y3, batch.h3, QPSK, batch.noise_var, p, n_layers)
                else:
                    trace = bl.mmnet_full_forward(batch.y3, batch.h3, QPSK, batch.noise_var, p, n_layers)
                return layer_loss(trace, batch.x3[..., 0])

            g_fd = central_diff_gradient(eval_loss, vec)
            errs.append(float(np.max(np.abs(g - g_fd) / np.maximum(1.0, np.abs(g_fd)))))
        worst[kind] = max(errs)
        assert worst[kind] <= 1e-4, f"{kind}: {worst[kind]:.2e}"
    elapsed = time.time() - t0
    assert elapsed < 120.0
    _report("criterion 3", f"worst relative error per kind {worst} in {elapsed:.0f} s")


def test_criterion_04_reduction_identities():
    """Networks at their neutral parameters reproduce the base algorithms."""
    rng = np.random.default_rng(1004)
    h = gen_iid(12, 6, rng).H
    nv = noise_var_for_snr(h, 9.0)
    idx, x3, y3 = draw_samples_stacked(np.broadcast_to(h, (1, 12, 6)), QPSK, nv, rng)
    y = y3[0, :, 0]

    psi = rng.uniform(1.5, 4.0, 6)
    net = ur.vbinet_forward(y, h, QPSK, ur.VbinetParams(psi=psi, c=np.ones(9)))
    alg = ifvb_detect(y, h, QPSK, IfvbConfig(t_choice=psi**2 + ur.T_FLOOR, max_iter=9))
    dev_v = max(float(np.max(np.abs(a - b))) for a, b in zip(net.xs, alg.xs))
    assert dev_v <= 1e-12

    op = bl.init_baseline_params("oampnet", 6, 12, 8)
    net_o = bl.oampnet_forward(y, h, QPSK, nv, op)
    alg_o = bl.oamp_detect(y, h, QPSK, nv, 8)
    for a, b in zip(net_o.xs, alg_o.xs):
        np.testing.assert_array_equal(a, b)

    L = 8
    ip = ur.ImprovedVbinetParams(
        psi=np.zeros(6), delta=np.ones(L), c=np.ones(L), kappa=np.full(L, 0.5)
    )
    svd = truncated_svd(h)
    net_i = ur.improved_vbinet_forward(y, svd, QPSK, ip, exact_sigma_trace=True, h_check=h)
    alg_i = improved_ifvb_detect(y, h, QPSK, IfvbConfig(max_iter=L, delta=1.0))
    dev_i = max(float(np.max(np.abs(a - b))) for a, b in zip(net_i.xs, alg_i.xs))
    assert dev_i <= 1e-9
    _report(
        "criterion 4",
        f"vbinet->ifvb dev {dev_v:.1e} (<=1e-12), oampnet->oamp bitwise, improved dev {dev_i:.1e} (<=1e-9)",
    )


def test_criterion_05_ml_optimality():
    """N_t=2 QPSK: exhaustive ML beats every other detector at every SNR."""
    n_r, n_t = 4, 2
    gen = _gen_iid(n_r, n_t)
    detectors = {
        "ml": lambda y3, h3, nv: ml_stacked(y3, h3, QPSK)[0],
        "zf": lambda y3, h3, nv: hard_decision(zf_stacked(y3, h3)[..., 0], QPSK),
        "lmmse": _lmmse_fn(),
        "ifvb_t1": _ifvb_fn("scaled_identity"),
        "ifvb_t2": _ifvb_fn("diag_gram"),
        "improved_ifvb": lambda y3, h3, nv: hard_decision(
            improved_ifvb_iterates(
                y3, truncated_svd_stacked(np.ascontiguousarray(h3)), QPSK.points, IfvbConfig()
            )[0][-1][..., 0],
            QPSK,
        ),
        "oamp": lambda y3, h3, nv: bl.oamp_detect(y3, np.ascontiguousarray(h3), QPSK, nv, 100).result.hard,
    }
    lines = []
    for snr in (0.0, 4.0, 8.0, 12.0):
        results = {
            name: _eval_ser(fn, snr, gen, block=4096, min_errors=200)
            for name, fn in detectors.items()
        }
        ser_ml, _, n_ml = results["ml"]
        for name, (ser, _, n) in results.items():
            if name == "ml":
                continue
            slack = 2.0 * np.hypot(ser_sigma(ser_ml, n_ml), ser_sigma(ser, n))
            assert ser_ml <= ser + slack, f"{name} at {snr} dB: ML {ser_ml} vs {ser}"
        lines.append(f"{snr:g}dB ML={ser_ml:.2e}")
    _report("criterion 5", "; ".join(lines))


def test_criterion_06_t_choice_ordering():
    """IFVB with the Gram-diagonal T strictly beats the scaled-identity T
    at 10 dB on 16x32 i.i.d. QPSK, >=1e5 symbols."""
    gen = _gen_iid(32, 16)
    ser2, e2, n2 = _eval_ser(_ifvb_fn("diag_gram"), 10.0, gen, block=1024)
    ser1, e1, n1 = _eval_ser(_ifvb_fn("scaled_identity"), 10.0, gen, block=1024)
    assert n1 >= 100_000 and n2 >= 100_000
    assert ser2 < ser1
    _report("criterion 6", f"T2 {ser2:.4f} < T1 {ser1:.4f} over {n2}/{n1} symbols")


def test_criterion_07_learned_beats_iterative(vbinet_8x16_seeds):
    """Trained VBINet (8x16, L=10, batch 128, 3000 iters) beats IFVB(T2)
    and LMMSE at 10 dB on three independent training seeds."""
    gen = _gen_iid(16, 8)
    ser_ifvb, _, n_i = _eval_ser(_ifvb_fn("diag_gram"), 10.0, gen)
    ser_lmmse, _, n_l = _eval_ser(_lmmse_fn(), 10.0, gen)
    assert n_i >= 100_000 and n_l >= 100_000
    sers = {}
    for seed, params in vbinet_8x16_seeds.items():
        ser, _, n = _eval_ser(_vbinet_fn(params, 10), 10.0, gen)
        assert n >= 100_000
        sers[seed] = ser
        assert ser < ser_ifvb, f"seed {seed}: {ser} !< IFVB {ser_ifvb}"
        assert ser < ser_lmmse, f"seed {seed}: {ser} !< LMMSE {ser_lmmse}"
    _report(
        "criterion 7",
        f"VBINet {sers} < IFVB(T2) {ser_ifvb:.4f} and LMMSE {ser_lmmse:.4f}",
    )


def test_criterion_08_layer_convergence(vbinet_4x8_by_layers):
    """Desk-scale VBINet: SER(L=10) within 10% relative of SER(L=20);
    a single layer is clearly worse."""
    gen = _gen_iid(8, 4)
    sers = {}
    for n_layers, params in vbinet_4x8_by_layers.items():
        sers[n_layers], _, n = _eval_ser(
            _vbinet_fn(params, n_layers), 10.0, gen, min_symbols=400_000, min_errors=2000
        )
    rel = abs(sers[10] - sers[20]) / sers[20]
    assert rel <= 0.10, f"SER(10)={sers[10]}, SER(20)={sers[20]}, rel={rel:.3f}"
    assert sers[1] > sers[10]
    _report("criterion 8", f"SER(L) {sers}; |10 vs 20| rel {rel:.3f} <= 0.10")


def test_criterion_09_noise_uncertainty(trained_16x32):
    """(a) VBINet rows are bitwise NUF-invariant; (b) OAMPNet and MMNet-iid
    degrade strictly when fed a 3 dB-high noise variance."""
    gen = _gen_iid(32, 16)
    po, pm, pv = trained_16x32["oampnet"], trained_16x32["mmnet_iid"], trained_16x32["vbinet"]

    counts = set()
    for nuf_db in (-3.0, 0.0, 3.0):
        eta = 10.0 ** (nuf_db / 10.0)
        fn = _vbinet_fn(pv, 10)
        ser, err, sym = _eval_ser(
            lambda y3, h3, nv: fn(y3, h3, nv * eta), 10.0, gen, block=1024
        )
        counts.add((err, sym))
    assert len(counts) == 1  # bitwise identical across NUF

    def oampnet_fn(eta):
        return lambda y3, h3, nv: hard_decision(
            bl.oampnet_layers(
                y3, h3, (nv * eta)[:, None, None], QPSK.points,
                po.gamma, po.theta, po.phi, po.xi, 10,
            )[-1][..., 0],
            QPSK,
        )

    def mmnet_fn(eta):
        return lambda y3, h3, nv: hard_decision(
            bl.mmnet_iid_layers(
                y3, h3, (nv * eta)[:, None, None], QPSK.points, pm.theta1, pm.theta2, 10
            )[-1][..., 0],
            QPSK,
        )

    eta3 = 10.0 ** 0.3
    ser_o0, _, _ = _eval_ser(oampnet_fn(1.0), 10.0, gen, block=1024)
    ser_o3, _, _ = _eval_ser(oampnet_fn(eta3), 10.0, gen, block=1024)
    ser_m0, _, _ = _eval_ser(mmnet_fn(1.0), 10.0, gen, block=1024)
    ser_m3, _, _ = _eval_ser(mmnet_fn(eta3), 10.0, gen, block=1024)
    assert ser_o3 > ser_o0, f"OAMPNet {ser_o3} !> {ser_o0}"
    assert ser_m3 > ser_m0, f"MMNet-iid {ser_m3} !> {ser_m0}"
    _report(
        "criterion 9",
        f"VBINet NUF-invariant {counts}; OAMPNet {ser_o0:.4f}->{ser_o3:.4f}; "
        f"MMNet-iid {ser_m0:.4f}->{ser_m3:.4f}",
    )


def test_criterion_10_correlated_ordering(kron_8x16_nets):
    """rho=0.8 Kronecker at 12 dB: trained Improved-VBINet beats the plain
    trained VBINet."""
    plain, improved = kron_8x16_nets
    gen = lambda b, rng: gen_kronecker_stacked(b, 16, 8, 0.8, rng)
    ser_p, _, n_p = _eval_ser(_vbinet_fn(plain, 10), 12.0, gen)
    ser_i, _, n_i = _eval_ser(_improved_fn(improved, 10), 12.0, gen)
    assert n_p >= 100_000 and n_i >= 100_000
    assert ser_i < ser_p
    _report("criterion 10", f"improved {ser_i:.4f} < plain {ser_p:.4f} at 12 dB, rho=0.8")


def test_criterion_11_mmnet_offline_failure():
    """Full-matrix MMNet trained online on one channel collapses on a fresh
    one (SER ratio >= 5)."""
    ch_train = gen_iid(16, 8, np.random.default_rng(777))
    ch_fresh = gen_iid(16, 8, np.random.default_rng(778))
    cfg = TrainConfig(
        kind="mmnet_full", n_t=8, n_r=16, n_layers=10, batch=128, iters=800,
        seed=0, lr=5e-3, snr_range_db=(8.0, 12.0), mode="online",
    )
    params = train_online([ch_train], cfg, QPSK)[0].params

    def fn(y3, h3, nv):
        return bl.mmnet_full_forward(y3, np.ascontiguousarray(h3), QPSK, nv, params).result.hard

    def fixed(h):
        return lambda b, rng: np.broadcast_to(h[None], (b,) + h.shape)

    ser_t, err_t, n_t_sym = _eval_ser(fn, 10.0, fixed(ch_train.H), min_errors=100, cap=800_000)
    ser_f, _, _ = _eval_ser(fn, 10.0, fixed(ch_fresh.H), min_errors=100, cap=800_000)
    assert ser_f > 0
    assert ser_f >= 5.0 * ser_t, f"fresh {ser_f} vs trained {ser_t}"
    _report("criterion 11", f"trained-channel SER {ser_t:.2e}, fresh-channel SER {ser_f:.2e}")


def test_criterion_12_epsilon_recovery():
    """Median final 1/eps over 100 IFVB runs lands within 2x of the true
    noise variance at 10 dB."""
    rng = np.random.default_rng(1012)
    h3 = gen_iid_stacked(100, 32, 16, rng)
    nv = noise_var_for_snr(h3, 10.0)
    idx, _, y3 = draw_samples_stacked(h3, QPSK, nv, rng)
    _, epss = ifvb_iterates(y3, h3, QPSK.points, IfvbConfig(t_choice="diag_gram", max_iter=100))
    est = 1.0 / epss[-1][:, 0, 0]
    ratio = np.median(est / nv)
    assert 0.5 <= ratio <= 2.0
    _report("criterion 12", f"median (1/eps)/noise_var = {ratio:.3f} in [0.5, 2]")


def test_criterion_13_reproducibility(tmp_path):
    """Same config + seed => byte-identical CSV."""
    from vbidet.harness import ExperimentSpec, run_ser_sweep, write_csv

    spec = ExperimentSpec.from_dict(
        dict(
            kind="sweep",
            detectors=[
                {"family": "lmmse"},
                {"family": "ifvb", "t_choice": "diag_gram", "max_iter": 50},
            ],
            n_t=8, n_r=16, snr_grid_db=[6.0, 10.0], seed=31,
            min_errors=200, min_symbols=30_000, max_symbols=120_000,
            block_vectors=1024,
        )
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(a, run_ser_sweep(spec))
    write_csv(b, run_ser_sweep(spec))
    assert a.read_bytes() == b.read_bytes()
    _report("criterion 13", f"{a.stat().st_size}-byte CSV reproduced byte-identically")
