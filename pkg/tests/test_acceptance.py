"""Acceptance criteria 1-11, each at its stated tolerance.

Learned schemes are trained with the full default budget on first use and
cached under the session model cache, so a cold run takes a couple of hours on
one core and later runs only re-evaluate. Every test prints one
``criterion n: PASS/FAIL`` line, and the run ends with a summary table.
"""

import filecmp
import math

import numpy as np
import pytest

from ncea.baselines import build_im_codebook, build_pam_med, im_detect, pam_detect_per_subcarrier
from ncea.bench import BenchCase, affine_fit, benchmark_decode, write_latency_csv
from ncea.channel import complex_normal, stream
from ncea.experiment import ExperimentConfig, read_curve_csv, run_experiment, snr_at_bler
from ncea.nc_ea import ae_loss_and_grads, decode_ml, encode_batch, new_decoder, new_encoder
from ncea.nc_eama import (
    LAMBDA_GRID,
    DownlinkSystem,
    UplinkSystem,
    _batch_encode,
    downlink_loss_and_grads,
    system_params,
    uplink_loss_and_grads,
)
from ncea.nn import build_network, max_relative_error, numerical_gradient

from .oracles import loop_ml_index, loop_pam_symbols

BLOCKS = 100_000


def _curve(model_cache, out, name, scheme, L, grid, user="0", **kw):
    """Run one (scheme, L) curve through the harness; returns (dB, BLER, rows)."""
    cfg = ExperimentConfig((scheme,), L=(L,), ebn0_db=tuple(grid), blocks=BLOCKS, seed=0, model_dir=str(model_cache),
                           out_dir=str(out / name), train=True, plot=True, **kw).validate()
    (path,) = run_experiment(cfg)
    rows = [r for r in read_curve_csv(path) if r["user"] == user]
    return np.array([float(r["ebn0_db"]) for r in rows]), np.array([float(r["bler"]) for r in rows]), rows


def _fmt(xs):
    return "[" + ", ".join(f"{x:.3g}" for x in xs) + "]"


# ---- 1-3: properties ------------------------------------------------------


def _gradient_case(i, rng):
    kind = ("single", "uplink", "downlink")[i % 3]
    lam = float(LAMBDA_GRID[i % len(LAMBDA_GRID)])
    n_sub, n_msg = int(rng.integers(1, 5)), int(rng.choice([2, 4]))
    T, L = int(rng.integers(2, 7)), int(rng.integers(1, 4))
    average = bool(rng.integers(0, 2))
    in_scale = float(rng.uniform(0.05, 1.0))
    es = float(rng.uniform(0.5, 4.0))
    if kind == "single":
        enc, dec = new_encoder(n_sub, n_msg, rng), new_decoder(n_sub, n_msg, [int(rng.integers(2, 7))], rng)
        msgs = rng.integers(0, n_msg, T)
        h, n = complex_normal((T, n_sub, L), 1.0, rng), complex_normal((T, n_sub, L), 1.0, rng)
        fn = lambda: ae_loss_and_grads(enc, dec, msgs, h, n, es, in_scale, average)  # noqa: E731
        return "mse", fn, [enc.weights, enc.bias, *dec.params()]
    J = int(rng.integers(1, 4))
    w1, w2 = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    encoders = [new_encoder(n_sub, n_msg, rng) for _ in range(J)]
    msgs = rng.integers(0, n_msg, (T, J))
    h = complex_normal((T, J, n_sub, L), 1.0, rng)
    loss = "sum-mse" if i % 7 == 0 else "fairness"
    if kind == "uplink":
        trunk = build_network([n_sub, w1, w2], ["tanh", "tanh"], rng)
        heads = [build_network([w2, n_msg], ["softmax"], rng) for _ in range(J)]
        sys = UplinkSystem(encoders, trunk, heads, es)
        n = complex_normal((T, n_sub, L), 1.0, rng)
        fn = lambda: uplink_loss_and_grads(sys, msgs, h, n, lam, loss, in_scale, average)  # noqa: E731
    else:
        sys = DownlinkSystem(encoders, [new_decoder(n_sub, n_msg, [w1, w2], rng) for _ in range(J)], es)
        n = complex_normal((T, J, n_sub, L), 1.0, rng)
        fn = lambda: downlink_loss_and_grads(sys, msgs, h, n, lam, loss, in_scale, average)  # noqa: E731
    return f"{loss}(lam={lam:g})", fn, system_params(sys)


def test_c1_gradient_correctness(criterion):
    rng = stream(101)
    worst, seen = 0.0, set()
    for i in range(50):
        label, fn, params = _gradient_case(i, rng)
        _, analytic = fn()
        # five-point stencil: a plain central difference at 1e-5 cannot resolve ~1e-8 entries next to an O(1) loss
        numeric = numerical_gradient(lambda: fn()[0], params, step=3e-4, stencil=4)
        worst = max(worst, max_relative_error(analytic, numeric))
        seen.add(label)
    assert {"mse", "sum-mse(lam=0)"} <= seen and all(f"fairness(lam={v:g})" in seen for v in LAMBDA_GRID)
    assert criterion(1, worst < 1e-4, f"50 configurations, worst relative error {worst:.2e} (< 1e-4)")


def test_c2_ml_oracle_equivalence(criterion):
    rng = stream(102)
    agree = {"decode_ml": 0, "im_detect": 0, "pam_detect": 0}
    for _ in range(10_000):
        n_sub, n_msg = int(rng.integers(1, 6)), int(rng.integers(1, 17))
        book = rng.uniform(0, 4, (n_msg, n_sub)) * rng.choice([-1, 1], (n_msg, n_sub))
        n0, n_ant = float(rng.uniform(0.1, 3)), int(rng.integers(1, 17))
        z = rng.exponential(size=n_sub) * rng.uniform(0.1, 40)
        agree["decode_ml"] += decode_ml(book, z, n0, n_ant) == loop_ml_index(book, z, n0, n_ant)

        n_sub = int(rng.integers(2, 9))
        cb = build_im_codebook(n_sub, int(rng.integers(1, n_sub)), float(rng.uniform(0.1, 20)))
        z = rng.exponential(size=n_sub) * rng.uniform(0.1, 40)
        agree["im_detect"] += im_detect(cb, z, n0, n_ant) == loop_ml_index(cb.codewords(), z, n0, n_ant)

        c = build_pam_med(int(rng.choice([2, 4, 8, 16])), float(rng.uniform(0.1, 30)))
        z = rng.exponential(size=int(rng.integers(1, 5))) * rng.uniform(0.1, 60)
        agree["pam_detect"] += list(pam_detect_per_subcarrier(c, z, n0, n_ant)) == loop_pam_symbols(
            c.amplitudes, z, n0, n_ant)
    ok = all(v == 10_000 for v in agree.values())
    assert criterion(2, ok, ", ".join(f"{k} {v}/10000" for k, v in agree.items()))


def test_c3_normalization_identity(criterion):
    rng = stream(103)
    worst = 0.0
    for _ in range(1000):
        n_sub, n_msg, T = int(rng.integers(1, 17)), int(rng.choice([2, 4, 8, 16, 64])), int(rng.integers(1, 257))
        es = float(10 ** rng.uniform(-2, 3))
        x = encode_batch(new_encoder(n_sub, n_msg, rng), rng.integers(0, n_msg, T), es)
        worst = max(worst, abs(float(np.sum(x * x)) / (n_sub * T * es) - 1))
    ap_worst = 0.0
    for _ in range(100):
        J, n_sub, n_msg, T = int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.choice([2, 4, 8])), 64
        es = float(10 ** rng.uniform(-1, 2))
        encoders = [new_encoder(n_sub, n_msg, rng) for _ in range(J)]
        _, enc = _batch_encode(encoders, rng.integers(0, n_msg, (T, J)), es)
        total = sum(float(np.sum(x * x)) for x, _, _ in enc)
        ap_worst = max(ap_worst, abs(total / (J * n_sub * T * es) - 1))
    ok = worst < 1e-9 and ap_worst < 1e-9
    assert criterion(3, ok, f"1000 batches max rel. error {worst:.1e}; AP power J*N*E_s per block max {ap_worst:.1e}")


# ---- 4-9: BLER trends -----------------------------------------------------


@pytest.mark.slow
def test_c4_learned_code_beats_im_8_1(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c4"
    im_db, im_bler, _ = _curve(model_cache, out, "im", "nc-ofdm-im", 1, range(12, 27), N=8, K=1)
    ea_db, ea_bler, _ = _curve(model_cache, out, "ea", "nc-ea-dnn", 1, range(9, 18, 2), N=8, M=8)
    _, ml_bler, _ = _curve(model_cache, out, "ea", "nc-ea-ml", 1, range(9, 18, 2), N=8, M=8)
    im_x, ea_x = snr_at_bler(im_db, im_bler, 1e-3), snr_at_bler(ea_db, ea_bler, 1e-3)
    ml_x = snr_at_bler(ea_db, ml_bler, 1e-3)
    gain = im_x - ea_x
    detail = (f"BLER 1e-3 at IM {im_x:.2f} dB, NC-EA(DNN) {ea_x:.2f} dB -> gain {gain:.2f} dB (>= 4); "
              f"NC-EA(ML) {ml_x:.2f} dB; DNN {_fmt(ea_bler)} @ {_fmt(ea_db)}")
    assert criterion(4, math.isfinite(im_x) and gain >= 4.0, detail)


@pytest.mark.slow
def test_c5_gain_over_im_6_2(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c5"
    grids = {1: (range(10, 23), range(8, 15, 2), 3.0), 2: (range(0, 11), range(-1, 6, 2), 1.0),
             4: (range(-4, 7), range(-5, 2, 2), 1.0)}
    parts, ok = [], True
    for L, (im_grid, ea_grid, need) in grids.items():
        im_db, im_bler, _ = _curve(model_cache, out, "im", "nc-ofdm-im", L, im_grid, N=6, K=2)
        ea_db, ea_bler, _ = _curve(model_cache, out, "ea", "nc-ea-dnn", L, ea_grid, N=6, M=8)
        im_x, ea_x = snr_at_bler(im_db, im_bler, 1e-2), snr_at_bler(ea_db, ea_bler, 1e-2)
        gain = im_x - ea_x
        ok &= math.isfinite(im_x) and gain >= need
        parts.append(f"L={L}: IM {im_x:.2f} dB, NC-EA {ea_x:.2f} dB, gain {gain:.2f} (>= {need:g})")
    assert criterion(5, ok, "; ".join(parts))


def _parity(a: float, b: float) -> float:
    """max/min BLER ratio; two error-free curves are at parity."""
    if a == b:
        return 1.0
    lo, hi = min(a, b), max(a, b)
    return math.inf if lo == 0 else hi / lo


@pytest.mark.slow
def test_c6_parity_with_ook(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c6"
    parts, ok = [], True
    for L in (1, 4, 16):
        _, ea, ea_rows = _curve(model_cache, out, "ea", "nc-ea-dnn", L, [10.0], N=2, M=4)
        _, pam, pam_rows = _curve(model_cache, out, "pam", "pam-med", L, [10.0], N=2, D=2)
        ratio = _parity(ea[0], pam[0])
        ok &= ratio <= 2.0
        parts.append(f"L={L}: NC-EA {ea[0]:.3g} ({ea_rows[0]['errors']} err) vs OOK {pam[0]:.3g} "
                     f"({pam_rows[0]['errors']} err), ratio {ratio:.2f}")
    assert criterion(6, ok, "; ".join(parts) + " (<= 2)")


@pytest.mark.slow
def test_c7_floor_contrast_with_pam4(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c7"
    _, pam, _ = _curve(model_cache, out, "pam", "pam-med", 4, [20.0, 30.0], N=1, D=4)
    _, ea, rows = _curve(model_cache, out, "ea", "nc-ea-ml", 4, [30.0], N=1, M=4)
    floor = pam[0] / pam[1] < 2.0 and pam[1] / pam[0] < 2.0
    contrast = ea[0] * 10 <= pam[1]
    detail = (f"PAM-MED D=4 BLER {pam[0]:.4g} @20 dB, {pam[1]:.4g} @30 dB (change < 2x: {floor}); "
              f"NC-EA(ML) @30 dB {ea[0]:.4g} ({rows[0]['errors']} err), needs <= {pam[1] / 10:.4g}")
    assert criterion(7, floor and contrast, detail)


@pytest.mark.slow
def test_c8_uplink_beats_oma_im(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c8"
    oma_db, oma_bler, _ = _curve(model_cache, out, "oma", "oma-im", 1, range(10, 25), user="all", J=2, N=4, K=1)
    grid = range(9, 16, 2)
    ea_db, ea_bler, _ = _curve(model_cache, out, "eama", "eama-ul", 1, grid, user="all", J=2, N=4, M=2)
    rows = read_curve_csv(out / "eama" / "eama-ul_L1.csv")
    ratios = []
    for db in ea_db:
        errs = [int(r["errors"]) for r in rows if float(r["ebn0_db"]) == db and r["user"] != "all"]
        ratios.append(1.0 if max(errs) == 0 else (math.inf if min(errs) == 0 else max(errs) / min(errs)))
    oma_x, ea_x = snr_at_bler(oma_db, oma_bler, 1e-3), snr_at_bler(ea_db, ea_bler, 1e-3)
    gain = oma_x - ea_x
    ok = math.isfinite(oma_x) and gain >= 3.0 and max(ratios) <= 3.0
    detail = (f"mean-user BLER 1e-3 at OMA-IM {oma_x:.2f} dB, NC-EAMA {ea_x:.2f} dB -> gain {gain:.2f} dB (>= 3); "
              f"per-user BLER ratio {_fmt(ratios)} @ {_fmt(ea_db)} (<= 3)")
    assert criterion(8, ok, detail)


@pytest.mark.slow
def test_c9_overload(criterion, model_cache, acceptance_out):
    out = acceptance_out / "c9"
    kw = dict(J=3, N=2, M=2, user="all")
    db, bler, _ = _curve(model_cache, out, "snr", "eama-ul", 8, [10.0, 20.0, 30.0], **kw)
    floor = bler[2] > bler[1] / 2
    ls, by_l = (8, 16, 32, 64), []
    for L in ls:
        _, b, _ = _curve(model_cache, out, "ant", "eama-ul", L, [10.0], **kw)
        by_l.append(b[0])
    decreasing = all(a > b for a, b in zip(by_l, by_l[1:]))
    detail = (f"L=8 mean BLER {_fmt(bler)} @ {_fmt(db)} dB (floor: 30 dB > 20 dB / 2: {floor}); "
              f"10 dB BLER for L={ls}: {_fmt(by_l)} (strictly decreasing: {decreasing})")
    assert criterion(9, floor and decreasing, detail)


# ---- 10-11 ----------------------------------------------------------------


@pytest.mark.slow
def test_c10_complexity_ordering(criterion, acceptance_out):
    dnn = [BenchCase("dnn", n, m, 1, hidden=q) for n, m, q in
           [(4, 4, 16), (8, 8, 32), (8, 16, 64), (16, 16, 64), (16, 64, 128), (32, 64, 128), (16, 64, 256)]]
    ml = [BenchCase("ml", n, m, 1) for n, m in [(4, 4), (8, 8), (8, 16), (16, 16), (16, 32), (16, 64), (32, 64)]]
    rows = benchmark_decode(dnn + ml, repetitions=1000, batch=64, seed=0)
    write_latency_csv(rows, acceptance_out / "c10" / "latency.csv")
    fits = {}
    for name in ("dnn", "ml"):
        sel = [r for r in rows if r.case.scheme == name]
        fits[name] = affine_fit([r.case.ops for r in sel], [r.median_us for r in sel])
    d = next(r for r in rows if r.case == BenchCase("dnn", 16, 64, 1, hidden=128))
    m = next(r for r in rows if r.case == BenchCase("ml", 16, 64, 1))
    faster = d.p95_us < m.median_us  # the DNN's slow tail still beats ML's typical time
    ok = fits["dnn"][2] >= 0.9 and fits["ml"][2] >= 0.9 and faster
    detail = (f"affine R^2 DNN(NQ+QM) {fits['dnn'][2]:.3f}, ML(NM) {fits['ml'][2]:.3f} (>= 0.9); "
              f"(16,64) Q=128: DNN median {d.median_us:.2f} us / p95 {d.p95_us:.2f} us vs ML median {m.median_us:.2f} us")
    assert criterion(10, ok, detail)


def test_c11_determinism(criterion, model_cache, tmp_path):
    def run(tag, model_dir):
        cfg = ExperimentConfig(("nc-ofdm-im", "nc-ea-ml", "eama-dl"), J=2, N=2, M=4, K=1, L=(1, 2),
                               ebn0_db=(4.0, 8.0), blocks=20_000, seed=3, epochs=3, train_size=1000, restarts=2,
                               lam=1.0, model_dir=str(model_dir), out_dir=str(tmp_path / tag), train=True)
        return run_experiment(cfg.validate())

    first = run("a", tmp_path / "models_a")
    second = run("b", tmp_path / "models_b")  # retrains from scratch in a fresh directory
    third = run("c", tmp_path / "models_a")  # reloads the archived models
    same_csv = all(filecmp.cmp(a, b, shallow=False) and filecmp.cmp(a, c, shallow=False)
                   for a, b, c in zip(first, second, third))
    models = sorted((tmp_path / "models_a").iterdir())
    same_models = [p.read_bytes() for p in models] == [p.read_bytes() for p in sorted((tmp_path / "models_b").iterdir())]
    ok = same_csv and same_models and len(first) == 6 and len(models) == 8
    assert criterion(11, ok, f"{len(first)} CSVs byte-identical across retrain/reload: {same_csv}; "
                             f"{len(models)} model archives identical: {same_models}")
