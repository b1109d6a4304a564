"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line with the measured value against its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s``. The trained-model
fixtures come from conftest and are shared with the unit suites.
"""

import time
from pathlib import Path

import numpy as np
import pytest

import synthdata
import test_wavelet as wavelet_oracles
from wlcodec import bitstream as bs
from wlcodec import codec as cd
from wlcodec import complearn as cl
from wlcodec import diffcore as dc
from wlcodec import metrics as mt
from wlcodec import resample as rs
from wlcodec import wavelet as wl

DATA = Path(__file__).parent / "data"


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_criterion_01_wpt_perfect_reconstruction():
    rng = np.random.default_rng(1001)
    x64 = rng.uniform(-1, 1, (3, 256, 256))
    err64 = np.abs(wl.wpt_inverse(wl.wpt_forward(x64, 3), 3) - x64).max()
    x32 = x64.astype(np.float32)
    t0 = time.perf_counter()
    err32 = np.abs(wl.wpt_inverse(wl.wpt_forward(x32, 3), 3) - x32).max()
    elapsed = time.perf_counter() - t0
    report(
        "criterion 1 (WPT perfect reconstruction)",
        err64 < 1e-10 and err32 < 1e-5 and elapsed < 1.0,
        f"double err {err64:.2e} (<1e-10), single err {err32:.2e} (<1e-5), "
        f"runtime {elapsed * 1e3:.0f} ms (<1000)",
    )


def test_criterion_02_wpt_matrix_oracle():
    fb = wl.make_cdf97_filterbank()
    rng = np.random.default_rng(1002)
    worst = 0.0
    for n in (4, 8, 16, 24, 32):
        for levels in (1, 2):
            if n % (2**levels):
                continue
            t = wavelet_oracles.packet_matrix(n, levels, fb)
            for _ in range(5):
                x = rng.standard_normal(n)
                got = wl.wpt_forward(x[None, :], levels, fb=fb).ravel()
                worst = max(worst, float(np.abs(got - t @ x).max()))
    report(
        "criterion 2 (WPT matrix-oracle equivalence)",
        worst < 1e-10,
        f"max |fast - matrix| = {worst:.2e} over N<=32, J<=2 (<1e-10)",
    )


def test_criterion_03_gradient_checks():
    fb = wl.make_cdf97_filterbank()
    rng = np.random.default_rng(1003)
    errors: dict[str, float] = {}

    xd = rng.standard_normal((5, 6))
    errors["dense"] = dc.grad_check(
        lambda p: dc.mse(dc.dense(dc.Tensor(xd), p["w"], p["b"]),
                         dc.Tensor(np.zeros((5, 3)))),
        {"w": rng.standard_normal((6, 3)) * 0.4, "b": rng.standard_normal(3) * 0.1},
        probes=12, seed=1,
    )

    x1 = rng.standard_normal((2, 3, 8))
    errors["conv1d"] = dc.grad_check(
        lambda p: dc.mse(dc.conv1d(dc.Tensor(x1), p["k"], p["b"]),
                         dc.Tensor(np.zeros((2, 2, 8)))),
        {"k": rng.standard_normal((2, 3, 3)) * 0.3, "b": rng.standard_normal(2) * 0.1},
        probes=12, seed=2,
    )
    x2 = rng.standard_normal((2, 3, 5, 5))
    errors["conv2d"] = dc.grad_check(
        lambda p: dc.mse(dc.conv2d(dc.Tensor(x2), p["k"], p["b"]),
                         dc.Tensor(np.zeros((2, 2, 5, 5)))),
        {"k": rng.standard_normal((2, 3, 3, 3)) * 0.3, "b": rng.standard_normal(2) * 0.1},
        probes=12, seed=3,
    )
    errors["silu"] = dc.grad_check(
        lambda p: dc.mse(dc.silu(p["x"]), dc.Tensor(np.zeros((4, 4)))),
        {"x": rng.standard_normal((4, 4))}, probes=10, seed=4,
    )
    errors["compand"] = dc.grad_check(
        lambda p: dc.mse(dc.compand_op(p["z"], p["ls"]), dc.Tensor(np.zeros((2, 3, 4)))),
        {"z": rng.standard_normal((2, 3, 4)) * 1.5, "ls": rng.standard_normal(3) * 0.3},
        probes=12, seed=5,
    )
    errors["decompand"] = dc.grad_check(
        lambda p: dc.mse(dc.decompand_op(p["y"], p["ls"]), dc.Tensor(np.zeros((2, 3, 4)))),
        {"y": rng.uniform(-100, 100, (2, 3, 4)), "ls": rng.standard_normal(3) * 0.3},
        probes=12, seed=6,
    )
    xw = rng.standard_normal((1, 2, 8, 8))
    errors["wpt"] = dc.grad_check(
        lambda p: dc.mse(
            dc.linear_op(p["x"],
                         lambda a: wl.wpt_forward(a, 2, axes=2, fb=fb),
                         lambda g: wl.wpt_forward_adjoint(g, 2, axes=2, fb=fb)),
            dc.Tensor(np.zeros((1, 32, 2, 2)))),
        {"x": xw}, probes=12, seed=7,
    )
    errors["iwpt"] = dc.grad_check(
        lambda p: dc.mse(
            dc.linear_op(p["y"],
                         lambda a: wl.wpt_inverse(a, 2, axes=2, fb=fb),
                         lambda g: wl.wpt_inverse_adjoint(g, 2, axes=2, fb=fb)),
            dc.Tensor(np.zeros((1, 1, 8, 8)))),
        {"y": rng.standard_normal((1, 16, 2, 2))}, probes=12, seed=8,
    )

    # full encoder -> bottleneck -> decoder graph on a 3x16x16 input
    config = cd.CodecConfig("2d", c_x=3, levels=2, c_z=8, c_hidden=6, decoder_depth=1)
    model = cd.init_model(config, np.random.default_rng(9), dtype=np.float64)
    params = {k: v + 0.05 * rng.standard_normal(v.shape) for k, v in model.params.items()}
    x = rng.uniform(-1, 1, (2, 3, 16, 16))
    noise = rng.uniform(-0.5, 0.5, (2, 8, 4, 4))
    errors["full_graph"] = dc.grad_check(
        lambda ts: cd.build_training_loss(ts, x, noise, config),
        params, probes=10, h=1e-4, seed=10,
    )

    worst = max(errors.values())
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
    report(
        "criterion 3 (finite-difference gradient checks)",
        worst < 1e-3,
        f"max rel err {worst:.2e} (<1e-3) [{detail}]",
    )


def test_criterion_04_bitstream_losslessness():
    rng = np.random.default_rng(1004)
    from test_bitstream import entropy_bound_bytes, ggd_symbols

    cases = 10_000
    checked_bounds = 0
    t0 = time.perf_counter()
    for i in range(cases):
        kind = "2d" if rng.random() < 0.5 else "1d"
        axes = 2 if kind == "2d" else 1
        levels = int(rng.integers(0, 3))
        c_z = int(rng.integers(1, 4))
        spatial = tuple(int(rng.integers(1, 7)) * (1 << levels) for _ in range(axes))
        cells = int(np.prod([s >> levels for s in spatial]))
        style = int(rng.integers(3))
        if style == 0:
            q = rng.integers(-127, 128, (c_z, cells)).astype(np.int8)
        elif style == 1:
            q = np.stack([ggd_symbols(rng, cells, scale=float(rng.uniform(0.5, 40)))
                          for _ in range(c_z)])
        else:
            q = np.full((c_z, cells), int(rng.integers(-127, 128)), dtype=np.int8)
        q = q.reshape((c_z,) + tuple(s >> levels for s in spatial))
        sigma = rng.uniform(0.05, 10, c_z).astype(np.float32)
        meta = bs.ContainerMeta(
            kind, levels, int(rng.integers(1, 4)),
            tuple(max(1, s - int(rng.integers(0, 1 << levels))) for s in spatial),
            spatial,
        )
        blob = bs.write_container(q, meta, sigma)
        q2, meta2, sigma2 = bs.read_container(blob)
        assert meta2 == meta
        np.testing.assert_array_equal(q2, q)
        np.testing.assert_array_equal(sigma2, sigma)
        if i % 20 == 0:
            for c in range(c_z):
                payload = len(bs.rans_encode(q[c].ravel(), bs.build_freq_table(q[c].ravel())))
                bound = 1.02 * entropy_bound_bytes(q[c].ravel()) + 16
                assert payload <= bound, f"payload {payload} over bound {bound:.1f}"
                checked_bounds += 1
    elapsed = time.perf_counter() - t0
    report(
        "criterion 4 (bitstream losslessness)",
        True,
        f"{cases} fuzzed containers bit-exact, {checked_bounds} channel payloads "
        f"within 1.02x entropy bound + 16 B, {elapsed:.1f}s",
    )


def _psnr_sets(model, held_out):
    quantized, continuous, baseline = [], [], []
    axes = model.config.axes
    for x in held_out:
        z = cd.analyze(model, x)
        y = cd.compand(z, model.sigma, axes=axes)
        zq = cd.decompand(cd.quantize(y).astype(np.float32), model.sigma, axes=axes)
        zc = cd.decompand(y, model.sigma, axes=axes)
        quantized.append(mt.psnr(x, cd.synthesize(model, zq)))
        continuous.append(mt.psnr(x, cd.synthesize(model, zc)))
        baseline.append(mt.psnr(x, rs.upsample(rs.downsample(x, 2), x.shape[-2:])))
    return map(np.asarray, (quantized, continuous, baseline))


def test_criterion_05_quantization_resilience(desk_codec_4x):
    model, held_out = desk_codec_4x
    quantized, continuous, _ = _psnr_sets(model, held_out)
    drop = continuous.mean() - quantized.mean()
    report(
        "criterion 5 (quantization resilience)",
        drop <= 1.0,
        f"PSNR continuous {continuous.mean():.2f} dB vs 8-bit rounded "
        f"{quantized.mean():.2f} dB on {len(held_out)} held-out patches; "
        f"drop {drop:.3f} dB (<=1)",
    )


def test_criterion_06_rate_distortion_gap(desk_codec_4x):
    model, held_out = desk_codec_4x
    quantized, _, baseline = _psnr_sets(model, held_out)
    gap = quantized.mean() - baseline.mean()
    report(
        "criterion 6 (beats dimension-matched bicubic)",
        gap >= 2.0,
        f"codec {quantized.mean():.2f} dB vs bicubic-down/up {baseline.mean():.2f} dB "
        f"on {len(held_out)} held-out patches; gap {gap:.2f} dB (>=2)",
    )


def test_criterion_07_dimensionality_reduction():
    checks = [
        ("image_4x", 4.0, 9_264),
        ("image_16x", 16.0, 2_316),
        ("audio_5x", 512 / 108, 55_404),
        ("audio_19x", 512 / 27, 13_851),
    ]
    details = []
    ok = True
    for name, dr, params in checks:
        config = cd.preset(name)
        exact = config.subband_channels / config.c_z
        ok &= exact == dr and config.analysis_param_count == params and params < 100_000
        details.append(f"{name}: DR {exact:.4g}, params {config.analysis_param_count}")
    report(
        "criterion 7 (DR exactness, analysis params < 100k)",
        ok,
        "; ".join(details),
    )


def test_criterion_08_encode_decode_asymmetry():
    model = cd.init_model(cd.preset("image_4x"), seed=0)
    rng = np.random.default_rng(1008)
    x = rng.uniform(-1, 1, (3, 512, 512)).astype(np.float32)
    work = 512 * 512
    t0 = time.perf_counter()
    enc = mt.bench(lambda a: cd.encode_latent(model, a), x, reps=5, kind="2d",
                   work_units=work)
    q = cd.encode_latent(model, x)
    dec = mt.bench(lambda a: cd.decode_latent(model, a), q, reps=5, kind="2d",
                   work_units=work)
    elapsed = time.perf_counter() - t0
    ratio = enc.median / dec.median
    report(
        "criterion 8 (encode >= 20x decode throughput)",
        ratio >= 20.0 and elapsed < 120.0,
        f"encode {enc.median:.2f} MPix/s, decode {dec.median:.3f} MPix/s, "
        f"ratio {ratio:.1f}x (>=20), bench wall {elapsed:.0f}s (<120)",
    )


def test_criterion_09_compressed_learning(texture_codec, calibrated_tasks):
    t0 = time.perf_counter()
    wins = 0
    details = []
    for task in calibrated_tasks:
        latent, down = cl.run_comparison(task, texture_codec, seed=task.spec.seed)
        gap = latent.accuracy - down.accuracy
        wins += gap >= 0.05
        details.append(
            f"seed {task.spec.seed}: {100 * latent.accuracy:.1f}% vs "
            f"{100 * down.accuracy:.1f}% ({100 * gap:+.1f} pts)"
        )
    elapsed = time.perf_counter() - t0
    report(
        "criterion 9 (latent beats downsample by >=5 pts on >=4/5 seeds)",
        wins >= 4 and elapsed < 1800.0,
        f"{wins}/5 wins; comparison wall {elapsed:.0f}s (<1800); " + "; ".join(details),
    )


def test_criterion_10_container_golden_file():
    blob = (DATA / "golden.wllc").read_bytes()
    expected = np.load(DATA / "golden_expected.npz")
    q, meta, sigma = bs.read_container(blob)
    ok = (
        np.array_equal(q, expected["q"])
        and np.array_equal(sigma, expected["sigma"])
        and meta.kind == str(expected["kind"])
        and meta.levels == int(expected["levels"])
        and meta.c_x == int(expected["c_x"])
        and meta.original_extents == tuple(expected["original_extents"])
        and meta.padded_extents == tuple(expected["padded_extents"])
    )
    re_encoded = bs.write_container(expected["q"], bs.ContainerMeta(
        str(expected["kind"]), int(expected["levels"]), int(expected["c_x"]),
        tuple(expected["original_extents"]), tuple(expected["padded_extents"]),
    ), expected["sigma"])
    ok = ok and re_encoded == blob
    report(
        "criterion 10 (container golden file)",
        ok,
        f"{len(blob)}-byte vector decodes bit-exactly and re-encodes byte-identically",
    )
