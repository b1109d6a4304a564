"""Command-line surface: train, encode, decode, eval, bench, probe-basis,
and the compressed-learning comparison."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bitstream as bs
from . import codec as cd
from . import complearn as cl
from . import datasets as ds
from . import metrics as mt

_DEFAULT_PATCH = {"image": 96, "audio": 16384}


def _read_config(path) -> cd.CodecConfig:
    mapping: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise SystemExit(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = text.split("=", 1)
        mapping[key.strip()] = value.strip()
    try:
        return cd.CodecConfig.from_mapping(mapping)
    except (KeyError, ValueError) as exc:
        raise SystemExit(f"{path}: bad codec config: {exc}") from exc


def _load_for_model(path, config: cd.CodecConfig) -> np.ndarray:
    signal = ds.load_signal(path, "image" if config.kind == "2d" else "audio")
    if signal.shape[0] != config.c_x:
        raise SystemExit(
            f"{path}: {signal.shape[0]} channels but the model expects {config.c_x}"
        )
    return signal


def _cmd_train(args) -> int:
    config = _read_config(args.config)
    want_kind = "2d" if args.kind == "image" else "1d"
    if config.kind != want_kind:
        raise SystemExit(
            f"--kind {args.kind} conflicts with config kind={config.kind}"
        )
    patch = args.patch or _DEFAULT_PATCH[args.kind]
    if patch % (1 << config.levels):
        raise SystemExit(f"--patch {patch} is not divisible by 2^{config.levels}")
    data = ds.Dataset(args.data, args.kind, holdout_fraction=args.holdout_fraction,
                      seed=args.seed)
    extents = (patch,) * (2 if args.kind == "image" else 1)
    patches = data.sample_patches("train", extents, args.patches, seed=args.seed)
    result = cd.train(
        config, patches, steps=args.steps, batch_size=args.batch_size,
        lr=args.lr, seed=args.seed,
    )
    cd.save_model(result.model, args.out)
    print(mt.format_record(
        steps=args.steps,
        initial_loss=result.loss_history[0],
        final_loss=result.loss_history[-1],
        model=str(args.out),
    ))
    return 0


def _encode_signal(model: cd.CodecModel, signal: np.ndarray) -> bytes:
    config = model.config
    original = tuple(signal.shape[1:])
    padded, _ = ds.pad_to_divisible(signal, config.levels, axes=config.axes)
    q = cd.encode_latent(model, padded)
    meta = bs.ContainerMeta(config.kind, config.levels, config.c_x,
                            original, tuple(padded.shape[1:]))
    return bs.write_container(q, meta, model.sigma)


def _decode_container(model: cd.CodecModel, blob: bytes) -> np.ndarray:
    q, meta, sigma = bs.read_container(blob)
    config = model.config
    if (meta.kind, meta.levels, meta.c_x, q.shape[0]) != (
        config.kind, config.levels, config.c_x, config.c_z,
    ):
        raise SystemExit(
            "container geometry does not match the model "
            f"(container kind={meta.kind} J={meta.levels} C_x={meta.c_x} "
            f"C_z={q.shape[0]}; model {config.kind} J={config.levels} "
            f"C_x={config.c_x} C_z={config.c_z})"
        )
    zt = cd.decompand(q.astype(np.float32), sigma, axes=config.axes)
    signal = cd.synthesize(model, zt)
    return ds.crop_to(signal, meta.original_extents)


def _cmd_encode(args) -> int:
    model = cd.load_model(args.model)
    signal = _load_for_model(args.infile, model.config)
    if args.latent_only:
        padded, _ = ds.pad_to_divisible(signal, model.config.levels,
                                        axes=model.config.axes)
        z = cd.analyze(model, padded)
        y = cd.compand(z, model.sigma, axes=model.config.axes)
        np.asarray(y, dtype="<f4").tofile(args.latent_only)
        print(mt.format_record(latent_file=str(args.latent_only),
                               latent_shape=str(y.shape)))
    blob = _encode_signal(model, signal)
    Path(args.out).write_bytes(blob)
    meta_bytes = bs.original_byte_size(
        bs.ContainerMeta(model.config.kind, model.config.levels, model.config.c_x,
                         tuple(signal.shape[1:]), tuple(signal.shape[1:]))
    )
    print(mt.format_record(
        container=str(args.out),
        bytes=len(blob),
        cr=meta_bytes / len(blob),
        dr=model.config.dimensionality_reduction,
    ))
    return 0


def _cmd_decode(args) -> int:
    model = cd.load_model(args.model)
    blob = Path(args.infile).read_bytes()
    signal = _decode_container(model, blob)
    if model.config.kind == "2d":
        ds.save_image(args.out, signal)
    else:
        ds.save_wav(args.out, signal)
    print(mt.format_record(decoded=str(args.out), shape=str(signal.shape)))
    return 0


def _cmd_eval(args) -> int:
    model = cd.load_model(args.model)
    kind = "image" if model.config.kind == "2d" else "audio"
    data = ds.Dataset(args.data, kind, holdout_fraction=0.0, seed=0)
    records = []
    for path in data.train_paths:
        signal = _load_for_model(path, model.config)
        blob = _encode_signal(model, signal)
        recon = _decode_container(model, blob)
        meta = bs.ContainerMeta(model.config.kind, model.config.levels,
                                model.config.c_x, tuple(signal.shape[1:]),
                                tuple(signal.shape[1:]))
        cr = bs.original_byte_size(meta) / len(blob)
        if kind == "image":
            report = mt.quality_report(signal, recon)
            fields = dict(file=path.name, psnr=report.psnr, ssim=report.ssim,
                          ms_ssim=report.ms_ssim, cr=cr,
                          dr=model.config.dimensionality_reduction)
        else:
            fields = dict(file=path.name, psnr=mt.psnr(signal, recon), cr=cr,
                          dr=model.config.dimensionality_reduction)
        records.append(fields)
        print(mt.format_record(**fields))
    numeric = [k for k in records[0] if k != "file"]
    means = {k: float(np.mean([r[k] for r in records])) for k in numeric}
    print(mt.format_record(file="MEAN", **means))
    return 0


def _parse_size(size: str, kind: str) -> tuple[int, ...]:
    if kind == "2d":
        try:
            w, h = (int(v) for v in size.lower().split("x"))
        except ValueError:
            raise SystemExit(f"--size for an image model must be WxH, got {size!r}")
        return (h, w)
    try:
        return (int(size),)
    except ValueError:
        raise SystemExit(f"--size for an audio model must be a sample count, got {size!r}")


def _cmd_bench(args) -> int:
    model = cd.load_model(args.model) if args.model else cd.init_model(
        cd.preset(args.preset), seed=0
    )
    config = model.config
    extents = _parse_size(args.size, config.kind)
    if any(e % (1 << config.levels) for e in extents):
        raise SystemExit(f"--size must be divisible by 2^{config.levels}")
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (config.c_x,) + extents).astype(np.float32)
    work = int(np.prod(extents))
    enc = mt.bench(lambda a: cd.encode_latent(model, a), x, reps=args.reps,
                   kind=config.kind, work_units=work)
    q = cd.encode_latent(model, x)
    dec = mt.bench(lambda a: cd.decode_latent(model, a), q, reps=args.reps,
                   kind=config.kind, work_units=work)
    print("encode " + enc.record())
    print("decode " + dec.record())
    print(mt.format_record(encode_over_decode=enc.median / dec.median))
    return 0


def _cmd_probe_basis(args) -> int:
    model = cd.load_model(args.model)
    gallery = cd.basis_gallery(model, amplitude=args.amplitude)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, signal in enumerate(gallery):
        peak = np.abs(signal).max()
        scaled = signal / peak if peak > 0 else signal
        if model.config.kind == "2d":
            path = out_dir / f"channel_{i:03d}.ppm"
            ds.save_image(path, scaled)
        else:
            path = out_dir / f"channel_{i:03d}.wav"
            ds.save_wav(path, scaled)
    print(mt.format_record(channels=len(gallery), out=str(out_dir),
                           amplitude=args.amplitude))
    return 0


def _cmd_compare(args) -> int:
    if args.task != "texture":
        raise SystemExit(f"unknown task {args.task!r} (only 'texture' exists)")
    model = cd.load_model(args.model)
    wins = 0
    for i in range(args.seeds):
        spec = cl.TaskSpec(seed=args.task_seed + i, n_samples=args.samples,
                           calibrate=args.calibrate)
        task = cl.gen_texture_task(spec)
        latent, down = cl.run_comparison(task, model, seed=args.task_seed + i)
        gap = latent.accuracy - down.accuracy
        wins += gap >= 0.05
        print(mt.format_record(seed=spec.seed, **{
            "latent_acc": latent.accuracy,
            "downsample_acc": down.accuracy,
            "gap_points": 100 * gap,
            "input_dim": latent.input_dim,
        }))
        print("  latent     " + latent.record())
        print("  downsample " + down.record())
    print(mt.format_record(seeds=args.seeds, wins_by_5_points=wins))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wlcodec",
        description="wavelet-packet learned lossy codec toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a codec on a directory of signals")
    p.add_argument("--kind", choices=("image", "audio"), required=True)
    p.add_argument("--config", required=True, help="key=value codec config file")
    p.add_argument("--data", required=True, help="directory of .ppm/.pgm or .wav files")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model path (.wlcm)")
    p.add_argument("--patch", type=int, default=None, help="training patch extent")
    p.add_argument("--patches", type=int, default=560, help="number of training patches")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--holdout-fraction", type=float, default=0.15)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("encode", help="compress one signal to a .wllc container")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--latent-only", default=None,
                   help="also dump the continuous companded latent as raw f32")
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("decode", help="decompress a .wllc container")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("eval", help="quality/rate table over a directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="encode/decode throughput")
    p.add_argument("--model", default=None)
    p.add_argument("--preset", default="image_4x",
                   help="config preset when no --model is given")
    p.add_argument("--size", required=True, help="WxH for images, N for audio")
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("probe-basis", help="decode one-hot latent impulses")
    p.add_argument("--model", required=True)
    p.add_argument("--amplitude", type=float, default=31.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_probe_basis)

    p = sub.add_parser("compare", help="latent vs downsample classification")
    p.add_argument("--model", required=True)
    p.add_argument("--task", default="texture")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--task-seed", type=int, default=200)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--calibrate", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(fn=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
