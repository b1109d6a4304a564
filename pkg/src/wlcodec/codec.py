"""The codec pipeline: wavelet packet analysis, a single linear projection,
Gaussian-CDF companding, an additive-noise entropy bottleneck for training,
8-bit quantization, and a residual CNN synthesis transform ahead of the
inverse wavelet transform.

The encoder (analysis + companding + rounding) is linear up to the final
pointwise companding, which makes it cheap enough for on-sensor use; all the
reconstruction burden sits in the decoder CNN, which runs at the reduced
wavelet-domain resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr, ndtri

from . import diffcore as dc
from .wavelet import (
    FilterBank,
    make_cdf97_filterbank,
    subband_count,
    wpt_forward,
    wpt_forward_adjoint,
    wpt_inverse,
    wpt_inverse_adjoint,
)

__all__ = [
    "CodecConfig",
    "CodecModel",
    "TrainResult",
    "TrainingDivergedError",
    "ModelFormatError",
    "PRESETS",
    "preset",
    "init_model",
    "analyze",
    "compand",
    "bottleneck_noise",
    "quantize",
    "decompand",
    "synthesize",
    "encode_latent",
    "decode_latent",
    "basis_gallery",
    "train",
    "save_model",
    "load_model",
    "build_training_loss",
]

_MAGIC = b"WLCM"
_VERSION = 1

COMPAND_HALF = 127.5
_DECOMPAND_EPS = 1e-6


class TrainingDivergedError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    """Static shape of a codec: what it eats and how far it squeezes.

    ``kind`` is "1d" (audio-like) or "2d" (image-like); ``levels`` is the
    wavelet packet depth J; ``c_z`` the latent channel count. The latent is
    smaller than the input by exactly ``dimensionality_reduction``, uniformly
    and independent of content.
    """

    kind: str
    c_x: int
    levels: int
    c_z: int
    c_hidden: int = 64
    decoder_depth: int = 4
    noise_width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("1d", "2d"):
            raise ValueError(f"kind must be '1d' or '2d', got {self.kind!r}")
        if self.c_x < 1 or self.levels < 0 or self.c_hidden < 1 or self.decoder_depth < 0:
            raise ValueError("invalid codec geometry")
        if not (1 <= self.c_z <= self.subband_channels):
            raise ValueError(
                f"c_z must be in [1, {self.subband_channels}], got {self.c_z}"
            )
        if not np.isfinite(self.noise_width) or self.noise_width < 0:
            raise ValueError("noise_width must be finite and >= 0")

    @property
    def axes(self) -> int:
        return 1 if self.kind == "1d" else 2

    @property
    def subband_channels(self) -> int:
        return subband_count(self.c_x, self.levels, self.axes)

    @property
    def dimensionality_reduction(self) -> float:
        return self.subband_channels / self.c_z

    @property
    def analysis_param_count(self) -> int:
        return (self.subband_channels + 1) * self.c_z

    def to_mapping(self) -> dict[str, str]:
        return {
            "kind": self.kind,
            "c_x": str(self.c_x),
            "levels": str(self.levels),
            "c_z": str(self.c_z),
            "c_hidden": str(self.c_hidden),
            "decoder_depth": str(self.decoder_depth),
            "noise_width": repr(self.noise_width),
        }

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "CodecConfig":
        known = {f: mapping[f] for f in (
            "kind", "c_x", "levels", "c_z", "c_hidden", "decoder_depth", "noise_width",
        ) if f in mapping}
        kwargs: dict = {"kind": known.pop("kind")}
        for key, val in known.items():
            kwargs[key] = float(val) if key == "noise_width" else int(val)
        return cls(**kwargs)


PRESETS: dict[str, CodecConfig] = {
    # image codecs: J=3 on RGB, DR 4x and 16x
    "image_4x": CodecConfig("2d", c_x=3, levels=3, c_z=48, c_hidden=384, decoder_depth=4),
    "image_16x": CodecConfig("2d", c_x=3, levels=3, c_z=12, c_hidden=384, decoder_depth=4),
    # stereo audio codecs: J=8, DR 512/108 ~ 4.74x and 512/27 ~ 19x
    "audio_5x": CodecConfig("1d", c_x=2, levels=8, c_z=108, c_hidden=384, decoder_depth=4),
    "audio_19x": CodecConfig("1d", c_x=2, levels=8, c_z=27, c_hidden=384, decoder_depth=4),
}


def preset(name: str) -> CodecConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class CodecModel:
    """A codec config plus all learned parameters.

    Parameters live in a flat name->array dict so the optimizer, the
    checkpoint format, and the training graph all share one source of truth.
    """

    config: CodecConfig
    params: dict[str, np.ndarray]
    fb: FilterBank = field(default_factory=make_cdf97_filterbank)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.params["compand.log_sigma"])

    def analyze(self, x: np.ndarray) -> np.ndarray:
        return analyze(self, x)

    def synthesize(self, z: np.ndarray) -> np.ndarray:
        return synthesize(self, z)

    def encode(self, x: np.ndarray) -> np.ndarray:
        return encode_latent(self, x)

    def decode(self, q: np.ndarray) -> np.ndarray:
        return decode_latent(self, q)


def _param_shapes(config: CodecConfig) -> dict[str, tuple[int, ...]]:
    cs, cz, ch = config.subband_channels, config.c_z, config.c_hidden
    kshape = (3,) * config.axes
    shapes: dict[str, tuple[int, ...]] = {
        "analysis.w": (cs, cz),
        "analysis.b": (cz,),
        "compand.log_sigma": (cz,),
        "synth.entry.w": (cz, ch),
        "synth.entry.b": (ch,),
        "synth.exit.w": (ch, cs),
        "synth.exit.b": (cs,),
    }
    for i in range(config.decoder_depth):
        shapes[f"synth.block{i}.conv_a.k"] = (ch, ch) + kshape
        shapes[f"synth.block{i}.conv_a.b"] = (ch,)
        shapes[f"synth.block{i}.conv_b.k"] = (ch, ch) + kshape
        shapes[f"synth.block{i}.conv_b.b"] = (ch,)
    return shapes


def init_model(config: CodecConfig, seed: int | np.random.Generator = 0,
               dtype=np.float32) -> CodecModel:
    """Fresh model: uniform(+-1/sqrt(fan_in)) weights, zero biases, unit
    companding scales, and a zeroed exit projection so decoding starts null."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(".b") or name == "compand.log_sigma":
            params[name] = np.zeros(shape, dtype=dtype)
        elif name == "synth.exit.w":
            params[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith(".k"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, shape).astype(dtype)
        else:
            fan_in = shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, shape).astype(dtype)
    return CodecModel(config, params)


# ---------------------------------------------------------------------------
# graph builders (shared by training and inference)


def _wpt_op(x: dc.Tensor, config: CodecConfig, fb: FilterBank) -> dc.Tensor:
    j, axes = config.levels, config.axes
    return dc.linear_op(
        x,
        lambda a: wpt_forward(a, j, axes=axes, fb=fb),
        lambda g: wpt_forward_adjoint(g, j, axes=axes, fb=fb),
    )


def _iwpt_op(y: dc.Tensor, config: CodecConfig, fb: FilterBank) -> dc.Tensor:
    j, axes = config.levels, config.axes
    return dc.linear_op(
        y,
        lambda a: wpt_inverse(a, j, axes=axes, fb=fb),
        lambda g: wpt_inverse_adjoint(g, j, axes=axes, fb=fb),
    )


def _build_analysis(ts: dict[str, dc.Tensor], x: dc.Tensor,
                    config: CodecConfig, fb: FilterBank) -> dc.Tensor:
    c_ax = -(config.axes + 1)
    sub = _wpt_op(x, config, fb)
    t = dc.move_axis(sub, c_ax, -1)
    z = dc.dense(t, ts["analysis.w"], ts["analysis.b"])
    return dc.move_axis(z, -1, c_ax)


def _build_synthesis(ts: dict[str, dc.Tensor], z: dc.Tensor,
                     config: CodecConfig, fb: FilterBank) -> dc.Tensor:
    c_ax = -(config.axes + 1)
    t = dc.move_axis(z, c_ax, -1)
    h = dc.dense(t, ts["synth.entry.w"], ts["synth.entry.b"])
    h = dc.move_axis(h, -1, c_ax)
    for i in range(config.decoder_depth):
        h = dc.residual_block(
            h,
            ts[f"synth.block{i}.conv_a.k"],
            ts[f"synth.block{i}.conv_a.b"],
            ts[f"synth.block{i}.conv_b.k"],
            ts[f"synth.block{i}.conv_b.b"],
            dims=config.axes,
        )
    t = dc.move_axis(h, c_ax, -1)
    y = dc.dense(t, ts["synth.exit.w"], ts["synth.exit.b"])
    y = dc.move_axis(y, -1, c_ax)
    return _iwpt_op(y, config, fb)


def build_training_loss(ts: dict[str, dc.Tensor], x: np.ndarray, noise: np.ndarray,
                        config: CodecConfig, fb: FilterBank | None = None) -> dc.Tensor:
    """Reconstruction MSE with the noise bottleneck, as one recorded graph.

    ``x`` is a (B, C, *spatial) batch and ``noise`` a frozen sample shaped
    like the companded latent; the noise enters as an additive constant so
    the graph stays differentiable.
    """
    fb = fb or make_cdf97_filterbank()
    xt = dc.Tensor(x)
    z = _build_analysis(ts, xt, config, fb)
    y = dc.compand_op(z, ts["compand.log_sigma"])
    y = dc.add_const(y, noise)
    zt = dc.decompand_op(y, ts["compand.log_sigma"])
    xh = _build_synthesis(ts, zt, config, fb)
    return dc.mse(xh, xt)


# ---------------------------------------------------------------------------
# inference pipeline


def _has_batch_axis(config: CodecConfig, arr: np.ndarray) -> bool:
    want = config.axes + 1
    if arr.ndim == want:
        return False
    if arr.ndim == want + 1:
        return True
    raise ValueError(
        f"expected rank {want} or {want + 1} for a {config.kind} array, got {arr.ndim}"
    )


def analyze(model: CodecModel, x: np.ndarray) -> np.ndarray:
    """Project a signal to the pre-companding latent: WPT then one affine map.

    Accepts (C, *spatial) or (B, C, *spatial); purely linear, so the latent of
    a sum is the sum of latents.
    """
    config = model.config
    x = np.asarray(x)
    _has_batch_axis(config, x)
    c_ax = -(config.axes + 1)
    if x.shape[c_ax] != config.c_x:
        raise ValueError(f"expected {config.c_x} channels, got {x.shape[c_ax]}")
    sub = wpt_forward(x, config.levels, axes=config.axes, fb=model.fb)
    moved = np.moveaxis(sub, c_ax, -1)
    z = moved @ model.params["analysis.w"] + model.params["analysis.b"]
    return np.moveaxis(z, -1, c_ax)


def _sigma_shaped(sigma: np.ndarray, z: np.ndarray, axes: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=z.dtype if np.issubdtype(z.dtype, np.floating) else np.float64)
    if sigma.ndim != 1:
        raise ValueError("sigma must be one scale per latent channel")
    c_ax = z.ndim - 1 - axes
    if z.shape[c_ax] != sigma.shape[0]:
        raise ValueError(
            f"sigma has {sigma.shape[0]} channels but latent has {z.shape[c_ax]}"
        )
    return sigma.reshape(sigma.shape + (1,) * axes)


def compand(z: np.ndarray, sigma: np.ndarray, *, axes: int | None = None) -> np.ndarray:
    """255*(Phi(z/sigma) - 1/2): squash latents strictly into (-127.5, 127.5).

    Monotonic per channel; ``sigma`` must be positive. ``axes`` (1 or 2)
    disambiguates rank-3 arrays; by default rank 2 is (C, N) and rank 3 is
    (C, H, W).
    """
    z = np.asarray(z)
    if axes is None:
        axes = 1 if z.ndim == 2 else 2
    sigma = np.asarray(sigma)
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("companding scales must be finite and positive")
    sig = _sigma_shaped(sigma, z, axes)
    y = 255.0 * (ndtr(z / sig) - 0.5)
    limit = np.nextafter(COMPAND_HALF, 0.0, dtype=y.dtype)
    return np.clip(y, -limit, limit)


def bottleneck_noise(y: np.ndarray, rng: np.random.Generator,
                     width: float = 1.0) -> np.ndarray:
    """Training-time quantization proxy: add i.i.d. uniform noise spanning
    exactly one quantizer bin (U[-width/2, width/2], width 1 by default)."""
    if width == 0:
        return np.asarray(y)
    y = np.asarray(y)
    return y + rng.uniform(-width / 2.0, width / 2.0, y.shape).astype(y.dtype)


def quantize(y: np.ndarray) -> np.ndarray:
    """Round half away from zero, clamp to [-127, 127], store as int8."""
    y = np.asarray(y)
    rounded = np.sign(y) * np.floor(np.abs(y) + 0.5)
    return np.clip(rounded, -127, 127).astype(np.int8)


def decompand(q: np.ndarray, sigma: np.ndarray, *, axes: int | None = None) -> np.ndarray:
    """Inverse companding: sigma * Phi^-1(clamp(q/255 + 1/2, eps, 1-eps))."""
    q = np.asarray(q)
    work = q.astype(np.float32) if q.dtype.kind in "iu" else q
    if axes is None:
        axes = 1 if work.ndim == 2 else 2
    sigma = np.asarray(sigma)
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("companding scales must be finite and positive")
    sig = _sigma_shaped(sigma, work, axes)
    p = np.clip(work / 255.0 + 0.5, _DECOMPAND_EPS, 1.0 - _DECOMPAND_EPS)
    return (sig * ndtri(p)).astype(work.dtype, copy=False)


def synthesize(model: CodecModel, z: np.ndarray) -> np.ndarray:
    """Decode a (pre-companding domain) latent back to a signal."""
    config = model.config
    z = np.asarray(z, dtype=np.result_type(z, np.float32))
    batched = _has_batch_axis(config, z)
    c_ax = -(config.axes + 1)
    if z.shape[c_ax] != config.c_z:
        raise ValueError(f"expected {config.c_z} latent channels, got {z.shape[c_ax]}")
    work = z if batched else z[None]
    ts = {k: dc.Tensor(v) for k, v in model.params.items()}
    out = _build_synthesis(ts, dc.Tensor(work), config, model.fb).data
    return out if batched else out[0]


def encode_latent(model: CodecModel, x: np.ndarray) -> np.ndarray:
    """Inference encode: analyze, compand, round. No entropy coding; this is
    the cheap dimensionality-reduction path."""
    z = analyze(model, x)
    y = compand(z, model.sigma.astype(z.dtype), axes=model.config.axes)
    return quantize(y)


def decode_latent(model: CodecModel, q: np.ndarray) -> np.ndarray:
    """Inference decode: decompand then synthesize."""
    zt = decompand(np.asarray(q, dtype=np.float32), model.sigma, axes=model.config.axes)
    return synthesize(model, zt)


def basis_gallery(model: CodecModel, amplitude: float = 31.0, grid: int = 3) -> np.ndarray:
    """Decode one-hot latent impulses: channel i gets ``amplitude`` at the
    center of an otherwise-zero (C_z, grid, grid) latent (or (C_z, grid) in
    1D). Returns the stacked decodes, one signal per latent channel."""
    config = model.config
    spatial = (grid,) * config.axes
    center = tuple(g // 2 for g in spatial)
    outs = []
    for i in range(config.c_z):
        z = np.zeros((config.c_z,) + spatial, dtype=np.float32)
        z[(i,) + center] = amplitude
        outs.append(synthesize(model, z))
    return np.stack(outs)


# ---------------------------------------------------------------------------
# training


class TrainResult(NamedTuple):
    model: CodecModel
    loss_history: list[float]


def train(
    config: CodecConfig,
    patches: np.ndarray,
    *,
    steps: int,
    batch_size: int = 16,
    lr: float = 1e-4,
    seed: int = 0,
    dtype=np.float32,
) -> TrainResult:
    """Fit a codec by minimizing reconstruction MSE through the noisy
    bottleneck. ``patches`` is (N, C, *spatial) with extents divisible by
    2^levels; everything (init, batching, noise) is driven by ``seed``.
    """
    patches = np.asarray(patches, dtype=dtype)
    want = config.axes + 2
    if patches.ndim != want:
        raise ValueError(f"patches must be rank {want} (N, C, *spatial)")
    if patches.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    model = init_model(config, rng, dtype=dtype)
    fb = model.fb
    opt = dc.Adam(model.params, lr=lr)
    history: list[float] = []
    half = config.noise_width / 2.0
    for step in range(steps):
        idx = rng.integers(0, patches.shape[0], size=batch_size)
        x = patches[idx]
        ts = {k: dc.Tensor(v, requires_grad=True) for k, v in model.params.items()}
        latent_shape = (batch_size, config.c_z) + tuple(
            s >> config.levels for s in x.shape[2:]
        )
        noise = (
            rng.uniform(-half, half, latent_shape).astype(dtype)
            if half > 0
            else np.zeros(latent_shape, dtype=dtype)
        )
        loss = build_training_loss(ts, x, noise, config, fb)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"loss became non-finite at step {step} (lr={lr}, batch={batch_size})"
            )
        history.append(value)
        dc.backward(loss)
        opt.step({k: t.grad for k, t in ts.items() if t.grad is not None})
    return TrainResult(model, history)


# ---------------------------------------------------------------------------
# checkpoint format: magic "WLCM", version u8, config fields, then named
# parameter tensors as (name_len u16, name bytes, rank u8, extents u32 each,
# little-endian float32 data). All integers little-endian.


def save_model(model: CodecModel, path) -> None:
    config = model.config
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<B", _VERSION)
    blob += struct.pack(
        "<BHBHHBf",
        1 if config.kind == "1d" else 2,
        config.c_x,
        config.levels,
        config.c_z,
        config.c_hidden,
        config.decoder_depth,
        config.noise_width,
    )
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            blob += struct.pack("<I", extent)
        blob += arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path) -> CodecModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ModelFormatError(f"bad magic {blob[:4]!r} at offset 0")
    if blob[4] != _VERSION:
        raise ModelFormatError(f"unsupported model version {blob[4]} at offset 4")
    off = 5
    kind_u8, c_x, levels, c_z, c_hidden, depth, noise_width = struct.unpack_from(
        "<BHBHHBf", blob, off
    )
    off += struct.calcsize("<BHBHHBf")
    if kind_u8 not in (1, 2):
        raise ModelFormatError(f"bad kind byte {kind_u8} at offset 5")
    config = CodecConfig(
        "1d" if kind_u8 == 1 else "2d",
        c_x=c_x,
        levels=levels,
        c_z=c_z,
        c_hidden=c_hidden,
        decoder_depth=depth,
        noise_width=noise_width,
    )
    params: dict[str, np.ndarray] = {}
    while off < len(blob):
        if off + 2 > len(blob):
            raise ModelFormatError(f"truncated parameter header at offset {off}")
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        rank = blob[off]
        off += 1
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        end = off + 4 * count
        if end > len(blob):
            raise ModelFormatError(f"truncated tensor data for {name!r} at offset {off}")
        params[name] = np.frombuffer(blob[off:end], dtype="<f4").reshape(shape).copy()
        off = end
    expected = _param_shapes(config)
    missing = sorted(set(expected) - set(params))
    if missing:
        raise ModelFormatError(f"model file is missing parameters: {missing}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ModelFormatError(
                f"parameter {name!r} has shape {params[name].shape}, expected {shape}"
            )
    return CodecModel(config, params)
