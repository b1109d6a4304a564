"""Desk-scale compressed-domain learning experiment.

The synthetic two-class task puts all class-defining evidence in high
spatial frequencies: class 0 carries a coherent oriented grating, class 1
isotropic bandpass noise with the same spectral envelope and power. Both
ride on identical low-frequency colored backgrounds, so any resolution
reduction that destroys the fine band leaves the classes indistinguishable,
while a codec latent that preserves the band keeps them separable at the
same input dimensionality.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import codec as cd
from . import diffcore as dc
from . import resample

__all__ = [
    "TaskSpec",
    "TextureTask",
    "ComparisonReport",
    "CalibrationError",
    "InconclusiveComparisonError",
    "texture_images",
    "gen_texture_task",
    "featurize",
    "matched_downsample_factor",
    "train_classifier",
    "run_comparison",
]


class CalibrationError(RuntimeError):
    """The generated task violates its separability invariants."""


class InconclusiveComparisonError(RuntimeError):
    """Neither representation supports learning; the task needs retuning."""


@dataclass(frozen=True)
class TaskSpec:
    """Generator settings for the two-class texture task."""

    seed: int
    n_samples: int = 600
    extent: int = 64
    channels: int = 3
    freq_band: tuple[float, float] = (0.30, 0.42)  # cycles/pixel
    orientations: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0)  # degrees
    content_amplitude: float = 0.40
    background_amplitude: float = 0.50
    holdout_fraction: float = 0.25
    calibrate: bool = True
    # calibration gates: separable at full resolution, destroyed at 8x
    full_res_floor: float = 0.90
    downsampled_ceiling: float = 0.60
    calibration_factor: int = 8


@dataclass
class TextureTask:
    spec: TaskSpec
    images: np.ndarray  # (N, C, E, E) float32 in [-1, 1]
    labels: np.ndarray  # (N,) int64, balanced
    train_idx: np.ndarray
    test_idx: np.ndarray
    calibration: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ComparisonReport:
    representation: str
    input_dim: int
    accuracy: float
    train_seconds: float
    infer_seconds: float

    def record(self) -> str:
        from .metrics import format_record

        return format_record(
            representation=self.representation,
            input_dim=self.input_dim,
            accuracy=self.accuracy,
            train_seconds=self.train_seconds,
            infer_seconds=self.infer_seconds,
        )


def _background(rng: np.random.Generator, spec: TaskSpec) -> np.ndarray:
    """Colored low-frequency field: a few random plane waves below 0.05 c/px."""
    e = spec.extent
    grid = np.arange(e)
    out = np.zeros((spec.channels, e, e), dtype=np.float64)
    for _ in range(6):
        f = rng.uniform(0.005, 0.05)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.cos(
            2 * np.pi * f * (np.cos(theta) * grid[None, :] + np.sin(theta) * grid[:, None])
            + phase
        )
        out += rng.uniform(0.1, 0.4, (spec.channels, 1, 1)) * wave
    peak = np.abs(out).max()
    if peak > 0:
        out *= spec.background_amplitude / peak
    return out


def _grating(rng: np.random.Generator, spec: TaskSpec) -> np.ndarray:
    e = spec.extent
    grid = np.arange(e)
    f = rng.uniform(*spec.freq_band)
    theta = np.deg2rad(rng.choice(spec.orientations) + rng.uniform(-5, 5))
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.cos(
        2 * np.pi * f * (np.cos(theta) * grid[None, :] + np.sin(theta) * grid[:, None])
        + phase
    )
    return spec.content_amplitude * wave  # RMS = amplitude / sqrt(2)


def _bandpass_noise(rng: np.random.Generator, spec: TaskSpec) -> np.ndarray:
    """Isotropic noise restricted to the grating frequency annulus, scaled to
    the grating's RMS so the power envelopes match."""
    e = spec.extent
    fy = np.fft.fftfreq(e)[:, None]
    fx = np.fft.rfftfreq(e)[None, :]
    rad = np.hypot(fx, fy)
    mask = (rad >= spec.freq_band[0]) & (rad <= spec.freq_band[1])
    spectrum = (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape)) * mask
    noise = np.fft.irfft2(spectrum, s=(e, e))
    rms = np.sqrt(np.mean(noise**2))
    target_rms = spec.content_amplitude / np.sqrt(2.0)
    return noise * (target_rms / max(rms, 1e-12))


def texture_images(rng: np.random.Generator, count: int, spec: TaskSpec,
                   labels: np.ndarray | None = None) -> np.ndarray:
    """Sample task images; with ``labels`` None, classes alternate 0/1."""
    if labels is None:
        labels = np.arange(count) % 2
    out = np.empty((count, spec.channels, spec.extent, spec.extent), dtype=np.float32)
    for i in range(count):
        img = _background(rng, spec)
        content = _grating(rng, spec) if labels[i] == 0 else _bandpass_noise(rng, spec)
        img += content[None, :, :]  # luminance content, identical per channel
        out[i] = np.clip(img, -1.0, 1.0)
    return out


def gen_texture_task(spec: TaskSpec) -> TextureTask:
    """Generate, split, and (by default) calibrate the texture task."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples - spec.n_samples % 2  # exact class balance
    labels = np.arange(n) % 2
    images = texture_images(rng, n, spec, labels)
    order = rng.permutation(n)
    n_test = int(round(n * spec.holdout_fraction))
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    task = TextureTask(spec, images, labels.astype(np.int64), train_idx, test_idx)
    if spec.calibrate:
        full_acc = train_classifier(
            featurize(task.images, "identity"), task.labels,
            task.train_idx, task.test_idx, seed=spec.seed,
        ).accuracy
        down_acc = train_classifier(
            featurize(task.images, "downsample", factor=spec.calibration_factor),
            task.labels, task.train_idx, task.test_idx, seed=spec.seed,
        ).accuracy
        task.calibration = {"full_res": full_acc, "downsampled": down_acc}
        if full_acc < spec.full_res_floor:
            raise CalibrationError(
                f"full-resolution accuracy {full_acc:.3f} below the "
                f"{spec.full_res_floor} floor; raise content amplitude"
            )
        if down_acc > spec.downsampled_ceiling:
            raise CalibrationError(
                f"{spec.calibration_factor}x-downsampled accuracy {down_acc:.3f} "
                f"above the {spec.downsampled_ceiling} ceiling; raise the frequency band"
            )
    return task


def featurize(images: np.ndarray, mode: str, *, model: cd.CodecModel | None = None,
              factor: int | None = None) -> np.ndarray:
    """Map (N, C, E, E) images to classifier inputs.

    Modes: ``identity`` (raw pixels), ``downsample`` (antialiased bicubic by
    ``factor`` per axis), ``latent`` (codec analyze + compand, skipping
    quantization and entropy coding). Outputs keep a channels-first layout.
    """
    images = np.asarray(images, dtype=np.float32)
    if mode == "identity":
        return images
    if mode == "downsample":
        if factor is None:
            raise ValueError("downsample mode needs a factor")
        return resample.downsample(images, factor).astype(np.float32)
    if mode == "latent":
        if model is None:
            raise ValueError("latent mode needs a trained codec model")
        z = cd.analyze(model, images)
        y = cd.compand(z, model.sigma, axes=model.config.axes)
        return y.astype(np.float32)
    raise ValueError(f"unknown featurize mode {mode!r}")


def matched_downsample_factor(config: cd.CodecConfig, extent: int, channels: int) -> int:
    """Per-axis factor giving the same feature count as the codec latent."""
    latent_dim = config.c_z * (extent >> config.levels) ** 2
    target_extent = np.sqrt(latent_dim / channels)
    factor = extent / target_extent
    rounded = max(1, int(round(factor)))
    got = channels * (extent // rounded) ** 2
    if abs(got - latent_dim) > 0.01 * latent_dim:
        raise ValueError(
            f"cannot dimension-match: latent {latent_dim} vs downsample {got}"
        )
    return rounded


@dataclass(frozen=True)
class ClassifierResult:
    accuracy: float
    train_seconds: float
    infer_seconds: float


def _classifier_params(c_in: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape).astype(np.float32)

    return {
        "c1.k": uniform((hidden, c_in, 3, 3), c_in * 9),
        "c1.b": np.zeros(hidden, dtype=np.float32),
        "c2.k": uniform((hidden, hidden, 3, 3), hidden * 9),
        "c2.b": np.zeros(hidden, dtype=np.float32),
        "head.w": uniform((hidden, 2), hidden),
        "head.b": np.zeros(2, dtype=np.float32),
    }


def _classifier_logits(ts: dict[str, dc.Tensor], x: np.ndarray) -> dc.Tensor:
    h = dc.silu(dc.conv2d(dc.Tensor(x), ts["c1.k"], ts["c1.b"]))
    h = dc.silu(dc.conv2d(h, ts["c2.k"], ts["c2.b"]))
    pooled = dc.mean(h, (2, 3))  # global average over space
    return dc.dense(pooled, ts["head.w"], ts["head.b"])


def train_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    *,
    seed: int = 0,
    hidden: int = 16,
    steps: int = 300,
    batch_size: int = 32,
    lr: float = 3e-3,
) -> ClassifierResult:
    """Fit the fixed-budget head (conv3 -> SiLU -> conv3 -> SiLU -> mean ->
    dense) on standardized features; identical settings across
    representations so only the representation varies."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels)
    train_x = features[train_idx]
    mu = train_x.mean(axis=(0, 2, 3), keepdims=True)
    sd = train_x.std(axis=(0, 2, 3), keepdims=True) + 1e-6
    normed = ((features - mu) / sd).astype(np.float32)
    onehot = np.eye(2, dtype=np.float32)[labels]

    rng = np.random.default_rng(seed)
    params = _classifier_params(features.shape[1], hidden, rng)
    opt = dc.Adam(params, lr=lr)
    t0 = time.perf_counter()
    for _ in range(steps):
        idx = train_idx[rng.integers(0, len(train_idx), batch_size)]
        ts = {k: dc.Tensor(v, requires_grad=True) for k, v in params.items()}
        logits = _classifier_logits(ts, normed[idx])
        loss = dc.mse(logits, dc.Tensor(onehot[idx]))
        dc.backward(loss)
        opt.step({k: t.grad for k, t in ts.items() if t.grad is not None})
    train_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    ts = {k: dc.Tensor(v) for k, v in params.items()}
    logits = _classifier_logits(ts, normed[test_idx]).data
    infer_seconds = time.perf_counter() - t0
    accuracy = float(np.mean(np.argmax(logits, axis=1) == labels[test_idx]))
    return ClassifierResult(accuracy, train_seconds, infer_seconds)


def run_comparison(
    task: TextureTask,
    model: cd.CodecModel,
    *,
    seed: int = 0,
    classifier_kwargs: dict | None = None,
) -> tuple[ComparisonReport, ComparisonReport]:
    """Train the identical classifier on codec latents and on dimension-matched
    downsampled pixels; returns (latent report, downsample report)."""
    kwargs = dict(classifier_kwargs or {})
    spec = task.spec
    factor = matched_downsample_factor(model.config, spec.extent, spec.channels)

    latent_features = featurize(task.images, "latent", model=model)
    down_features = featurize(task.images, "downsample", factor=factor)
    latent_dim = int(np.prod(latent_features.shape[1:]))
    down_dim = int(np.prod(down_features.shape[1:]))
    if abs(latent_dim - down_dim) > 0.01 * max(latent_dim, down_dim):
        raise ValueError(f"dimension mismatch: latent {latent_dim} vs pixels {down_dim}")

    reports = []
    for name, features in (("latent", latent_features), (f"downsample{factor}x", down_features)):
        result = train_classifier(
            features, task.labels, task.train_idx, task.test_idx, seed=seed, **kwargs
        )
        reports.append(
            ComparisonReport(
                representation=name,
                input_dim=int(np.prod(features.shape[1:])),
                accuracy=result.accuracy,
                train_seconds=result.train_seconds,
                infer_seconds=result.infer_seconds,
            )
        )
    if all(r.accuracy < 0.6 for r in reports):
        raise InconclusiveComparisonError(
            "neither representation learned the task "
            f"(accuracies {[round(r.accuracy, 3) for r in reports]})"
        )
    return reports[0], reports[1]
