"""Distortion and throughput measurement: PSNR, SSIM / MS-SSIM, and a small
wall-clock benchmark harness reporting megapixels (or megasamples) per second.

SSIM follows Wang et al. 2004: 11x11 Gaussian window, sigma 1.5,
K1 = 0.01, K2 = 0.03, sample statistics over the valid region. MS-SSIM
follows Wang et al. 2003 with the published five scale weights
(0.0448, 0.2856, 0.3001, 0.2363, 0.1333) and 2x2 mean pooling between
scales; negative contrast terms clamp to zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

__all__ = [
    "psnr",
    "ssim",
    "ms_ssim",
    "ms_ssim_detailed",
    "MsSsimResult",
    "QualityReport",
    "quality_report",
    "ThroughputReport",
    "bench",
    "format_record",
]

_MS_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
_MIN_MSSSIM_EXTENT = 176  # 11-tap window after four 2x downsamplings


def _check_pair(reference: np.ndarray, test: np.ndarray):
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError(
            f"shape mismatch: reference {reference.shape} vs test {test.shape}"
        )
    return reference, test


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> float:
    """10*log10(peak^2 / MSE); identical inputs return +inf.

    ``peak`` is the full dynamic range: 2.0 for [-1, 1] signals, 255 for
    8-bit comparisons.
    """
    if peak <= 0:
        raise ValueError("peak must be positive")
    reference, test = _check_pair(reference, test)
    mse = np.mean((reference - test) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def per_channel_psnr(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> list[float]:
    reference, test = _check_pair(reference, test)
    return [psnr(reference[c], test[c], peak) for c in range(reference.shape[0])]


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_cs_single(ref: np.ndarray, test: np.ndarray, peak: float):
    """Mean SSIM and contrast-structure term for one 2D channel."""
    win = _gaussian_window()
    pad = 5
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def valid(img):
        return correlate(img, win, mode="constant")[pad:-pad, pad:-pad]

    mu_r = valid(ref)
    mu_t = valid(test)
    var_r = valid(ref * ref) - mu_r * mu_r
    var_t = valid(test * test) - mu_t * mu_t
    cov = valid(ref * test) - mu_r * mu_t
    cs_map = (2.0 * cov + c2) / (var_r + var_t + c2)
    lum = (2.0 * mu_r * mu_t + c1) / (mu_r**2 + mu_t**2 + c1)
    return float(np.mean(lum * cs_map)), float(np.mean(cs_map))


def _to_channels(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[None]
    if img.ndim == 3:
        return img
    raise ValueError(f"expected a 2D image as (H, W) or (C, H, W), got rank {img.ndim}")


def ssim(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> float:
    """Single-scale SSIM, averaged over channels."""
    reference, test = _check_pair(reference, test)
    refs, tests = _to_channels(reference), _to_channels(test)
    if min(refs.shape[-2:]) < 11:
        raise ValueError("image smaller than the 11x11 SSIM window")
    vals = [_ssim_cs_single(r, t, peak)[0] for r, t in zip(refs, tests)]
    return float(np.mean(vals))


@dataclass(frozen=True)
class MsSsimResult:
    value: float
    scales: int
    fallback: bool  # True when the input was too small for 5 scales


def ms_ssim_detailed(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> MsSsimResult:
    """Five-scale MS-SSIM; falls back to single-scale SSIM (flagged) when the
    smaller extent is below 176 pixels."""
    reference, test = _check_pair(reference, test)
    refs, tests = _to_channels(reference), _to_channels(test)
    if min(refs.shape[-2:]) < _MIN_MSSSIM_EXTENT:
        return MsSsimResult(ssim(reference, test, peak), 1, True)

    def pool(img):
        h, w = img.shape[-2:]
        img = img[..., : h - h % 2, : w - w % 2]
        return 0.25 * (
            img[..., 0::2, 0::2] + img[..., 1::2, 0::2]
            + img[..., 0::2, 1::2] + img[..., 1::2, 1::2]
        )

    per_channel = []
    for r, t in zip(refs, tests):
        factors = []
        for scale in range(5):
            s, cs = _ssim_cs_single(r, t, peak)
            term = s if scale == 4 else cs
            factors.append(max(term, 0.0))
            if scale < 4:
                r, t = pool(r), pool(t)
        per_channel.append(float(np.prod(np.power(factors, _MS_WEIGHTS))))
    return MsSsimResult(float(np.mean(per_channel)), 5, False)


def ms_ssim(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> float:
    return ms_ssim_detailed(reference, test, peak).value


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    ms_ssim: float
    ms_ssim_fallback: bool
    channel_psnr: tuple[float, ...]

    def record(self) -> str:
        return format_record(
            psnr=self.psnr,
            ssim=self.ssim,
            ms_ssim=self.ms_ssim,
            ms_ssim_fallback=int(self.ms_ssim_fallback),
        )


def quality_report(reference: np.ndarray, test: np.ndarray, peak: float = 2.0) -> QualityReport:
    detail = ms_ssim_detailed(reference, test, peak)
    return QualityReport(
        psnr=psnr(reference, test, peak),
        ssim=ssim(reference, test, peak),
        ms_ssim=detail.value,
        ms_ssim_fallback=detail.fallback,
        channel_psnr=tuple(per_channel_psnr(reference, test, peak)),
    )


@dataclass(frozen=True)
class ThroughputReport:
    unit: str  # "MPix/s" or "MSamp/s"
    median: float
    p10: float
    p90: float
    seconds_median: float
    reps: int
    work_units: int

    def record(self) -> str:
        return format_record(
            unit=self.unit,
            median=self.median,
            p10=self.p10,
            p90=self.p90,
            seconds_median=self.seconds_median,
            reps=self.reps,
        )


def bench(fn, x: np.ndarray, reps: int = 5, kind: str = "2d",
          work_units: int | None = None) -> ThroughputReport:
    """Median-of-``reps`` throughput of ``fn(x)`` with one excluded warm-up.

    Work is counted in pixels (H*W) for 2D inputs or sample frames (N) for
    1D, regardless of channel count. Pass ``work_units`` explicitly when the
    input array is not in signal space (e.g. benchmarking a decoder on a
    latent: count the decoded signal's pixels, not the latent cells).
    """
    if reps < 5:
        raise ValueError("reps must be >= 5 for stable percentiles")
    if kind not in ("1d", "2d"):
        raise ValueError("kind must be '1d' or '2d'")
    if work_units is None:
        work_units = int(np.prod(x.shape[-2:])) if kind == "2d" else int(x.shape[-1])
    work = work_units
    fn(x)  # warm-up
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(x)
        times.append(max(time.perf_counter() - t0, 1e-9))
    rates = work / 1e6 / np.asarray(times)
    unit = "MPix/s" if kind == "2d" else "MSamp/s"
    return ThroughputReport(
        unit=unit,
        median=float(np.median(rates)),
        p10=float(np.percentile(rates, 10)),
        p90=float(np.percentile(rates, 90)),
        seconds_median=float(np.median(times)),
        reps=reps,
        work_units=work,
    )


def format_record(**fields) -> str:
    """One line of key=value pairs; the stable structured-text report form."""
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.6g}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)
