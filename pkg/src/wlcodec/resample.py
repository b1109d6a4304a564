"""Separable bicubic resampling (Keys kernel, a = -1/2) with antialiasing.

Used for the resolution-reduction baselines the codec is compared against:
downscaling stretches the kernel by the scale factor so it acts as a proper
anti-alias filter, matching what mainstream image libraries do on resize.
"""

from __future__ import annotations

import numpy as np

__all__ = ["resize_axis", "resize2d", "downsample", "upsample"]


def _cubic(t: np.ndarray) -> np.ndarray:
    # Keys interpolation kernel with a = -0.5 (Catmull-Rom)
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    near = 1.5 * at3 - 2.5 * at2 + 1.0
    far = -0.5 * at3 + 2.5 * at2 - 4.0 * at + 2.0
    return np.where(at <= 1.0, near, np.where(at < 2.0, far, 0.0))


def _weight_matrix(n_in: int, n_out: int, antialias: bool) -> np.ndarray:
    scale = n_in / n_out
    stretch = max(scale, 1.0) if antialias else 1.0
    support = 2.0 * stretch
    out_idx = np.arange(n_out)
    centers = (out_idx + 0.5) * scale - 0.5
    left = np.floor(centers - support + 1).astype(int)
    width = int(np.ceil(2 * support)) + 1
    taps = left[:, None] + np.arange(width)[None, :]
    weights = _cubic((taps - centers[:, None]) / stretch)
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, n_in - 1)  # replicate edges
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(out_idx, width), taps.ravel()), weights.ravel())
    return mat


def resize_axis(x: np.ndarray, n_out: int, axis: int = -1, antialias: bool = True) -> np.ndarray:
    """Resample one axis to ``n_out`` samples."""
    x = np.asarray(x)
    n_in = x.shape[axis]
    if n_in == n_out:
        return x
    mat = _weight_matrix(n_in, n_out, antialias).astype(
        x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    )
    moved = np.moveaxis(x, axis, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, axis)


def resize2d(x: np.ndarray, height: int, width: int, antialias: bool = True) -> np.ndarray:
    """Resample the trailing two axes of (..., H, W)."""
    return resize_axis(resize_axis(x, height, axis=-2, antialias=antialias),
                       width, axis=-1, antialias=antialias)


def downsample(x: np.ndarray, factor: int, axes: int = 2) -> np.ndarray:
    """Shrink each of the trailing ``axes`` extents by an integer factor."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    out = x
    for ax in range(-axes, 0):
        out = resize_axis(out, x.shape[ax] // factor, axis=ax, antialias=True)
    return out


def upsample(x: np.ndarray, extents: tuple[int, ...]) -> np.ndarray:
    """Interpolate the trailing axes back up to ``extents`` (no antialias)."""
    out = x
    for ax, n in zip(range(-len(extents), 0), extents):
        out = resize_axis(out, n, axis=ax, antialias=False)
    return out
