"""CDF 9/7 wavelet packet transform for multi-channel 1D and 2D signals.

The transform recursively splits every channel into a lowpass and a highpass
band (separably per axis in 2D) and downsamples by two per axis, so a J-level
transform trades spatial/temporal resolution for channel resolution without
changing the element count. Boundaries use whole-sample symmetric extension
(the JPEG 2000 convention for this filter pair), which preserves perfect
reconstruction with the symmetric biorthogonal 9/7 filters.

Layout conventions: 1D signals are arrays shaped (..., C, N), 2D signals
(..., C, H, W). Subbands of one channel are stored adjacently in recursive
(Paley) order, so channel 0 of the output is always the all-lowpass band.

Exact adjoints of both transforms are provided; they are what reverse-mode
differentiation of the (linear) transforms requires, and they are *not* the
inverses because the filter pair is biorthogonal rather than orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FilterBank",
    "make_cdf97_filterbank",
    "subband_count",
    "wpt_forward",
    "wpt_inverse",
    "wpt_forward_adjoint",
    "wpt_inverse_adjoint",
]

# CDF 9/7 filters, normalized so both lowpass filters sum to sqrt(2).
# Derived from the spectral factorization of the degree-14 half-band product
# filter: Q(y) = 1 + 4y + 10y^2 + 20y^3 split into its real root (7-tap
# synthesis lowpass) and complex pair (9-tap analysis lowpass). The highpass
# filters are the alternating-sign modulations of the opposite lowpass.
_LO_ANALYSIS = np.array(
    [
        0.037828455506995461,
        -0.023849465019380002,
        -0.110624404418423410,
        0.377402855612653764,
        0.852698679009403419,
        0.377402855612653764,
        -0.110624404418423410,
        -0.023849465019380002,
        0.037828455506995461,
    ]
)
_LO_SYNTHESIS = np.array(
    [
        -0.064538882628938388,
        -0.040689417609558437,
        0.418092273222212201,
        0.788485616405664398,
        0.418092273222212201,
        -0.040689417609558437,
        -0.064538882628938388,
    ]
)
# H_A[n] = (-1)^n * L_S[n] (7 taps), H_S[n] = (-1)^n * L_A[n] (9 taps),
# with the lowpass branch sampled at even and the highpass at odd positions.
_HI_ANALYSIS = _LO_SYNTHESIS * ((-1.0) ** np.arange(-3, 4))
_HI_SYNTHESIS = _LO_ANALYSIS * ((-1.0) ** np.arange(-4, 5))

_PAD = 4  # max one-sided filter overhang


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Two-channel biorthogonal filterbank with zero-centered symmetric taps.

    ``lo_analysis`` has odd length and is applied at even sample positions;
    ``hi_analysis`` is applied at odd positions. The synthesis pair
    reassembles the signal from the two upsampled subbands.
    """

    lo_analysis: np.ndarray
    hi_analysis: np.ndarray
    lo_synthesis: np.ndarray
    hi_synthesis: np.ndarray

    def astype(self, dtype) -> "FilterBank":
        if self.lo_analysis.dtype == np.dtype(dtype):
            return self
        return FilterBank(
            self.lo_analysis.astype(dtype),
            self.hi_analysis.astype(dtype),
            self.lo_synthesis.astype(dtype),
            self.hi_synthesis.astype(dtype),
        )


def make_cdf97_filterbank() -> FilterBank:
    """Return the CDF 9/7 filterbank as used by JPEG 2000.

    The analysis lowpass (9 taps) sums to sqrt(2), the analysis highpass
    (7 taps) sums to zero; one analysis level followed by one synthesis
    level reconstructs any finite even-length signal to roundoff.
    """
    return FilterBank(
        _LO_ANALYSIS.copy(),
        _HI_ANALYSIS.copy(),
        _LO_SYNTHESIS.copy(),
        _HI_SYNTHESIS.copy(),
    )


def subband_count(channels: int, levels: int, axes: int) -> int:
    """Channel count after ``levels`` packet levels of an ``axes``-D signal."""
    return channels * 2 ** (levels * axes)


def _mirror_indices(start: int, stop: int, n: int) -> np.ndarray:
    """Whole-sample symmetric (period 2n-2) index map into [0, n)."""
    idx = np.arange(start, stop)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.remainder(idx, period)
    return np.where(m < n, m, period - m)


def _extend(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return x[..., _mirror_indices(-_PAD, n + _PAD, n)]


def _extend_adjoint(ge: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of :func:`_extend`: fold the extension back onto [0, n)."""
    if n >= _PAD + 2:
        gx = ge[..., _PAD : _PAD + n].copy()
        gx[..., 1 : _PAD + 1] += ge[..., :_PAD][..., ::-1]
        gx[..., n - _PAD - 1 : n - 1] += ge[..., n + _PAD :][..., ::-1]
        return gx
    idx = _mirror_indices(-_PAD, n + _PAD, n)
    moved = np.moveaxis(ge, -1, 0)
    acc = np.zeros((n,) + moved.shape[1:], dtype=ge.dtype)
    np.add.at(acc, idx, moved)
    return np.moveaxis(acc, 0, -1)


def _analyze_last(x: np.ndarray, fb: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level along the last axis: (..., N) -> 2 x (..., N/2)."""
    n = x.shape[-1]
    xe = _extend(x)
    lo, hi = fb.lo_analysis, fb.hi_analysis
    low = lo[0] * xe[..., 0 : n - 1 : 2]
    for m in range(1, 9):
        low += lo[m] * xe[..., m : m + n - 1 : 2]
    high = hi[0] * xe[..., 2 : n + 1 : 2]
    for m in range(1, 7):
        high += hi[m] * xe[..., 2 + m : 2 + m + n - 1 : 2]
    return low, high


def _analyze_last_adjoint(
    g_low: np.ndarray, g_high: np.ndarray, fb: FilterBank
) -> np.ndarray:
    n = 2 * g_low.shape[-1]
    lo, hi = fb.lo_analysis, fb.hi_analysis
    ge = np.zeros(g_low.shape[:-1] + (n + 2 * _PAD,), dtype=g_low.dtype)
    for m in range(9):
        ge[..., m : m + n - 1 : 2] += lo[m] * g_low
    for m in range(7):
        ge[..., 2 + m : 2 + m + n - 1 : 2] += hi[m] * g_high
    return _extend_adjoint(ge, n)


def _synthesize_last(
    low: np.ndarray, high: np.ndarray, fb: FilterBank
) -> np.ndarray:
    """One synthesis level along the last axis: 2 x (..., N/2) -> (..., N)."""
    n = 2 * low.shape[-1]
    u = np.empty(low.shape[:-1] + (n,), dtype=low.dtype)
    u[..., 0::2] = low
    u[..., 1::2] = high
    ue = _extend(u)
    # _PAD is even, so extended-array parity equals sample-position parity:
    # even slots hold lowpass samples, odd slots highpass.
    u_lo = ue.copy()
    u_lo[..., 1::2] = 0
    u_hi = ue
    u_hi[..., 0::2] = 0
    lo, hi = fb.lo_synthesis, fb.hi_synthesis
    x = lo[0] * u_lo[..., 1 : 1 + n]
    for m in range(1, 7):
        x += lo[m] * u_lo[..., 1 + m : 1 + m + n]
    for m in range(9):
        x += hi[m] * u_hi[..., m : m + n]
    return x


def _synthesize_last_adjoint(
    gx: np.ndarray, fb: FilterBank
) -> tuple[np.ndarray, np.ndarray]:
    n = gx.shape[-1]
    lo, hi = fb.lo_synthesis, fb.hi_synthesis
    acc_lo = np.zeros(gx.shape[:-1] + (n + 2 * _PAD,), dtype=gx.dtype)
    acc_hi = np.zeros_like(acc_lo)
    for m in range(7):
        acc_lo[..., 1 + m : 1 + m + n] += lo[m] * gx
    for m in range(9):
        acc_hi[..., m : m + n] += hi[m] * gx
    acc_lo[..., 1::2] = 0
    acc_hi[..., 0::2] = 0
    gu = _extend_adjoint(acc_lo + acc_hi, n)
    return gu[..., 0::2], gu[..., 1::2]


def _analyze_vertical(x: np.ndarray, fb: FilterBank):
    moved = np.moveaxis(x, -2, -1)
    low, high = _analyze_last(moved, fb)
    return np.moveaxis(low, -1, -2), np.moveaxis(high, -1, -2)


def _synthesize_vertical(low: np.ndarray, high: np.ndarray, fb: FilterBank):
    merged = _synthesize_last(np.moveaxis(low, -2, -1), np.moveaxis(high, -2, -1), fb)
    return np.moveaxis(merged, -1, -2)


def _infer_axes(x: np.ndarray, axes: int | None) -> int:
    if axes is not None:
        if axes not in (1, 2):
            raise ValueError(f"axes must be 1 or 2, got {axes}")
        return axes
    if x.ndim == 2:
        return 1
    if x.ndim == 3:
        return 2
    raise ValueError(
        f"cannot infer dimensionality from a rank-{x.ndim} array; pass axes=1 or 2"
    )


def _check_extents(x: np.ndarray, levels: int, axes: int) -> None:
    step = 2**levels
    for ax in range(-axes, 0):
        if x.shape[ax] == 0 or x.shape[ax] % step != 0:
            raise ValueError(
                f"extent {x.shape[ax]} along axis {ax} is not divisible by "
                f"2^{levels}; pad the signal before transforming"
            )


def _working_fb(fb: FilterBank | None, dtype) -> FilterBank:
    fb = fb or make_cdf97_filterbank()
    if not np.issubdtype(dtype, np.floating):
        dtype = np.float64
    return fb.astype(dtype)


def wpt_forward(
    x: np.ndarray,
    levels: int,
    *,
    axes: int | None = None,
    fb: FilterBank | None = None,
) -> np.ndarray:
    """Full wavelet packet analysis of a (..., C, N) or (..., C, H, W) array.

    Every channel is split into 2 (1D) or 4 (2D) half-resolution subbands
    per level; children of one channel stay adjacent (recursive order), so
    output channel 0 is the all-lowpass band. The transform is linear and
    preserves the total element count. Extents along the transformed axes
    must be divisible by ``2**levels``. ``levels=0`` returns the input.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    x = np.asarray(x)
    axes = _infer_axes(x, axes)
    if x.ndim < axes + 1:
        raise ValueError("input must have a channel axis before the signal axes")
    if levels == 0:
        return x
    _check_extents(x, levels, axes)
    fb = _working_fb(fb, x.dtype)
    x = x.astype(fb.lo_analysis.dtype, copy=False)
    for _ in range(levels):
        if axes == 1:
            low, high = _analyze_last(x, fb)
            x = np.stack([low, high], axis=-2)
            x = x.reshape(x.shape[:-3] + (-1, x.shape[-1]))
        else:
            a, b = _analyze_vertical(x, fb)
            aa, ab = _analyze_last(a, fb)
            ba, bb = _analyze_last(b, fb)
            x = np.stack([aa, ab, ba, bb], axis=-3)
            x = x.reshape(x.shape[:-4] + (-1,) + x.shape[-2:])
    return x


def wpt_inverse(
    y: np.ndarray,
    levels: int,
    *,
    axes: int | None = None,
    fb: FilterBank | None = None,
) -> np.ndarray:
    """Exact inverse of :func:`wpt_forward` (up to floating-point error)."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    y = np.asarray(y)
    axes = _infer_axes(y, axes)
    if levels == 0:
        return y
    c_ax = -(axes + 1)
    if y.ndim < axes + 1:
        raise ValueError("input must have a channel axis before the signal axes")
    group = (2**axes) ** levels
    if y.shape[c_ax] % group != 0:
        raise ValueError(
            f"channel count {y.shape[c_ax]} is not divisible by {group}; "
            f"inconsistent subband tensor for {levels} levels"
        )
    fb = _working_fb(fb, y.dtype)
    y = y.astype(fb.lo_analysis.dtype, copy=False)
    for _ in range(levels):
        if axes == 1:
            c = y.reshape(y.shape[:-2] + (-1, 2, y.shape[-1]))
            y = _synthesize_last(c[..., 0, :], c[..., 1, :], fb)
        else:
            c = y.reshape(y.shape[:-3] + (-1, 4) + y.shape[-2:])
            a = _synthesize_last(c[..., 0, :, :], c[..., 1, :, :], fb)
            b = _synthesize_last(c[..., 2, :, :], c[..., 3, :, :], fb)
            y = _synthesize_vertical(a, b, fb)
    return y


def wpt_forward_adjoint(
    g: np.ndarray,
    levels: int,
    *,
    axes: int | None = None,
    fb: FilterBank | None = None,
) -> np.ndarray:
    """Transpose of the linear map :func:`wpt_forward` applied to ``g``."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    g = np.asarray(g)
    axes = _infer_axes(g, axes)
    if levels == 0:
        return g
    fb = _working_fb(fb, g.dtype)
    g = g.astype(fb.lo_analysis.dtype, copy=False)
    for _ in range(levels):
        if axes == 1:
            c = g.reshape(g.shape[:-2] + (-1, 2, g.shape[-1]))
            g = _analyze_last_adjoint(c[..., 0, :], c[..., 1, :], fb)
        else:
            c = g.reshape(g.shape[:-3] + (-1, 4) + g.shape[-2:])
            a = _analyze_last_adjoint(c[..., 0, :, :], c[..., 1, :, :], fb)
            b = _analyze_last_adjoint(c[..., 2, :, :], c[..., 3, :, :], fb)
            ga = np.moveaxis(a, -2, -1)
            gb = np.moveaxis(b, -2, -1)
            g = np.moveaxis(_analyze_last_adjoint(ga, gb, fb), -1, -2)
    return g


def wpt_inverse_adjoint(
    g: np.ndarray,
    levels: int,
    *,
    axes: int | None = None,
    fb: FilterBank | None = None,
) -> np.ndarray:
    """Transpose of the linear map :func:`wpt_inverse` applied to ``g``."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    g = np.asarray(g)
    axes = _infer_axes(g, axes)
    if levels == 0:
        return g
    _check_extents(g, levels, axes)
    fb = _working_fb(fb, g.dtype)
    g = g.astype(fb.lo_analysis.dtype, copy=False)
    for _ in range(levels):
        if axes == 1:
            low, high = _synthesize_last_adjoint(g, fb)
            g = np.stack([low, high], axis=-2)
            g = g.reshape(g.shape[:-3] + (-1, g.shape[-1]))
        else:
            moved = np.moveaxis(g, -2, -1)
            a, b = _synthesize_last_adjoint(moved, fb)
            a = np.moveaxis(a, -1, -2)
            b = np.moveaxis(b, -1, -2)
            aa, ab = _synthesize_last_adjoint(a, fb)
            ba, bb = _synthesize_last_adjoint(b, fb)
            g = np.stack([aa, ab, ba, bb], axis=-3)
            g = g.reshape(g.shape[:-4] + (-1,) + g.shape[-2:])
    return g
