"""Wavelet-packet learned lossy codec toolkit.

A lossy codec that sandwiches a shallow linear analysis transform and a deep
residual CNN synthesis transform between an invertible CDF 9/7 wavelet packet
transform, with a Gaussian-CDF compander, an additive-noise entropy
bottleneck for training, and an order-0 rANS container format.
"""

from .bitstream import ContainerMeta, read_container, write_container
from .codec import (
    CodecConfig,
    CodecModel,
    PRESETS,
    analyze,
    compand,
    decode_latent,
    decompand,
    encode_latent,
    init_model,
    load_model,
    preset,
    quantize,
    save_model,
    synthesize,
    train,
)
from .metrics import bench, ms_ssim, psnr, quality_report, ssim
from .wavelet import (
    FilterBank,
    make_cdf97_filterbank,
    subband_count,
    wpt_forward,
    wpt_inverse,
)

__version__ = "0.1.0"

__all__ = [
    "CodecConfig",
    "CodecModel",
    "ContainerMeta",
    "FilterBank",
    "PRESETS",
    "analyze",
    "bench",
    "compand",
    "decode_latent",
    "decompand",
    "encode_latent",
    "init_model",
    "load_model",
    "make_cdf97_filterbank",
    "ms_ssim",
    "preset",
    "psnr",
    "quality_report",
    "quantize",
    "read_container",
    "save_model",
    "ssim",
    "subband_count",
    "synthesize",
    "train",
    "wpt_forward",
    "wpt_inverse",
    "write_container",
    "__version__",
]
