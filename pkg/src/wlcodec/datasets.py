"""Signal ingestion and patch sampling.

Formats are deliberately minimal and bit-auditable: binary PPM (P6) and PGM
(P5) with maxval 255 for images, RIFF/WAVE PCM 16-bit mono/stereo for audio.
Samples are normalized to [-1, 1] on load (v/127.5 - 1 for images, v/32768
for audio) and the mappings invert exactly on save.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FileFormatError",
    "load_image",
    "save_image",
    "load_wav",
    "save_wav",
    "load_signal",
    "pad_to_divisible",
    "crop_to",
    "Dataset",
]


class FileFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# netpbm (PPM / PGM)


def _read_pnm_tokens(blob: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read whitespace-separated integer header tokens, honoring # comments."""
    tokens: list[int] = []
    pos = start
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        begin = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if begin == pos:
            raise FileFormatError("unexpected end of netpbm header")
        try:
            tokens.append(int(blob[begin:pos]))
        except ValueError as exc:
            raise FileFormatError(f"bad netpbm header token {blob[begin:pos]!r}") from exc
    return tokens, pos + 1  # exactly one whitespace byte after maxval


def load_image(path) -> np.ndarray:
    """Load a binary PPM/PGM into a channels-first float32 array in [-1, 1]."""
    blob = Path(path).read_bytes()
    magic = blob[:2]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise FileFormatError(f"unsupported netpbm magic {magic!r} (want P5 or P6)")
    (width, height, maxval), pos = _read_pnm_tokens(blob, 3, 2)
    if maxval != 255:
        raise FileFormatError(f"unsupported maxval {maxval} (only 8-bit supported)")
    if width <= 0 or height <= 0:
        raise FileFormatError(f"bad image dimensions {width}x{height}")
    count = width * height * channels
    payload = blob[pos : pos + count]
    if len(payload) < count:
        raise FileFormatError(
            f"truncated pixel payload: expected {count} bytes, got {len(payload)}"
        )
    if len(blob) - pos > count:
        raise FileFormatError("trailing bytes after pixel payload")
    raster = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    img = raster.astype(np.float32) / 127.5 - 1.0
    return np.moveaxis(img, -1, 0)


def save_image(path, signal: np.ndarray) -> None:
    """Write a (1, H, W) or (3, H, W) [-1, 1] signal as PGM/PPM."""
    signal = np.asarray(signal)
    if signal.ndim != 3 or signal.shape[0] not in (1, 3):
        raise FileFormatError("image signal must be (1|3, H, W)")
    levels = np.clip(np.round((signal + 1.0) * 127.5), 0, 255).astype(np.uint8)
    raster = np.moveaxis(levels, 0, -1)
    magic = b"P5" if signal.shape[0] == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, signal.shape[2], signal.shape[1])
    Path(path).write_bytes(header + raster.tobytes())


# ---------------------------------------------------------------------------
# WAV (PCM 16-bit)


def load_wav(path) -> np.ndarray:
    """Load PCM-16 mono/stereo WAV into channels-first float32 (C, N) = v/32768."""
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            nframes = wav.getnframes()
            raw = wav.readframes(nframes)
    except (wave.Error, EOFError) as exc:
        raise FileFormatError(f"not a readable PCM WAV file: {exc}") from exc
    if width != 2:
        raise FileFormatError(f"unsupported sample width {8 * width} bits (want 16)")
    if channels not in (1, 2):
        raise FileFormatError(f"unsupported channel count {channels}")
    if len(raw) < nframes * channels * 2:
        raise FileFormatError(
            f"truncated data chunk: header says {nframes} frames, "
            f"payload holds {len(raw) // (channels * 2)}"
        )
    pcm = np.frombuffer(raw, dtype="<i2").reshape(nframes, channels)
    return (pcm.astype(np.float32) / 32768.0).T.copy()


def save_wav(path, signal: np.ndarray, rate: int = 44100) -> None:
    signal = np.asarray(signal)
    if signal.ndim != 2 or signal.shape[0] not in (1, 2):
        raise FileFormatError("audio signal must be (1|2, N)")
    pcm = np.clip(np.round(signal * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(signal.shape[0])
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(pcm.T.tobytes())


_IMAGE_SUFFIXES = (".ppm", ".pgm")
_AUDIO_SUFFIXES = (".wav",)


def load_signal(path, kind: str) -> np.ndarray:
    return load_image(path) if kind == "image" else load_wav(path)


# ---------------------------------------------------------------------------
# padding


def pad_to_divisible(signal: np.ndarray, levels: int, *, axes: int | None = None):
    """Extend the trailing axes by symmetric reflection up to the next
    multiple of 2**levels. Returns (padded, original_extents); cropping the
    decode back to the original extents is exact."""
    signal = np.asarray(signal)
    if axes is None:
        axes = 1 if signal.ndim == 2 else 2
    original = tuple(signal.shape[-axes:])
    step = 1 << levels
    out = signal
    for ax in range(-axes, 0):
        n = out.shape[ax]
        target = -(-n // step) * step
        if target == n:
            continue
        if n == 1:
            idx = np.zeros(target, dtype=np.intp)
        else:
            period = 2 * n - 2
            m = np.remainder(np.arange(target), period)
            idx = np.where(m < n, m, period - m)
        out = np.take(out, idx, axis=ax)
    return out, original


def crop_to(signal: np.ndarray, extents: tuple[int, ...]) -> np.ndarray:
    """Undo :func:`pad_to_divisible` given the recorded original extents."""
    slices = (Ellipsis,) + tuple(slice(0, e) for e in extents)
    return signal[slices]


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """A directory of signals with a seeded train/held-out file split.

    Signals are loaded lazily and cached; patches are sampled uniformly over
    (file, offset) with a caller-supplied generator so runs are repeatable.
    """

    directory: Path
    kind: str  # "image" | "audio"
    holdout_fraction: float = 0.15
    seed: int = 0
    train_paths: list[Path] = field(init=False)
    holdout_paths: list[Path] = field(init=False)
    _cache: dict[Path, np.ndarray] = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        self.directory = Path(self.directory)
        if self.kind not in ("image", "audio"):
            raise ValueError("kind must be 'image' or 'audio'")
        suffixes = _IMAGE_SUFFIXES if self.kind == "image" else _AUDIO_SUFFIXES
        paths = sorted(
            p for p in self.directory.iterdir() if p.suffix.lower() in suffixes
        )
        if not paths:
            raise FileFormatError(
                f"no {'/'.join(suffixes)} files found in {self.directory}"
            )
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(paths))
        if self.holdout_fraction <= 0 or len(paths) < 2:
            n_hold = 0
        else:
            n_hold = int(round(len(paths) * self.holdout_fraction))
            n_hold = min(max(n_hold, 1), len(paths) - 1)
        self.holdout_paths = [paths[i] for i in order[:n_hold]]
        self.train_paths = [paths[i] for i in order[n_hold:]]

    def _signal(self, path: Path) -> np.ndarray:
        if path not in self._cache:
            self._cache[path] = load_signal(path, self.kind)
        return self._cache[path]

    def sample_patches(
        self, split: str, patch_extents: tuple[int, ...], count: int, seed: int = 0
    ) -> np.ndarray:
        """Draw ``count`` random crops from the given split ("train"/"holdout")."""
        paths = self.train_paths if split == "train" else self.holdout_paths
        if not paths:
            raise ValueError(f"split {split!r} is empty")
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(count):
            signal = self._signal(paths[int(rng.integers(len(paths)))])
            extents = signal.shape[1:]
            if any(p > e for p, e in zip(patch_extents, extents)):
                raise ValueError(
                    f"patch {patch_extents} larger than signal extents {extents}"
                )
            offsets = tuple(
                int(rng.integers(e - p + 1)) for p, e in zip(patch_extents, extents)
            )
            sl = (slice(None),) + tuple(
                slice(o, o + p) for o, p in zip(offsets, patch_extents)
            )
            out.append(signal[sl])
        return np.stack(out)
