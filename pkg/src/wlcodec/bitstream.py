"""Lossless entropy coding of quantized latents and the .wllc container.

The entropy stage is an order-0 range-variant asymmetric numeral system
(rANS) with one static 12-bit frequency table per latent channel. Symbols
are the signed 8-bit latent values stored offset-binary (value + 128).

Container layout (all integers little-endian, floats IEEE-754 binary32):

    offset  field
    0       magic "WLLC"
    4       version        u8  (currently 1)
    5       kind           u8  (1 = 1D, 2 = 2D)
    6       levels (J)     u8
    7       C_x            u16
    9       C_z            u16
    11      original extents, u32 per signal axis (pre-padding)
    ..      padded extents,   u32 per signal axis
    ..      companding scales, f32 * C_z
    ..      frequency tables,  u16 * 256 per channel (counts sum to 4096)
    ..      per channel: payload length u32, then the rANS byte string

Each rANS byte string starts with the final 32-bit encoder state; decoding
consumes the remaining bytes forward and must end exactly at the encoder's
initial state, which catches truncated or corrupt payloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TABLE_TOTAL",
    "BitstreamError",
    "CodingError",
    "DecodeError",
    "FormatError",
    "ContainerMeta",
    "build_freq_table",
    "rans_encode",
    "rans_decode",
    "write_container",
    "read_container",
    "original_byte_size",
]

PRECISION_BITS = 12
TABLE_TOTAL = 1 << PRECISION_BITS  # 4096
_RANS_LOW = 1 << 23
_MAGIC = b"WLLC"
_VERSION = 1


class BitstreamError(ValueError):
    pass


class CodingError(BitstreamError):
    """A symbol cannot be coded with the given table."""


class DecodeError(BitstreamError):
    """Payload bytes are truncated or inconsistent."""


class FormatError(BitstreamError):
    """Container structure is malformed; message carries the byte offset."""


def build_freq_table(symbols: np.ndarray) -> np.ndarray:
    """Quantized symbol frequencies: proportional to empirical counts, floor 1
    for every present symbol, renormalized to sum exactly 4096.

    ``symbols`` are signed 8-bit values; the returned table has 256 uint16
    entries indexed by value + 128.
    """
    symbols = np.asarray(symbols)
    if symbols.size == 0:
        raise CodingError("cannot build a frequency table from an empty sequence")
    u = _to_unsigned(symbols)
    counts = np.bincount(u, minlength=256).astype(np.int64)
    raw = counts * (TABLE_TOTAL / symbols.size)
    freq = np.round(raw).astype(np.int64)
    freq[(counts > 0) & (freq == 0)] = 1
    freq[counts == 0] = 0
    # repair rounding drift one unit at a time, always touching the largest
    # entry so the relative distortion stays smallest
    diff = TABLE_TOTAL - int(freq.sum())
    while diff > 0:
        freq[int(np.argmax(freq))] += 1
        diff -= 1
    while diff < 0:
        candidates = np.where(freq > 1, freq, -1)
        freq[int(np.argmax(candidates))] -= 1
        diff += 1
    return freq.astype(np.uint16)


def _to_unsigned(symbols: np.ndarray) -> np.ndarray:
    s = np.asarray(symbols)
    if s.dtype != np.int8:
        if np.any(s < -128) or np.any(s > 127):
            raise CodingError("symbols must fit in signed 8 bits")
        s = s.astype(np.int8)
    return s.astype(np.int16) + 128


def rans_encode(symbols: np.ndarray, table: np.ndarray) -> bytes:
    """Encode signed-8-bit symbols against a frequency table.

    Deterministic; raises :class:`CodingError` if any symbol has zero count.
    """
    table = np.asarray(table, dtype=np.int64)
    if table.shape != (256,) or int(table.sum()) != TABLE_TOTAL:
        raise CodingError("frequency table must have 256 counts summing to 4096")
    u = _to_unsigned(symbols)
    if u.size and np.any(table[u] == 0):
        bad = int(np.asarray(symbols).ravel()[np.argmax(table[u] == 0)])
        raise CodingError(f"symbol {bad} has zero frequency in the table")
    freq = table.tolist()
    cum = np.concatenate([[0], np.cumsum(table)[:-1]]).tolist()
    state = _RANS_LOW
    emitted = bytearray()
    append = emitted.append
    shift = _RANS_LOW >> PRECISION_BITS << 8
    for s in u.ravel()[::-1].tolist():
        f = freq[s]
        x_max = shift * f
        while state >= x_max:
            append(state & 0xFF)
            state >>= 8
        state = ((state // f) << PRECISION_BITS) + (state % f) + cum[s]
    return struct.pack("<I", state) + bytes(reversed(emitted))


def rans_decode(data: bytes, table: np.ndarray, n: int) -> np.ndarray:
    """Recover exactly ``n`` signed-8-bit symbols; bit-exact inverse of
    :func:`rans_encode` with the same table.

    Truncated or corrupt payloads raise :class:`DecodeError` -- the decoder
    must finish at the encoder's initial state having consumed every byte.
    """
    table = np.asarray(table, dtype=np.int64)
    if table.shape != (256,) or int(table.sum()) != TABLE_TOTAL:
        raise CodingError("frequency table must have 256 counts summing to 4096")
    if len(data) < 4:
        raise DecodeError("payload shorter than the 4-byte state header")
    (state,) = struct.unpack_from("<I", data, 0)
    freq = table.tolist()
    cum = np.concatenate([[0], np.cumsum(table)[:-1]]).tolist()
    slot_to_symbol = np.repeat(np.arange(256), table).tolist()
    out = np.empty(n, dtype=np.uint8)
    pos = 4
    total = len(data)
    mask = TABLE_TOTAL - 1
    for i in range(n):
        slot = state & mask
        s = slot_to_symbol[slot]
        out[i] = s
        state = freq[s] * (state >> PRECISION_BITS) + slot - cum[s]
        while state < _RANS_LOW:
            if pos >= total:
                raise DecodeError(f"truncated payload: ran out of bytes at symbol {i}")
            state = (state << 8) | data[pos]
            pos += 1
    if state != _RANS_LOW:
        raise DecodeError("corrupt payload: final decoder state mismatch")
    if pos != total:
        raise DecodeError(f"corrupt payload: {total - pos} unconsumed trailing bytes")
    return (out.astype(np.int16) - 128).astype(np.int8)


@dataclass(frozen=True)
class ContainerMeta:
    """Signal-side facts a decoder needs: geometry before and after padding."""

    kind: str  # "1d" | "2d"
    levels: int
    c_x: int
    original_extents: tuple[int, ...]
    padded_extents: tuple[int, ...]

    def __post_init__(self):
        axes = 1 if self.kind == "1d" else 2
        if self.kind not in ("1d", "2d"):
            raise ValueError(f"kind must be '1d' or '2d', got {self.kind!r}")
        if len(self.original_extents) != axes or len(self.padded_extents) != axes:
            raise ValueError("extent tuples must have one entry per signal axis")

    @property
    def axes(self) -> int:
        return 1 if self.kind == "1d" else 2


def original_byte_size(meta: ContainerMeta) -> int:
    """Uncompressed size used for compression-ratio reporting: 8 bits per
    sample for images, 16 bits per sample for audio."""
    samples = meta.c_x * int(np.prod(meta.original_extents))
    return samples * (2 if meta.kind == "1d" else 1)


def write_container(q: np.ndarray, meta: ContainerMeta, sigma: np.ndarray) -> bytes:
    """Serialize a quantized latent to the .wllc byte format."""
    q = np.asarray(q)
    if q.dtype != np.int8:
        raise CodingError("quantized latent must be int8")
    if q.ndim != meta.axes + 1:
        raise CodingError(
            f"latent must be (C_z, *spatial) with {meta.axes} spatial axes"
        )
    expected_spatial = tuple(e >> meta.levels for e in meta.padded_extents)
    if q.shape[1:] != expected_spatial:
        raise CodingError(
            f"latent spatial shape {q.shape[1:]} does not match padded extents "
            f"{meta.padded_extents} at {meta.levels} levels"
        )
    sigma = np.asarray(sigma, dtype=np.float32)
    c_z = q.shape[0]
    if sigma.shape != (c_z,):
        raise CodingError("sigma must hold one scale per latent channel")
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<BBB", _VERSION, 1 if meta.kind == "1d" else 2, meta.levels)
    blob += struct.pack("<HH", meta.c_x, c_z)
    for extent in meta.original_extents:
        blob += struct.pack("<I", extent)
    for extent in meta.padded_extents:
        blob += struct.pack("<I", extent)
    blob += sigma.astype("<f4").tobytes()
    tables = []
    for c in range(c_z):
        table = build_freq_table(q[c].ravel())
        tables.append(table)
        blob += table.astype("<u2").tobytes()
    for c in range(c_z):
        payload = rans_encode(q[c].ravel(), tables[c])
        blob += struct.pack("<I", len(payload))
        blob += payload
    return bytes(blob)


def read_container(data: bytes) -> tuple[np.ndarray, ContainerMeta, np.ndarray]:
    """Parse a .wllc byte string back to (quantized latent, meta, sigma).

    Never reads past declared lengths; malformed structure raises
    :class:`FormatError` with the failing byte offset.
    """
    def need(count: int, off: int, what: str) -> None:
        if off + count > len(data):
            raise FormatError(f"truncated container: need {what} at offset {off}")

    need(4, 0, "magic")
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic {data[:4]!r} at offset 0")
    need(3, 4, "version/kind/levels")
    version, kind_u8, levels = data[4], data[5], data[6]
    if version != _VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if kind_u8 not in (1, 2):
        raise FormatError(f"bad kind byte {kind_u8} at offset 5")
    kind = "1d" if kind_u8 == 1 else "2d"
    axes = kind_u8
    off = 7
    need(4, off, "channel counts")
    c_x, c_z = struct.unpack_from("<HH", data, off)
    off += 4
    need(8 * axes, off, "extents")
    original = struct.unpack_from(f"<{axes}I", data, off)
    off += 4 * axes
    padded = struct.unpack_from(f"<{axes}I", data, off)
    off += 4 * axes
    for name, extents in (("original", original), ("padded", padded)):
        if any(e == 0 for e in extents):
            raise FormatError(f"zero {name} extent at offset {off - 8 * axes}")
    if any(p % (1 << levels) for p in padded):
        raise FormatError(f"padded extents {padded} not divisible by 2^{levels}")
    need(4 * c_z, off, "companding scales")
    sigma = np.frombuffer(data, dtype="<f4", count=c_z, offset=off).copy()
    off += 4 * c_z
    tables = []
    for c in range(c_z):
        need(512, off, f"frequency table for channel {c}")
        table = np.frombuffer(data, dtype="<u2", count=256, offset=off).copy()
        if int(table.sum()) != TABLE_TOTAL:
            raise FormatError(
                f"frequency table for channel {c} sums to {int(table.sum())} "
                f"(expected {TABLE_TOTAL}) at offset {off}"
            )
        tables.append(table)
        off += 512
    spatial = tuple(p >> levels for p in padded)
    per_channel = int(np.prod(spatial))
    channels = []
    for c in range(c_z):
        need(4, off, f"payload length for channel {c}")
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        need(length, off, f"payload for channel {c}")
        payload = data[off : off + length]
        off += length
        try:
            channels.append(rans_decode(payload, tables[c], per_channel))
        except DecodeError as exc:
            raise FormatError(f"channel {c} payload: {exc}") from exc
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes at offset {off}")
    q = np.stack(channels).reshape((c_z,) + spatial)
    meta = ContainerMeta(kind, levels, c_x, tuple(original), tuple(padded))
    return q, meta, sigma
