"""File formats: frame directories, scribble/mask PNGs, region maps,
energy seed files.

Scribble PNGs use a canonical encoder (fixed chunk layout, zlib stream
hand-assembled from stored blocks) so that any two implementations of it
produce identical bytes for identical pixels; the browser client mirrors
it, which is what makes upload/fetch round trips bit-identical.
"""

from __future__ import annotations

import io as _stdio
import re
import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from .core import SCRIBBLE_BG, SCRIBBLE_FG, SCRIBBLE_NONE, FrameSequence
from .overseg import RegionMap
from .core import BinaryField, UnaryField

FRAME_PATTERN = re.compile(r"^frame_(\d{5})\.png$")


def load_sequence(directory) -> FrameSequence:
    """Read frame_%05d.png files (zero-based, contiguous) into a sequence."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    indexed = {}
    for entry in directory.iterdir():
        m = FRAME_PATTERN.match(entry.name)
        if m:
            indexed[int(m.group(1))] = entry
    if not indexed:
        raise FileNotFoundError(f"no frame_%05d.png files in {directory}")
    count = len(indexed)
    if sorted(indexed) != list(range(count)):
        raise ValueError("frame indices must be contiguous from 00000")
    frames = []
    shape = None
    for i in range(count):
        with Image.open(indexed[i]) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValueError(f"mixed dimensions: {indexed[i].name} is {arr.shape[:2]}, expected {shape[:2]}")
        frames.append(arr)
    return FrameSequence(np.stack(frames))


def save_frame(path, frame: np.ndarray) -> None:
    arr = np.clip(np.asarray(frame), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_sequence(directory, seq: FrameSequence) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(seq.count):
        save_frame(directory / f"frame_{t:05d}.png", seq[t])


_SCRIBBLE_VALUES = {SCRIBBLE_NONE, SCRIBBLE_BG, SCRIBBLE_FG}


def decode_gray_png(data: bytes) -> np.ndarray:
    with Image.open(_stdio.BytesIO(data)) as img:
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.uint8).copy()


def encode_gray_png(arr: np.ndarray) -> bytes:
    """Canonical 8-bit grayscale PNG: IHDR + single IDAT + IEND, rows with
    filter 0, zlib stream assembled from stored (uncompressed) blocks of at
    most 65535 bytes.  Deterministic across platforms and languages."""
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D grayscale array")
    h, w = arr.shape
    raw = b"".join(b"\x00" + arr[y].tobytes() for y in range(h))

    pieces = [b"\x78\x01"]
    for off in range(0, len(raw), 65535):
        chunk = raw[off : off + 65535]
        final = 1 if off + 65535 >= len(raw) else 0
        n = len(chunk)
        pieces.append(bytes([final, n & 0xFF, n >> 8, (n & 0xFF) ^ 0xFF, (n >> 8) ^ 0xFF]))
        pieces.append(chunk)
    pieces.append(struct.pack(">I", zlib.adler32(raw) & 0xFFFFFFFF))
    idat = b"".join(pieces)

    def chunk(tag: bytes, body: bytes) -> bytes:
        return struct.pack(">I", len(body)) + tag + body + struct.pack(
            ">I", zlib.crc32(tag + body) & 0xFFFFFFFF
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", idat) + chunk(b"IEND", b"")


def load_scribbles(path) -> np.ndarray:
    data = Path(path).read_bytes()
    return parse_scribbles(data)


def parse_scribbles(data: bytes) -> np.ndarray:
    arr = decode_gray_png(data)
    bad = set(np.unique(arr)) - _SCRIBBLE_VALUES
    if bad:
        raise ValueError(f"scribble PNG contains invalid values {sorted(bad)}; allowed: 0, 128, 255")
    return arr


def save_scribbles(path, mask: np.ndarray) -> None:
    bad = set(np.unique(np.asarray(mask, dtype=np.uint8))) - _SCRIBBLE_VALUES
    if bad:
        raise ValueError(f"invalid scribble values {sorted(bad)}")
    Path(path).write_bytes(encode_gray_png(mask))


def load_mask(path) -> np.ndarray:
    arr = decode_gray_png(Path(path).read_bytes())
    bad = set(np.unique(arr)) - {0, 255}
    if bad:
        raise ValueError(f"mask PNG contains invalid values {sorted(bad)}; allowed: 0, 255")
    return arr


def save_mask(path, mask: np.ndarray) -> None:
    arr = np.asarray(mask)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Path(path).write_bytes(encode_gray_png(arr.astype(np.uint8)))


def save_region_map(path, rmap: RegionMap) -> None:
    if rmap.region_count > 65535:
        raise ValueError("region map serialization limited to 65535 regions")
    arr = rmap.ids.astype(np.uint16)
    Image.fromarray(arr, mode="I;16").save(path)


def load_region_map(path) -> RegionMap:
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.int32)
    return RegionMap.from_ids(arr)


def save_energy_file(path, unary: UnaryField, binary: BinaryField) -> None:
    lines = ["ENERGY v1", f"regions {unary.node_count} edges {binary.pair_count}"]
    for i in range(unary.node_count):
        lines.append(f"{i} {unary.cost_fg[i]:.17g} {unary.cost_bg[i]:.17g}")
    for e in range(binary.pair_count):
        i, j = binary.pairs[e]
        lines.append(f"{i} {j} {binary.w_fwd[e]:.17g} {binary.w_bwd[e]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_energy_file(path) -> tuple[UnaryField, BinaryField]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "ENERGY v1":
        raise ValueError("not an energy file (missing 'ENERGY v1' header)")
    head = lines[1].split()
    if len(head) != 4 or head[0] != "regions" or head[2] != "edges":
        raise ValueError("malformed energy file header line")
    n, m = int(head[1]), int(head[3])
    if len(lines) != 2 + n + m:
        raise ValueError(f"energy file should have {2 + n + m} lines, found {len(lines)}")
    cost_fg = np.empty(n)
    cost_bg = np.empty(n)
    seen = np.zeros(n, dtype=bool)
    for ln in lines[2 : 2 + n]:
        parts = ln.split()
        i = int(parts[0])
        cost_fg[i] = float(parts[1])
        cost_bg[i] = float(parts[2])
        seen[i] = True
    if not seen.all():
        raise ValueError("energy file is missing region entries")
    pairs = np.empty((m, 2), dtype=np.int64)
    w_fwd = np.empty(m)
    w_bwd = np.empty(m)
    for e, ln in enumerate(lines[2 + n :]):
        parts = ln.split()
        i, j = int(parts[0]), int(parts[1])
        if i > j:
            i, j = j, i
            parts[2], parts[3] = parts[3], parts[2]
        pairs[e] = (i, j)
        w_fwd[e] = float(parts[2])
        w_bwd[e] = float(parts[3])
    return UnaryField(cost_fg, cost_bg), BinaryField(pairs, w_fwd, w_bwd)
