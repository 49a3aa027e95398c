"""File formats: images, raw tensor dumps, key-value configs, checkpoints.

Checkpoint layout (one file)::

    MSDEBLUR-CHECKPOINT 1
    <key> = <value>              # spec, config and scalar state
    ...
    @array <name> <d0>x<d1>... <offset>
    ...
    END
    <raw little-endian float64 data, concatenated>

Offsets count float64 elements from the start of the data block.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

CHECKPOINT_MAGIC = "MSDEBLUR-CHECKPOINT 1"
IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".ppm"}


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# images


def read_image(path) -> np.ndarray:
    """8-bit RGB file -> (3, H, W) float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, img: np.ndarray) -> None:
    """(3, H, W) in [0, 1] -> lossless 8-bit PNG; rounding to nearest level."""
    path = Path(path)
    if path.suffix.lower() not in {".png", ".bmp", ".tif", ".tiff", ".ppm"}:
        raise ValueError(f"refusing to write lossy format {path.suffix!r}; use .png")
    # fixed PNG settings keep output bytes reproducible
    Image.fromarray(to_uint8(img).transpose(1, 2, 0), mode="RGB").save(path, optimize=False, compress_level=6)


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# ---------------------------------------------------------------------------
# raw tensors


def save_tensor(path, x: np.ndarray) -> None:
    """4 little-endian int64 shape entries, then float64 data in C order."""
    x = np.asarray(x, dtype="<f8")
    if x.ndim > 4:
        raise ValueError(f"tensor rank {x.ndim} > 4")
    shape = (1,) * (4 - x.ndim) + x.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4q", *shape))
        f.write(np.ascontiguousarray(x).tobytes())


def load_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    shape = struct.unpack("<4q", data[:32])
    arr = np.frombuffer(data, dtype="<f8", offset=32)
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{path}: header shape {shape} does not match {arr.size} values")
    return arr.reshape(shape).astype(np.float64)


# ---------------------------------------------------------------------------
# key-value text


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return str(v)


def parse_value(text: str, like):
    """Parse ``text`` to the type of ``like``."""
    text = text.strip()
    if isinstance(like, bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if isinstance(like, int):
        return int(float(text)) if "e" in text.lower() else int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, (list, tuple)):
        return json.loads(text)
    return text


def read_kv(path_or_text, is_text: bool = False) -> dict[str, str]:
    text = path_or_text if is_text else Path(path_or_text).read_text()
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def format_kv(d: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in d.items())


# ---------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, header: dict[str, object], arrays: dict[str, np.ndarray]) -> None:
    lines = [CHECKPOINT_MAGIC]
    for k, v in header.items():
        if "\n" in format_value(v) or k.startswith("@"):
            raise CheckpointError(f"header entry {k!r} cannot be serialized on one line")
        lines.append(f"{k} = {format_value(v)}")
    offset = 0
    for name, arr in arrays.items():
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"@array {name} {shape} {offset}")
        offset += arr.size
    lines.append("END")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())
        for arr in arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    marker = b"\nEND\n"
    end = data.find(marker)
    if not data.startswith(CHECKPOINT_MAGIC.encode()) or end < 0:
        raise CheckpointError(f"{path}: not a checkpoint file")
    header_lines = data[:end].decode().splitlines()[1:]
    raw = data[end + len(marker):]
    if len(raw) % 8:
        raise CheckpointError(f"{path}: data block is truncated")
    blob = np.frombuffer(raw, dtype="<f8")
    header, arrays = {}, {}
    for line in header_lines:
        if line.startswith("@array "):
            try:
                _, name, shape_s, off_s = line.split(" ")
                shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split("x"))
                off = int(off_s)
            except ValueError as e:
                raise CheckpointError(f"{path}: bad manifest line {line!r}") from e
            size = int(np.prod(shape))
            if off + size > blob.size:
                raise CheckpointError(f"{path}: array {name} runs past the end of the data")
            arrays[name] = blob[off : off + size].reshape(shape).copy()
        else:
            k, sep, v = line.partition(" = ")
            if not sep:
                raise CheckpointError(f"{path}: bad header line {line!r}")
            header[k] = v
    return header, arrays
