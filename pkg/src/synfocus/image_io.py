"""Grayscale image file I/O: 32-bit float PFM and 8/16-bit binary PGM.

PFM files are single channel ('Pf'), scale factor -1.0 (little endian),
scanlines stored bottom to top as usual for the format. PGM files are the
binary 'P5' flavor; maxval 255 is one byte per pixel, 65535 two bytes in
big-endian order. Validity masks are stored as 8-bit PGM with 0 = invalid
and 255 = valid.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import ImageRaster


def _read_token(f) -> bytes:
    """Next whitespace-delimited header token, skipping '#' comments."""
    token = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise ValueError("unexpected end of header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if token:
                return token
            continue
        token += c


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM file into a float32 (H, W) array."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            raise ValueError(f"{path}: color PFM is not supported")
        if magic != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(f.read(width * height * 4), dtype=endian + "f4")
        if data.size != width * height:
            raise ValueError(f"{path}: truncated PFM payload")
    return np.flipud(data.reshape(height, width)).copy()


def write_pfm(path, image: np.ndarray) -> None:
    """Write a (H, W) array as little-endian grayscale PFM, scale -1.0."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(image).astype("<f4").tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM into a uint8 or uint16 (H, W) array."""
    with open(path, "rb") as f:
        if _read_token(f) != b"P5":
            raise ValueError(f"{path}: not a binary PGM file")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if not 0 < maxval < 65536:
            raise ValueError(f"{path}: invalid maxval {maxval}")
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        data = np.frombuffer(f.read(width * height * dtype.itemsize), dtype=dtype)
        if data.size != width * height:
            raise ValueError(f"{path}: truncated PGM payload")
    return data.reshape(height, width).astype(dtype.newbyteorder("=")).copy()


def write_pgm(path, image: np.ndarray, maxval: int | None = None) -> None:
    """Write a uint8/uint16 (H, W) array as binary PGM."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM writer expects a 2-D array")
    if image.dtype == np.uint8:
        maxval = 255 if maxval is None else maxval
        payload = image.tobytes()
    elif image.dtype == np.uint16:
        maxval = 65535 if maxval is None else maxval
        payload = image.astype(">u2").tobytes()
    else:
        raise ValueError("PGM writer expects uint8 or uint16 samples")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(payload)


def write_mask(path, mask: np.ndarray) -> None:
    """Store a boolean mask as 8-bit PGM (0 invalid, 255 valid)."""
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask(path) -> np.ndarray:
    return read_pgm(path) > 0


def preview_u8(raster: ImageRaster) -> np.ndarray:
    """Linear min-max 8-bit rendering over the valid region; invalid -> 0."""
    out = np.zeros(raster.shape, dtype=np.uint8)
    mask = raster.valid_mask
    if not mask.any():
        return out
    values = raster.samples[mask]
    lo = float(values.min())
    hi = float(values.max())
    if hi > lo:
        scaled = np.clip(np.rint((raster.samples - lo) / (hi - lo) * 255.0), 0, 255)
    else:
        scaled = np.zeros(raster.shape)
    out[mask] = scaled[mask].astype(np.uint8)
    return out


def _mask_path(path: Path) -> Path:
    return path.with_name(path.stem + "_mask.pgm")


def load_raster(path) -> ImageRaster:
    """Load a PFM or PGM image as an ImageRaster.

    A sidecar '<stem>_mask.pgm' file, when present, supplies the validity
    mask; otherwise every finite pixel is valid.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        samples = read_pfm(path).astype(float)
    elif suffix == ".pgm":
        samples = read_pgm(path).astype(float)
    else:
        raise ValueError(f"{path}: unsupported image format {suffix!r}")
    mask_file = _mask_path(path)
    mask = read_mask(mask_file) if mask_file.exists() else None
    return ImageRaster.from_array(samples, mask)


def save_raster(path, raster: ImageRaster, with_mask: bool = True) -> None:
    """Write a raster as PFM; invalid pixels become 0 and go to a mask sidecar."""
    path = Path(path)
    write_pfm(path, np.where(raster.valid_mask, raster.samples, 0.0))
    if with_mask and not raster.valid_mask.all():
        write_mask(_mask_path(path), raster.valid_mask)
