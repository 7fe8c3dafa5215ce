"""Dense 2D field containers, raster I/O, derivatives, sampling and smoothing.

Arrays are indexed ``[row, column]`` = ``[y, x]``; points are ``(x, y)`` in
pixel units with pixel centres at integer coordinates.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DecodeError, ParameterError

__all__ = [
    "ScalarField",
    "VectorField",
    "LabelMap",
    "load_image",
    "save_image",
    "load_labels",
    "save_labels",
    "read_ctf",
    "write_ctf",
    "central_gradient",
    "bilinear_sample",
    "gaussian_smooth",
]


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real value per pixel, shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if not (isinstance(v, np.ndarray) and v.dtype == np.float64 and not v.flags.writeable):
            v = _frozen(v)
            object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ParameterError(f"scalar field must be 2D with both sides >= 2, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ParameterError("scalar field contains non-finite values")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two real components per pixel, stored stacked as ``data[0] = u`` (x), ``data[1] = v`` (y)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not (isinstance(d, np.ndarray) and d.dtype == np.float64 and not d.flags.writeable):
            d = _frozen(d)
            object.__setattr__(self, "data", d)
        if d.ndim != 3 or d.shape[0] != 2 or d.shape[1] < 2 or d.shape[2] < 2:
            raise ParameterError(f"vector field must have shape (2, h, w) with h, w >= 2, got {d.shape}")
        if not np.isfinite(d).all():
            raise ParameterError("vector field contains non-finite values")

    @classmethod
    def from_components(cls, u, v) -> VectorField:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if u.shape != v.shape:
            raise ParameterError(f"component shapes differ: {u.shape} vs {v.shape}")
        return cls(np.stack([u, v]))

    @classmethod
    def zeros(cls, height: int, width: int) -> VectorField:
        return cls(np.zeros((2, height, width)))

    @property
    def u(self) -> np.ndarray:
        return self.data[0]

    @property
    def v(self) -> np.ndarray:
        return self.data[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.data[0], self.data[1])


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer class per pixel with values in ``{0, ..., n_classes - 1}``."""

    labels: np.ndarray
    n_classes: int | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 2 or lab.shape[1] < 2:
            raise ParameterError(f"label map must be 2D with both sides >= 2, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.array_equal(lab, np.round(lab)):
                raise ParameterError("label map values must be integers")
        lab = _frozen(lab, dtype=np.int32)
        if lab.min() < 0:
            raise ParameterError("label values must be non-negative")
        k = int(lab.max()) + 1 if self.n_classes is None else int(self.n_classes)
        if lab.max() >= k:
            raise ParameterError(f"label {int(lab.max())} outside declared set of {k} classes")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "n_classes", k)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label


# ---------------------------------------------------------------------------
# raster I/O


def _read_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _decode_pgm(buf: bytes, path) -> tuple[np.ndarray, int]:
    magic, pos = _read_pnm_token(buf, 0)
    if magic != b"P5":
        raise DecodeError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        w_tok, pos = _read_pnm_token(buf, pos)
        h_tok, pos = _read_pnm_token(buf, pos)
        m_tok, pos = _read_pnm_token(buf, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(m_tok)
    except ValueError as exc:
        raise DecodeError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise DecodeError(f"{path}: zero-sized image ({width}x{height})")
    if not 0 < maxval < 65536:
        raise DecodeError(f"{path}: invalid maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    data = np.frombuffer(buf, dtype=dtype, count=min(count, (len(buf) - pos) // dtype.itemsize), offset=pos)
    if data.size != count:
        raise DecodeError(f"{path}: truncated pixel data ({data.size} of {count} samples)")
    return data.reshape(height, width), maxval


def _read_raster(path) -> tuple[np.ndarray, int]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read file ({exc.strerror or exc})") from exc
    if buf[:2] == b"P5":
        return _decode_pgm(buf, path)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(path) as im:
                im.load()
                if im.mode in ("I;16", "I;16B", "I"):
                    arr, maxval = np.asarray(im, dtype=np.int64), 65535
                elif im.mode == "L":
                    arr, maxval = np.asarray(im), 255
                else:
                    raise DecodeError(f"{path}: PNG mode {im.mode} is not grayscale")
        except DecodeError:
            raise
        except Exception as exc:
            raise DecodeError(f"{path}: cannot decode PNG ({exc})") from exc
        if arr.size == 0:
            raise DecodeError(f"{path}: zero-sized image")
        return arr, maxval
    raise DecodeError(f"{path}: unsupported raster format")


def load_image(path) -> ScalarField:
    """Read an 8/16-bit binary PGM or grayscale PNG, normalized to ``[0, 1]``."""
    arr, maxval = _read_raster(path)
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise DecodeError(f"{path}: image {arr.shape[1]}x{arr.shape[0]} is smaller than 2x2")
    return ScalarField(arr.astype(np.float64) / maxval)


def _encode_pgm(arr: np.ndarray, maxval: int) -> bytes:
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(arr, dtype=dtype).tobytes()


def save_image(field, path, bits: int = 8) -> None:
    """Write a field (clipped to ``[0, 1]``) as binary PGM with 8 or 16 bits."""
    if bits not in (8, 16):
        raise ParameterError("bits must be 8 or 16")
    values = field.values if isinstance(field, ScalarField) else np.asarray(field, dtype=np.float64)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(values, 0.0, 1.0) * maxval)
    Path(path).write_bytes(_encode_pgm(q, maxval))


def load_labels(path, n_classes: int | None = None) -> LabelMap:
    arr, _ = _read_raster(path)
    return LabelMap(arr.astype(np.int32), n_classes)


def save_labels(labels: LabelMap, path) -> None:
    if labels.labels.max() > 255:
        raise ParameterError("8-bit label PGM holds at most 256 classes")
    Path(path).write_bytes(_encode_pgm(labels.labels, 255))


# ---------------------------------------------------------------------------
# CTF1 field dumps: b"CTF1", u32 width, u32 height, u32 components, then
# little-endian float32 samples, component-planar, row-major.

_CTF_HEADER = struct.Struct("<4sIII")


def write_ctf(field, path) -> None:
    if isinstance(field, ScalarField):
        data = field.values[None]
    elif isinstance(field, VectorField):
        data = field.data
    else:
        data = np.asarray(field, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
    c, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(_CTF_HEADER.pack(b"CTF1", w, h, c))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_ctf(path) -> np.ndarray:
    """Return the raw ``(components, height, width)`` float64 array of a CTF1 file."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read file ({exc.strerror or exc})") from exc
    if len(buf) < _CTF_HEADER.size:
        raise DecodeError(f"{path}: truncated CTF1 header")
    magic, w, h, c = _CTF_HEADER.unpack_from(buf)
    if magic != b"CTF1":
        raise DecodeError(f"{path}: bad magic {magic!r}")
    n = w * h * c
    if n == 0 or len(buf) != _CTF_HEADER.size + 4 * n:
        raise DecodeError(f"{path}: payload size does not match {c}x{h}x{w} header")
    return np.frombuffer(buf, dtype="<f4", offset=_CTF_HEADER.size).reshape(c, h, w).astype(np.float64)


def read_scalar(path) -> ScalarField:
    data = read_ctf(path)
    if data.shape[0] != 1:
        raise DecodeError(f"{path}: expected 1 component, found {data.shape[0]}")
    return ScalarField(data[0])


def read_vector(path) -> VectorField:
    data = read_ctf(path)
    if data.shape[0] != 2:
        raise DecodeError(f"{path}: expected 2 components, found {data.shape[0]}")
    return VectorField(data)


# ---------------------------------------------------------------------------
# numerics


def central_gradient(f: ScalarField) -> VectorField:
    """Central differences inside, one-sided first differences on the border."""
    v = f.values
    return VectorField(np.stack([np.gradient(v, axis=1), np.gradient(v, axis=0)]))


def sample_array(values: np.ndarray, x, y):
    """Bilinear interpolation of ``values`` at (possibly array-valued) ``x, y``; clamps to the grid."""
    h, w = values.shape
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2)
    fx = x - x0
    fy = y - y0
    top = (1.0 - fx) * values[y0, x0] + fx * values[y0, x0 + 1]
    bottom = (1.0 - fx) * values[y0 + 1, x0] + fx * values[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bottom


def bilinear_sample(f: ScalarField, p) -> float:
    x, y = p
    return float(sample_array(f.values, x, y))


def _gaussian_taps(sigma: float) -> np.ndarray:
    r = math.ceil(3.0 * sigma)
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def _blur(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    a = ndimage.correlate1d(a, taps, axis=0, mode="constant", cval=0.0)
    return ndimage.correlate1d(a, taps, axis=1, mode="constant", cval=0.0)


def _smooth_region(values: np.ndarray, region: np.ndarray, taps: np.ndarray) -> np.ndarray:
    m = region.astype(np.float64)
    num = _blur(values * m, taps)
    den = _blur(m, taps)
    out = num[region] / den[region]
    # renormalized convolution shifts the region mean slightly near its edges
    return out + (values[region].mean() - out.mean())


def gaussian_smooth(f: ScalarField, sigma: float, mask: LabelMap | None = None,
                    class_id: int | None = None) -> ScalarField:
    """Gaussian smoothing, optionally confined to label classes.

    With ``mask``, each class (or only ``class_id``) is smoothed using kernel
    weights renormalized over same-class pixels, so values never leak across
    class boundaries; pixels of other classes are returned untouched. The
    kernel is truncated at radius ``ceil(3 sigma)`` and at the domain border.
    A per-class constant is reproduced exactly and each class mean is conserved.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return f
    values = f.values
    taps = _gaussian_taps(sigma)
    if mask is None:
        return ScalarField(_smooth_whole(values, taps))
    if mask.shape != values.shape:
        raise ParameterError(f"mask shape {mask.shape} does not match field shape {values.shape}")
    out = values.copy()
    classes = [class_id] if class_id is not None else np.unique(mask.labels)
    for c in classes:
        region = mask.labels == c
        if region.any():
            out[region] = _smooth_region(values, region, taps)
    return ScalarField(out)


def _smooth_whole(values, taps):
    full = np.ones(values.shape, dtype=bool)
    out = np.empty_like(values)
    out[full] = _smooth_region(values, full, taps)
    return out
