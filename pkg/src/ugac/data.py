"""Image sets, file formats, flip augmentation and a synthetic two-domain shapes dataset.

Images are float64 arrays shaped (C, H, W) with values in [0, 1]; a set of them
is stacked as (N, C, H, W).

Raw tensor files (``.rt``) hold one array losslessly::

    b"UGRT" | u8 version | u8 dtype tag | u8 ndim | ndim x u64 shape | little-endian payload
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

RT_MAGIC = b"UGRT"
RT_VERSION = 1
_RT_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4"), 3: np.dtype("u1")}
_RT_TAGS = {v: k for k, v in _RT_DTYPES.items()}
IMAGE_SUFFIXES = (".png", ".rt")

# domain-A intensities; background is 0, so an image holds at most four values
SHAPE_LEVELS = (1.0 / 3.0, 2.0 / 3.0, 1.0)


# -- raw tensor files -----------------------------------------------------

def write_rt(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    tag = _RT_TAGS.get(arr.dtype.newbyteorder("<"), 1)
    payload = np.ascontiguousarray(arr, dtype=_RT_DTYPES[tag]).tobytes()
    header = RT_MAGIC + struct.pack("<BBB", RT_VERSION, tag, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    _atomic_write(Path(path), header + payload)


def read_rt(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 7 or raw[:4] != RT_MAGIC:
        raise DataError(f"{path}: not a raw tensor file")
    version, tag, ndim = struct.unpack_from("<BBB", raw, 4)
    if version != RT_VERSION or tag not in _RT_DTYPES:
        raise DataError(f"{path}: unsupported version {version} or dtype tag {tag}")
    off = 7 + 8 * ndim
    if len(raw) < off:
        raise DataError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 7)
    dtype = _RT_DTYPES[tag]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) - off != expected:
        raise DataError(f"{path}: payload has {len(raw) - off} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype, offset=off).reshape(shape).copy()


def _atomic_write(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- PNG ------------------------------------------------------------------

def read_png(path: str | Path) -> np.ndarray:
    """Decode to (C, H, W) in [0, 1]; grey stays one channel, everything else becomes RGB."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return np.clip(arr, 0.0, 1.0)[None]
            if im.mode not in ("L", "RGB"):
                im = im.convert("L" if im.mode in ("1", "P", "LA") and _is_grey(im) else "RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc
    return arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)


def _is_grey(im: Image.Image) -> bool:
    rgb = np.asarray(im.convert("RGB"))
    return bool((rgb[..., 0] == rgb[..., 1]).all() and (rgb[..., 1] == rgb[..., 2]).all())


def to_uint8(image: np.ndarray, normalize: bool = False) -> np.ndarray:
    """(C, H, W) float -> (H, W) or (H, W, 3) uint8; ``normalize`` stretches min..max to 0..255."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)
    if normalize:
        lo, hi = float(img.min()), float(img.max())
        img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | Path, image: np.ndarray, normalize: bool = False) -> None:
    Image.fromarray(to_uint8(image, normalize)).save(path, format="PNG")


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".rt":
        arr = read_rt(path).astype(np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise DataError(f"{path}: expected (C, H, W) or (H, W), got shape {arr.shape}")
        return arr
    if path.suffix.lower() == ".png":
        return read_png(path)
    raise DataError(f"{path}: unsupported file type")


def _resize(img: np.ndarray, size: tuple[int, int], nearest: bool) -> np.ndarray:
    h, w = size
    if nearest:
        # exact index lookup so label values survive bit for bit
        rows = np.minimum(((np.arange(h) + 0.5) * img.shape[1] / h).astype(int), img.shape[1] - 1)
        cols = np.minimum(((np.arange(w) + 0.5) * img.shape[2] / w).astype(int), img.shape[2] - 1)
        return img[:, rows][:, :, cols]
    chans = [np.asarray(Image.fromarray(c.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR),
                        dtype=np.float64) for c in img]
    return np.clip(np.stack(chans), 0.0, 1.0)


def load_images(folder: str | Path, size: tuple[int, int] | None = None,
                label_maps: bool = False) -> tuple[list[str], np.ndarray]:
    """Read every .png / .rt file of ``folder`` in name order; returns (stems, (N, C, H, W))."""
    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"{folder}: not a directory")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"{folder}: no .png or .rt images")
    imgs = []
    for p in files:
        img = read_image(p)
        if size is not None and img.shape[1:] != tuple(size):
            img = _resize(img, size, label_maps)
        imgs.append(img)
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise DataError(f"{folder}: inconsistent image shapes {sorted(shapes)}")
    stack = np.stack(imgs)
    if not np.isfinite(stack).all() or stack.min() < 0.0 or stack.max() > 1.0:
        raise DataError(f"{folder}: pixel values must lie in [0, 1]")
    return [p.stem for p in files], stack


# -- datasets -------------------------------------------------------------

def _check_stack(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 4 or len(arr) == 0:
        raise DataError(f"{name}: need a non-empty (N, C, H, W) stack, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError(f"{name}: pixel values must lie in [0, 1]")
    return arr


@dataclass
class UnpairedDataset:
    """Independent sample sets of two domains sharing (C, H, W); sizes may differ."""

    domain_a: np.ndarray
    domain_b: np.ndarray
    names_a: list[str] = field(default_factory=list)
    names_b: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.domain_a = _check_stack("domain A", self.domain_a)
        self.domain_b = _check_stack("domain B", self.domain_b)
        if self.domain_a.shape[1:] != self.domain_b.shape[1:]:
            raise DataError(f"domain shapes differ: {self.domain_a.shape[1:]} vs {self.domain_b.shape[1:]}")
        if not self.names_a:
            self.names_a = [f"a{i:05d}" for i in range(len(self.domain_a))]
        if not self.names_b:
            self.names_b = [f"b{i:05d}" for i in range(len(self.domain_b))]

    @property
    def channels(self) -> int:
        return self.domain_a.shape[1]

    @property
    def height(self) -> int:
        return self.domain_a.shape[2]

    @property
    def width(self) -> int:
        return self.domain_a.shape[3]

    def check_compatible(self, channels: int) -> None:
        if self.channels != channels:
            raise DataError(f"dataset has {self.channels} channels, the model expects {channels}")


def load_dataset(root: str | Path, size: tuple[int, int] | None = None,
                 label_maps_a: bool = False) -> UnpairedDataset:
    """Read ``root/domainA`` and ``root/domainB``."""
    root = Path(root)
    names_a, a = load_images(root / "domainA", size, label_maps_a)
    names_b, b = load_images(root / "domainB", size)
    return UnpairedDataset(a, b, names_a, names_b)


def save_dataset(root: str | Path, data: UnpairedDataset, fmt: str = "rt") -> None:
    root = Path(root)
    for sub, names, stack in (("domainA", data.names_a, data.domain_a), ("domainB", data.names_b, data.domain_b)):
        d = root / sub
        d.mkdir(parents=True, exist_ok=True)
        for name, img in zip(names, stack):
            if fmt == "rt":
                write_rt(d / f"{name}.rt", img)
            elif fmt == "png":
                write_png(d / f"{name}.png", img)
            else:
                raise ValueError(f"unknown format {fmt!r}")


# -- augmentation ---------------------------------------------------------

def hflip(image: np.ndarray) -> np.ndarray:
    return image[..., ::-1].copy()


def vflip(image: np.ndarray) -> np.ndarray:
    return image[..., ::-1, :].copy()


def augment_flip(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent horizontal and vertical flips, each with probability 1/2."""
    out = image
    if rng.random() < 0.5:
        out = out[..., ::-1]
    if rng.random() < 0.5:
        out = out[..., ::-1, :]
    return np.ascontiguousarray(out)


# -- synthetic shapes -----------------------------------------------------

def _shape_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = rng.uniform(0.2 * size, 0.8 * size, 2)
    ry, rx = rng.uniform(0.1 * size, 0.28 * size, 2)
    if rng.random() < 0.5:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)


def render_filled(size: int, rng: np.random.Generator, max_shapes: int = 3) -> np.ndarray:
    """(1, size, size) image of 1..max_shapes overlapping filled shapes on a zero background."""
    img = np.zeros((size, size))
    for _ in range(int(rng.integers(1, max_shapes + 1))):
        img[_shape_mask(size, rng)] = SHAPE_LEVELS[int(rng.integers(len(SHAPE_LEVELS)))]
    return img[None]


def outline(image: np.ndarray) -> np.ndarray:
    """Keep only region borders: non-zero pixels with a 4-neighbour of different value."""
    img = image[0]
    p = np.pad(img, 1)
    c = p[1:-1, 1:-1]
    border = ((p[:-2, 1:-1] != c) | (p[2:, 1:-1] != c) | (p[1:-1, :-2] != c) | (p[1:-1, 2:] != c))
    return np.where(border & (img > 0), img, 0.0)[None]


def synth_shapes_dataset(n_per_domain: int, size: int = 64, seed: int = 0) -> UnpairedDataset:
    """Domain A: filled shapes; domain B: outlines of independently drawn shapes."""
    if n_per_domain < 1 or size < 8:
        raise ValueError("need n_per_domain >= 1 and size >= 8")
    rng_a, rng_b = np.random.default_rng(seed).spawn(2)
    a = np.stack([render_filled(size, rng_a) for _ in range(n_per_domain)])
    b = np.stack([outline(render_filled(size, rng_b)) for _ in range(n_per_domain)])
    return UnpairedDataset(a, b)


def synth_paired(n: int, size: int = 64, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Aligned (A, B) stacks where each B image is the outline of its A image, for evaluation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    a = np.stack([render_filled(size, rng) for _ in range(n)])
    return a, np.stack([outline(img) for img in a])
