"""Image files, paired-dataset discovery and the FLW1 weight format.

FLW1 layout (all integers little-endian)::

    b"FLW1"
    u32 field_count
    field_count x (u32 byte_length, UTF-8 text)
    payload: float32 little-endian, tensors concatenated in manifest order

Text fields, in order: ``variant=<name>``, ``base_width=<int>``,
``dense_layers=<int>``, ``decoder_widths=<int>,<int>,...``, then one
``tensor=<layer>.<key>:<role>:<d0>x<d1>x...`` per tensor in build order.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, LayoutError, PairError, UnsupportedFormatError
from .generator import GeneratorConfig, GeneratorWeights, Layer, build_generator

log = logging.getLogger(__name__)

MAGIC = b"FLW1"
IMAGE_SUFFIXES = (".pgm", ".ppm", ".png")
LUMA = (0.299, 0.587, 0.114)


# ---------------------------------------------------------------- images

def _read_netpbm(data, path):
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: maxval {maxval} not supported (need 255)")
    channels = 1 if data[:2] == b"P5" else 3
    n = width * height * channels
    raster = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos) if len(data) - pos >= n else None
    if raster is None:
        raise FormatError(f"{path}: raster has {len(data) - pos} bytes, expected {n}")
    img = raster.reshape(height, width, channels).astype(np.float64)
    return img[..., 0] if channels == 1 else img


def _read_png(path):
    try:
        from PIL import Image
    except ImportError:
        raise UnsupportedFormatError(f"{path}: PNG support needs Pillow") from None
    with Image.open(path) as im:
        if im.mode in ("L", "RGB"):
            return np.asarray(im, dtype=np.float64)
        if im.mode in ("LA", "RGBA", "P"):
            return np.asarray(im.convert("RGB"), dtype=np.float64)
        raise UnsupportedFormatError(f"{path}: PNG mode {im.mode} not supported")


def read_gray(path):
    """Read a P5/P6 netpbm or 8-bit PNG file as a float32 (h, w) array in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P6"):
        img = _read_netpbm(data, path)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        img = _read_png(path)
    else:
        raise FormatError(f"{path}: unknown image format")
    if img.ndim == 3:
        img = img[..., 0] * LUMA[0] + img[..., 1] * LUMA[1] + img[..., 2] * LUMA[2]
    return (img / 255.0).astype(np.float32)


def to_bytes(img):
    """[0, 1] reals to uint8, rounding half away from zero."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    return np.floor(np.clip(img, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)


def write_gray(img, path):
    q = to_bytes(img)
    if q.ndim != 2:
        raise FormatError(f"write_gray needs a single-channel image, got shape {q.shape}")
    h, w = q.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + q.tobytes())


def resize_bilinear(img, height, width):
    """Half-pixel-centred bilinear resampling of an (h, w) array."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if (h, w) == (height, width):
        return img.astype(np.float32)

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return (top * (1 - fy)[:, None] + bot * fy[:, None]).astype(np.float32)


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class ImagePair:
    name: str
    ir: np.ndarray
    vi: np.ndarray


def _index(directory):
    found = {}
    for p in directory.iterdir():
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            if p.stem in found:
                raise LayoutError(f"{directory}: two images share the stem {p.stem!r}")
            found[p.stem] = p
    return found


def find_pairs(root):
    """Return ``(pairs, unmatched)``: sorted (stem, ir_path, vi_path) and unmatched paths."""
    root = Path(root)
    dirs = {}
    for sub in ("ir", "vi"):
        d = root / sub
        if not d.is_dir():
            raise LayoutError(f"{root}: missing {sub}/ subdirectory")
        dirs[sub] = _index(d)
    ir, vi = dirs["ir"], dirs["vi"]
    common = sorted(set(ir) & set(vi))
    unmatched = sorted([ir[s] for s in set(ir) - set(vi)] + [vi[s] for s in set(vi) - set(ir)])
    return [(s, ir[s], vi[s]) for s in common], unmatched


def load_pairs(root):
    pairs, unmatched = find_pairs(root)
    for p in unmatched:
        log.warning("no partner for %s; skipped", p)
    out = []
    for stem, ir_path, vi_path in pairs:
        ir, vi = read_gray(ir_path), read_gray(vi_path)
        if ir.shape != vi.shape:
            raise PairError(f"pair {stem!r}: ir {ir.shape} and vi {vi.shape} differ in size")
        out.append(ImagePair(stem, ir, vi))
    return out


# ---------------------------------------------------------------- weights

def _fields(weights):
    cfg = weights.config
    out = [f"variant={cfg.variant}", f"base_width={cfg.base_width}",
           f"dense_layers={cfg.dense_layers}",
           "decoder_widths=" + ",".join(str(w) for w in cfg.decoder_widths)]
    for lay in weights.layers:
        for key, t in lay.tensors.items():
            out.append(f"tensor={lay.name}.{key}:{lay.role}:" + "x".join(str(d) for d in t.shape))
    return out


def save_weights(weights, path):
    fields = [f.encode("utf-8") for f in _fields(weights)]
    parts = [MAGIC, struct.pack("<I", len(fields))]
    for f in fields:
        parts += [struct.pack("<I", len(f)), f]
    for _, t in weights.named_tensors():
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: not an FLW1 weight file")
    pos = 4

    def u32():
        nonlocal pos
        if pos + 4 > len(data):
            raise CorruptionError(f"{path}: header truncated at byte {pos}")
        (v,) = struct.unpack_from("<I", data, pos)
        pos += 4
        return v

    fields = []
    for _ in range(u32()):
        n = u32()
        if pos + n > len(data):
            raise CorruptionError(f"{path}: header field truncated at byte {pos}")
        fields.append(data[pos:pos + n].decode("utf-8"))
        pos += n
    try:
        head = dict(f.split("=", 1) for f in fields[:4])
        cfg = GeneratorConfig(head["variant"], int(head["base_width"]), int(head["dense_layers"]),
                              tuple(int(w) for w in head["decoder_widths"].split(",")))
        manifest = []
        for f in fields[4:]:
            key, spec = f.split("=", 1)
            if key != "tensor":
                raise ValueError(f)
            name, role, shape = spec.split(":")
            manifest.append((name, role, tuple(int(d) for d in shape.split("x"))))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from None
    expected = 4 * sum(int(np.prod(s)) for _, _, s in manifest)
    actual = len(data) - pos
    if actual != expected:
        raise CorruptionError(f"{path}: payload is {actual} bytes, expected {expected}")
    layers, current = [], None
    for name, role, shape in manifest:
        layer_name, key = name.rsplit(".", 1)
        n = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(np.float32).reshape(shape)
        pos += 4 * n
        if current is None or current.name != layer_name:
            current = Layer(layer_name, role, {})
            layers.append(current)
        current.tensors[key] = arr
    weights = GeneratorWeights(cfg, tuple(layers))
    want = [(n, t.shape) for n, t in build_generator(cfg).named_tensors()]
    if [(n, t.shape) for n, t in weights.named_tensors()] != want:
        raise FormatError(f"{path}: tensor manifest does not match the {cfg.variant} topology")
    return weights
