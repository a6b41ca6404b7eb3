# common.py - value-range translation and the image / PFM / FLO file codecs

import os

import cv2
import numpy as np

from pylayersep.classes.errors import DimensionError, LightFieldError

FLO_MAGIC = 202021.25


def translate(value, left_min, left_max, right_min, right_max):
    """Linearly map values from [left_min, left_max] onto [right_min, right_max]"""
    left_span = left_max - left_min
    right_span = right_max - right_min
    value_scaled = (np.asarray(value, dtype=np.float64) - left_min) / float(left_span)
    return right_min + value_scaled * right_span


def read_image(path):
    """Read a PNG (8 or 16 bit) or PFM file as float64 h×w×C in [0,1]"""
    if str(path).lower().endswith('.pfm'):
        data = read_pfm(path)
        return data[:, :, None] if data.ndim == 2 else data

    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise LightFieldError("cannot read image", path)

    if raw.ndim == 2:
        raw = raw[:, :, None]
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape[2] == 3:
        raw = raw[:, :, ::-1]

    if raw.dtype == np.uint8:
        image = translate(raw, 0, 255, 0.0, 1.0)
    elif raw.dtype == np.uint16:
        image = translate(raw, 0, 65535, 0.0, 1.0)
    else:
        image = raw.astype(np.float64)
    return np.ascontiguousarray(image)


def write_image(path, image):
    """Write a float image in [0,1] as an 8-bit PNG; values outside are clipped"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    quantized = np.clip(np.rint(translate(image, 0.0, 1.0, 0, 255)), 0, 255).astype(np.uint8)
    if quantized.ndim == 3:
        quantized = np.ascontiguousarray(quantized[:, :, ::-1])
    if not cv2.imwrite(str(path), quantized):
        raise LightFieldError("cannot write image", path)


def write_pfm(path, data):
    """Write a single-channel (or RGB) float map as little-endian PFM"""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim == 2:
        header = 'Pf'
    elif data.ndim == 3 and data.shape[2] == 3:
        header = 'PF'
    else:
        raise DimensionError(f"PFM needs h×w or h×w×3 data, got {data.shape}")

    height, width = data.shape[:2]
    with open(path, 'wb') as f:
        f.write(f"{header}\n{width} {height}\n-1.0\n".encode('ascii'))
        # PFM scanlines run bottom to top
        f.write(np.ascontiguousarray(np.flipud(data)).astype('<f4').tobytes())


def read_pfm(path):
    if not os.path.exists(path):
        raise LightFieldError("missing PFM file", path)

    with open(path, 'rb') as f:
        header = f.readline().strip()
        if header not in (b'Pf', b'PF'):
            raise LightFieldError(f"not a PFM file (header {header!r})", path)
        dims = f.readline().split()
        scale_line = f.readline().strip()
        payload = f.read()

    try:
        width, height = int(dims[0]), int(dims[1])
        scale = float(scale_line)
    except (IndexError, ValueError):
        raise LightFieldError(f"malformed PFM header (size {b' '.join(dims)!r}, scale {scale_line!r})",
                              path) from None
    if len(dims) != 2 or width <= 0 or height <= 0 or scale == 0.0:
        raise LightFieldError(f"malformed PFM header (size {b' '.join(dims)!r}, scale {scale_line!r})", path)
    channels = 3 if header == b'PF' else 1
    dtype = '<f4' if scale < 0 else '>f4'
    values = np.frombuffer(payload, dtype=dtype)
    if values.size != width * height * channels:
        raise LightFieldError(f"PFM payload has {values.size} values, expected {width * height * channels}", path)

    shape = (height, width) if channels == 1 else (height, width, channels)
    return np.flipud(values.reshape(shape)).astype(np.float64)


def write_flo(path, flow):
    """Write an h×w×2 flow field in the Middlebury .flo layout"""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DimensionError(f"flow must be h×w×2, got {flow.shape}")
    height, width = flow.shape[:2]
    with open(path, 'wb') as f:
        np.array([FLO_MAGIC], dtype='<f4').tofile(f)
        np.array([width, height], dtype='<i4').tofile(f)
        flow.astype('<f4').tofile(f)


def read_flo(path):
    if not os.path.exists(path):
        raise LightFieldError("missing flow file", path)

    with open(path, 'rb') as f:
        magic = np.fromfile(f, dtype='<f4', count=1)
        if magic.size != 1 or magic[0] != np.float32(FLO_MAGIC):
            raise LightFieldError("bad .flo magic number", path)
        width, height = (int(v) for v in np.fromfile(f, dtype='<i4', count=2))
        values = np.fromfile(f, dtype='<f4', count=2 * width * height)

    if values.size != 2 * width * height:
        raise LightFieldError("truncated .flo file", path)
    return values.reshape(height, width, 2).astype(np.float64)
