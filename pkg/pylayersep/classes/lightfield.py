# lightfield.py - light field, disparity and stack value objects plus directory I/O

import glob
import json
import os
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from pylayersep.classes.errors import DimensionError, LightFieldError
from pylayersep.extensions.common import read_image, read_pfm, translate, write_image, write_pfm

MANIFEST_FILE = 'lf.json'
VIEW_PATTERN = re.compile(r'^view_(\d+)_(\d+)\.(png|pfm)$')


def _frozen(array):
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


def check_grid_size(grid_size):
    if not isinstance(grid_size, (int, np.integer)) or grid_size < 3 or grid_size % 2 == 0:
        raise LightFieldError(f"grid size must be an odd integer >= 3, got {grid_size!r}")


@dataclass(frozen=True)
class GridOffset:
    """Position of a view relative to the central view, in grid steps"""
    dcol: int
    drow: int

    @property
    def phi(self):
        return np.array([self.dcol, self.drow], dtype=np.float64)

    @property
    def norm(self):
        return float(np.hypot(self.dcol, self.drow))

    def __neg__(self):
        return GridOffset(-self.dcol, -self.drow)


def grid_offsets(grid_size):
    """Lexicographic (row-major) lattice offsets of an N×N grid; the centre is (0, 0)"""
    check_grid_size(grid_size)
    half = (grid_size - 1) // 2
    return [GridOffset(col - half, row - half) for row in range(grid_size) for col in range(grid_size)]


def view_index(row, col, grid_size):
    return row * grid_size + col


def unroll(image, shape=None):
    """Row-major unrolling of an h×w map into a vector of length h·w"""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DimensionError(f"unroll expects an h×w map, got shape {image.shape}")
    if shape is not None and tuple(image.shape) != tuple(shape):
        raise DimensionError(f"image shape {image.shape} does not match stack shape {tuple(shape)}")
    return image.reshape(-1)


def roll(vector, shape):
    """Inverse of unroll"""
    vector = np.asarray(vector)
    height, width = shape
    if vector.ndim != 1 or vector.size != height * width:
        raise DimensionError(f"cannot roll a vector of shape {vector.shape} into {tuple(shape)}")
    return vector.reshape(height, width)


@dataclass(frozen=True, eq=False)
class LightField:
    """K = N×N sub-aperture views stored as a K×h×w×C array with intensities in [0,1]"""
    views: np.ndarray
    grid_size: int
    baseline_note: str = ''

    def __post_init__(self):
        check_grid_size(self.grid_size)
        views = np.asarray(self.views, dtype=np.float64)
        if views.ndim == 3:
            views = views[..., None]
        if views.ndim != 4:
            raise LightFieldError(f"views must be K×h×w×C, got shape {views.shape}")
        if views.shape[0] != self.grid_size ** 2:
            raise LightFieldError(f"missing view: grid {self.grid_size}×{self.grid_size} needs "
                                  f"{self.grid_size ** 2} views, got {views.shape[0]}")
        if views.shape[3] not in (1, 3):
            raise LightFieldError(f"views must have 1 or 3 channels, got {views.shape[3]}")
        if not np.all(np.isfinite(views)):
            raise LightFieldError("views contain non-finite intensities")
        if views.min() < 0.0 or views.max() > 1.0:
            raise LightFieldError("view intensities must lie in [0,1]")
        object.__setattr__(self, 'views', _frozen(views))

    @property
    def num_views(self):
        return self.views.shape[0]

    @property
    def height(self):
        return self.views.shape[1]

    @property
    def width(self):
        return self.views.shape[2]

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def channels(self):
        return self.views.shape[3]

    @property
    def ref_index(self):
        return (self.num_views - 1) // 2

    @cached_property
    def offsets(self):
        return grid_offsets(self.grid_size)

    @property
    def reference_view(self):
        return self.views[self.ref_index]

    def view(self, index):
        return self.views[index]


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Per-pixel disparity of the reference view, in pixels per one-hop grid step"""
    d: np.ndarray
    dmin: float = -np.inf
    dmax: float = np.inf

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if d.ndim != 2:
            raise DimensionError(f"disparity must be an h×w map, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise LightFieldError("disparity contains non-finite values")
        if self.dmin >= self.dmax:
            raise LightFieldError(f"empty disparity range [{self.dmin}, {self.dmax}]")
        if d.min() < self.dmin or d.max() > self.dmax:
            raise LightFieldError(f"disparity outside [{self.dmin}, {self.dmax}]: "
                                  f"min {d.min():.4f}, max {d.max():.4f}")
        object.__setattr__(self, 'd', _frozen(d))

    @classmethod
    def constant(cls, shape, value, dmin=-np.inf, dmax=np.inf):
        return cls(np.full(shape, float(value)), dmin, dmax)

    @classmethod
    def clipped(cls, d, dmin, dmax):
        return cls(np.clip(d, dmin, dmax), dmin, dmax)

    @property
    def shape(self):
        return self.d.shape

    def unrolled(self):
        return unroll(self.d)


@dataclass(frozen=True, eq=False)
class LayerStack:
    """C×K×(h·w) stack; row i of channel c is the unrolled i-th view of that channel"""
    data: np.ndarray
    image_shape: tuple
    mask: np.ndarray = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        height, width = self.image_shape
        if data.ndim != 3 or data.shape[2] != height * width:
            raise DimensionError(f"stack of shape {data.shape} does not hold {height}×{width} images")
        object.__setattr__(self, 'data', _frozen(data))
        object.__setattr__(self, 'image_shape', (int(height), int(width)))
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != data.shape[1:]:
                raise DimensionError(f"mask shape {mask.shape} does not match stack rows {data.shape[1:]}")
            mask.setflags(write=False)
            object.__setattr__(self, 'mask', mask)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def num_views(self):
        return self.data.shape[1]

    def channel(self, c):
        return self.data[c]

    def row(self, i):
        return self.data[:, i, :]

    def roll_row(self, i):
        """Row i re-rolled into an h×w×C image"""
        return np.stack([roll(self.data[c, i], self.image_shape) for c in range(self.channels)], axis=-1)

    def is_nonnegative(self):
        return bool(np.all(self.data >= 0.0))


def stack_from_views(views, mask=None):
    """Build a LayerStack from a K×h×w×C array"""
    views = np.asarray(views, dtype=np.float64)
    num_views, height, width, channels = views.shape
    data = np.stack([np.stack([unroll(views[i, :, :, c]) for i in range(num_views)])
                     for c in range(channels)])
    return LayerStack(data, (height, width), mask)


def _read_manifest(dir_path, manifest):
    if isinstance(manifest, dict):
        return dict(manifest)
    path = manifest if manifest is not None else os.path.join(dir_path, MANIFEST_FILE)
    if not os.path.exists(path):
        if manifest is not None:
            raise LightFieldError("missing manifest", path)
        return None
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise LightFieldError(f"cannot parse manifest: {e}", path) from e


def _infer_grid_size(dir_path):
    indices = []
    for path in glob.glob(os.path.join(dir_path, 'view_*_*.*')):
        match = VIEW_PATTERN.match(os.path.basename(path))
        if match:
            indices.append(max(int(match.group(1)), int(match.group(2))))
    if not indices:
        raise LightFieldError("missing view: no view_{row}_{col} files", dir_path)
    return max(indices) + 1


def _find_view(dir_path, row, col):
    for ext in ('png', 'pfm'):
        path = os.path.join(dir_path, f'view_{row}_{col}.{ext}')
        if os.path.exists(path):
            return path
    raise LightFieldError("missing view", os.path.join(dir_path, f'view_{row}_{col}.png'))


def load_lightfield(dir_path, manifest=None):
    """Load view_{row}_{col}.png|pfm files described by lf.json (or an explicit manifest)"""
    if not os.path.isdir(dir_path):
        raise LightFieldError("missing light field directory", dir_path)

    meta = _read_manifest(dir_path, manifest)
    if meta is None:
        meta = {'grid_size': _infer_grid_size(dir_path)}
    grid_size = meta.get('grid_size')
    check_grid_size(grid_size)
    low, high = meta.get('value_range', [0.0, 1.0])

    views = []
    for row in range(grid_size):
        for col in range(grid_size):
            path = _find_view(dir_path, row, col)
            image = read_image(path)
            if path.endswith('.pfm'):
                image = translate(image, low, high, 0.0, 1.0)
            if views and image.shape != views[0].shape:
                raise LightFieldError(f"inconsistent dimensions: {image.shape} vs {views[0].shape}", path)
            if image.min() < 0.0 or image.max() > 1.0:
                raise LightFieldError("intensities outside the declared value_range", path)
            views.append(image)

    return LightField(np.stack(views), grid_size, meta.get('baseline_note', ''))


def save_lightfield(lf, dir_path, fmt='png'):
    """Write views and lf.json; PNG output is 8-bit"""
    os.makedirs(dir_path, exist_ok=True)
    for index, _ in enumerate(lf.offsets):
        row, col = divmod(index, lf.grid_size)
        path = os.path.join(dir_path, f'view_{row}_{col}.{fmt}')
        if fmt == 'pfm':
            write_pfm(path, lf.views[index] if lf.channels == 3 else lf.views[index, :, :, 0])
        else:
            write_image(path, lf.views[index])

    manifest = {
        'grid_size': lf.grid_size,
        'baseline_note': lf.baseline_note or 'disparity in pixels per one-hop grid step',
        'value_range': [0.0, 1.0],
    }
    with open(os.path.join(dir_path, MANIFEST_FILE), 'w') as f:
        json.dump(manifest, f, indent=2)


def load_disparity(path, dmin=-np.inf, dmax=np.inf):
    d = read_pfm(path)
    if d.ndim != 2:
        raise LightFieldError("disparity PFM must be single channel", path)
    return DisparityMap.clipped(d, dmin, dmax)


def save_disparity(path, disparity):
    write_pfm(path, disparity.d)
