# synth.py - synthetic light fields with a known transmitted layer, secondary layer and disparity

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from pylayersep.classes.errors import SynthError
from pylayersep.classes.lightfield import DisparityMap, LightField, grid_offsets, save_disparity, save_lightfield
from pylayersep.extensions.common import read_image, read_pfm, write_image

logger = logging.getLogger(__name__)

GT_DIR = 'gt'
SPEC_FILE = 'spec.json'
SCENES = ('plane', 'two_plane', 'map')


@dataclass(frozen=True)
class SyntheticSpec:
    """Scene description for `render`.

    The transmitted layer sits at `disparity` (foreground ellipse of the
    two-plane scene) and, for 'two_plane', `background_disparity` behind it.
    The secondary layer moves by `secondary_motion` ⊙ φ_i pixels, opposite
    to the transmitted layer for positive disparity and motion.
    """
    grid_size: int = 3
    height: int = 64
    width: int = 64
    channels: int = 1
    scene: str = 'plane'
    disparity: float = 1.0
    background_disparity: float = 0.0
    disparity_map: Optional[str] = None
    transmitted_texture: str = 'bandlimited'
    secondary_texture: str = 'pattern'
    secondary_motion: tuple = (1.25, 1.25)
    alpha: float = 0.2
    seed: int = 0
    max_frequency: float = 0.08
    ellipse: tuple = (0.5, 0.5, 0.3, 0.22)
    secondary_shift: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.grid_size < 3 or self.grid_size % 2 == 0:
            raise SynthError(f"grid size must be an odd integer >= 3, got {self.grid_size}")
        if self.height < 8 or self.width < 8:
            raise SynthError(f"image must be at least 8×8, got {self.height}×{self.width}")
        if self.channels not in (1, 3):
            raise SynthError(f"channels must be 1 or 3, got {self.channels}")
        if self.scene not in SCENES:
            raise SynthError(f"unknown scene '{self.scene}', expected one of {', '.join(SCENES)}")
        if self.scene == 'map' and self.disparity_map is None:
            raise SynthError("scene 'map' needs a disparity_map file")
        if not 0.0 <= self.alpha < 1.0:
            raise SynthError(f"alpha must lie in [0,1), got {self.alpha}")
        motion = tuple(float(m) for m in self.secondary_motion)
        if len(motion) != 2 or not np.all(np.isfinite(motion)):
            raise SynthError(f"secondary_motion must be two finite numbers, got {self.secondary_motion}")
        object.__setattr__(self, 'secondary_motion', motion)
        object.__setattr__(self, 'ellipse', tuple(float(e) for e in self.ellipse))
        object.__setattr__(self, 'secondary_shift', tuple(float(s) for s in self.secondary_shift))
        if not 0.0 < self.max_frequency <= 0.5:
            raise SynthError(f"max_frequency must lie in (0, 0.5], got {self.max_frequency}")

    @property
    def shape(self):
        return (self.height, self.width)

    def to_dict(self):
        data = asdict(self)
        data['secondary_motion'] = list(self.secondary_motion)
        data['ellipse'] = list(self.ellipse)
        data['secondary_shift'] = list(self.secondary_shift)
        data['blend'] = 'convex'
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop('blend', None)
        for key in ('secondary_motion', 'ellipse', 'secondary_shift'):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as e:
            raise SynthError(f"invalid synthetic spec: {e}") from e


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Reference-view ground truth; T_ref and S_ref are pre-weighted by (1−α) and α"""
    T_ref: np.ndarray
    S_ref: np.ndarray
    d_true: DisparityMap
    alpha: float = 0.0


@dataclass(frozen=True, eq=False)
class LayerViews:
    """Unweighted per-view layers, K×h×w×C each"""
    transmitted: np.ndarray
    secondary: np.ndarray
    d_true: DisparityMap
    offsets: list = field(default_factory=list)


def bandlimited_texture(seed, channels=1, max_frequency=0.08, components=24):
    """Sum of random sinusoids with spatial frequency below max_frequency cycles/pixel, in [0,1].

    Returns a callable evaluated at real-valued (rows, cols) coordinates.
    """
    rng = np.random.default_rng(seed)
    radius = max_frequency * np.sqrt(rng.uniform(0.05, 1.0, size=(channels, components)))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(channels, components))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(channels, components))
    amplitude = rng.uniform(0.5, 1.0, size=(channels, components))
    fx = radius * np.cos(angle)
    fy = radius * np.sin(angle)

    def texture(rows, cols):
        out = np.empty(np.shape(rows) + (channels,))
        for c in range(channels):
            total = np.zeros(np.shape(rows))
            for k in range(components):
                total += amplitude[c, k] * np.sin(2.0 * np.pi * (fx[c, k] * cols + fy[c, k] * rows) + phase[c, k])
            out[..., c] = 0.5 + 0.5 * total / amplitude[c].sum()
        return out

    return texture


def pattern_texture(seed, channels=1, spacing=16.0, radius=(3.0, 5.5), softness=1.0):
    """Soft discs on a jittered grid over a zero background.

    Each disc lies inside its grid cell, so a point only needs the discs of the
    surrounding 3×3 cells.
    """
    rng = np.random.default_rng(seed)
    cells = 64
    jitter = spacing / 2.0 - radius[1] - softness
    centre_rows = rng.uniform(-jitter, jitter, size=(cells, cells)) + spacing / 2.0
    centre_cols = rng.uniform(-jitter, jitter, size=(cells, cells)) + spacing / 2.0
    radii = rng.uniform(radius[0], radius[1], size=(cells, cells))
    levels = rng.uniform(0.6, 1.0, size=(cells, cells, channels))

    def texture(rows, cols):
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        cell_r = np.floor(rows / spacing).astype(int)
        cell_c = np.floor(cols / spacing).astype(int)
        out = np.zeros(rows.shape + (channels,))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                # the disc layout repeats every `cells` grid cells
                r = np.mod(cell_r + dr, cells)
                c = np.mod(cell_c + dc, cells)
                centre_y = (cell_r + dr) * spacing + centre_rows[r, c]
                centre_x = (cell_c + dc) * spacing + centre_cols[r, c]
                distance = np.hypot(rows - centre_y, cols - centre_x)
                profile = 0.5 * (1.0 - np.tanh((distance - radii[r, c]) / softness))
                out = np.maximum(out, profile[..., None] * levels[r, c])
        return np.clip(out, 0.0, 1.0)

    return texture


def shaded_texture(seed, channels=1, extent=63.0, peak=0.4):
    """Dim highlights over a brightness ramp, both at most `peak`.

    The ramp rises linearly along the columns from 0 at column 0 to `peak` at
    column `extent`. Moving it by a few pixels barely changes it, so most of
    it is common to all views and cannot be told apart from the transmitted
    layer; the highlights are `pattern_texture` discs scaled by `peak`.
    """
    highlights = pattern_texture(seed, channels)

    def texture(rows, cols):
        ramp = peak * np.clip(np.asarray(cols, dtype=np.float64) / extent, 0.0, 1.0)
        return np.maximum(ramp[..., None], peak * highlights(rows, cols))

    return texture


def image_texture(path, channels=1):
    """Texture sampled from an image file, mirrored outside its frame"""
    image = read_image(path)
    if image.shape[2] != channels:
        image = image.mean(axis=2, keepdims=True) if channels == 1 else np.repeat(image[:, :, :1], 3, axis=2)

    def texture(rows, cols):
        return np.stack([ndimage.map_coordinates(image[:, :, c], [rows, cols], order=1, mode='mirror')
                         for c in range(channels)], axis=-1)

    return texture


def _texture(name, seed, spec):
    if name == 'bandlimited':
        return bandlimited_texture(seed, spec.channels, spec.max_frequency)
    if name == 'pattern':
        return pattern_texture(seed, spec.channels)
    if name == 'shaded':
        return shaded_texture(seed, spec.channels, extent=float(spec.width - 1))
    if os.path.exists(name):
        return image_texture(name, spec.channels)
    raise SynthError(f"unknown texture '{name}' (expected 'bandlimited', 'pattern', 'shaded' or an image path)")


def _check_in_frame(spec, offsets, d_true):
    reach = max(abs(o.dcol) for o in offsets), max(abs(o.drow) for o in offsets)
    motion_x = abs(spec.secondary_motion[0]) * reach[0]
    motion_y = abs(spec.secondary_motion[1]) * reach[1]
    if motion_x >= spec.width or motion_y >= spec.height:
        raise SynthError(f"secondary motion {spec.secondary_motion} moves the layer fully out of "
                         f"a {spec.width}×{spec.height} frame")
    extent = float(np.abs(d_true).max())
    if extent * reach[0] >= spec.width or extent * reach[1] >= spec.height:
        raise SynthError(f"disparity {extent} moves the transmitted layer fully out of frame")


def _ellipse_mask(spec, rows, cols):
    centre_y, centre_x, semi_y, semi_x = spec.ellipse
    return (((rows - centre_y * spec.height) / (semi_y * spec.height)) ** 2 +
            ((cols - centre_x * spec.width) / (semi_x * spec.width)) ** 2) <= 1.0


def _disparity_truth(spec, rows, cols):
    if spec.scene == 'plane':
        return np.full(spec.shape, float(spec.disparity))
    if spec.scene == 'two_plane':
        return np.where(_ellipse_mask(spec, rows, cols), spec.disparity, spec.background_disparity)
    d = read_pfm(spec.disparity_map)
    if d.shape != spec.shape:
        raise SynthError(f"disparity map is {d.shape}, scene is {spec.shape}")
    return d


def render_layers(spec):
    """Unweighted transmitted and secondary views: T_i(p) = T(p + d·φ_i), S_i(p) = S(p − m⊙φ_i)"""
    offsets = grid_offsets(spec.grid_size)
    rows, cols = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    d_true = _disparity_truth(spec, rows, cols)
    _check_in_frame(spec, offsets, d_true)

    transmitted = _texture(spec.transmitted_texture, spec.seed, spec)
    background = _texture(spec.transmitted_texture, spec.seed + 1, spec)
    secondary = _texture(spec.secondary_texture, spec.seed + 2, spec)
    motion_x, motion_y = spec.secondary_motion
    shift_x, shift_y = spec.secondary_shift

    t_views = []
    s_views = []
    for offset in offsets:
        if spec.scene == 'two_plane':
            front_rows = rows + spec.disparity * offset.drow
            front_cols = cols + spec.disparity * offset.dcol
            back = background(rows + spec.background_disparity * offset.drow,
                              cols + spec.background_disparity * offset.dcol)
            covered = _ellipse_mask(spec, front_rows, front_cols)
            t_views.append(np.where(covered[..., None], transmitted(front_rows, front_cols), back))
        else:
            t_views.append(transmitted(rows + d_true * offset.drow, cols + d_true * offset.dcol))
        s_views.append(secondary(rows - motion_y * offset.drow - shift_y, cols - motion_x * offset.dcol - shift_x))

    return LayerViews(np.clip(np.stack(t_views), 0.0, 1.0), np.clip(np.stack(s_views), 0.0, 1.0),
                      DisparityMap(d_true), offsets)


def render(spec):
    """Views (1−α)·T_i + α·S_i plus pre-weighted reference-view ground truth"""
    layers = render_layers(spec)
    alpha = spec.alpha
    views = (1.0 - alpha) * layers.transmitted + alpha * layers.secondary
    lf = LightField(np.clip(views, 0.0, 1.0), spec.grid_size,
                    'synthetic; disparity in pixels per one-hop grid step')
    ref = lf.ref_index
    truth = GroundTruth((1.0 - alpha) * layers.transmitted[ref], alpha * layers.secondary[ref],
                        layers.d_true, alpha)
    logger.debug("rendered %s scene %d×%d, alpha %.2f", spec.scene, spec.width, spec.height, alpha)
    return lf, truth


def alpha_sweep(spec, alphas):
    """One rendering per α with the scene and seed of `spec`"""
    for alpha in alphas:
        if not 0.0 <= alpha < 1.0:
            raise SynthError(f"alpha must lie in [0,1), got {alpha}")
    return [render(replace(spec, alpha=float(alpha))) for alpha in alphas]


def render_sequence(spec, frames, step=(2.0, 0.0)):
    """Frames of a static transmitted scene behind a secondary layer translating by `step` per frame"""
    if frames < 1:
        raise SynthError(f"need at least one frame, got {frames}")
    base_x, base_y = spec.secondary_shift
    return [render(replace(spec, secondary_shift=(base_x + k * step[0], base_y + k * step[1])))
            for k in range(frames)]


def save_synthetic(lf, truth, spec, out_dir):
    """Light field layout plus gt/ with T_ref.png, S_ref.png, d_true.pfm and spec.json"""
    save_lightfield(lf, out_dir)
    gt_dir = os.path.join(out_dir, GT_DIR)
    os.makedirs(gt_dir, exist_ok=True)
    write_image(os.path.join(gt_dir, 'T_ref.png'), truth.T_ref)
    write_image(os.path.join(gt_dir, 'S_ref.png'), truth.S_ref)
    save_disparity(os.path.join(gt_dir, 'd_true.pfm'), truth.d_true)
    with open(os.path.join(gt_dir, SPEC_FILE), 'w') as f:
        json.dump(spec.to_dict(), f, indent=2)
    return gt_dir


def load_ground_truth(gt_dir):
    try:
        with open(os.path.join(gt_dir, SPEC_FILE), 'r') as f:
            alpha = float(json.load(f).get('alpha', 0.0))
    except (OSError, json.JSONDecodeError) as e:
        raise SynthError(f"cannot read {os.path.join(gt_dir, SPEC_FILE)}: {e}") from e
    return GroundTruth(read_image(os.path.join(gt_dir, 'T_ref.png')),
                       read_image(os.path.join(gt_dir, 'S_ref.png')),
                       DisparityMap(read_pfm(os.path.join(gt_dir, 'd_true.pfm'))),
                       alpha)


def load_spec(path):
    try:
        with open(path, 'r') as f:
            return SyntheticSpec.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise SynthError(f"cannot read synthetic spec {path}: {e}") from e
