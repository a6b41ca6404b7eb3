# init_flow.py - dense per-view correspondences and the flow-averaged initial disparity

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from pylayersep.classes.errors import FlowError, LightFieldError
from pylayersep.classes.lightfield import DisparityMap, GridOffset
from pylayersep.config import FlowConfig
from pylayersep.extensions.common import read_flo, write_flo

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
FLOW_PATTERN = 'flow_{row}_{col}.flo'
# below this local variance a patch carries no correlation signal
NCC_MIN_VARIANCE = 1e-8
EXACT_MATCH_COST = 1e-6


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel flow w = (w_x, w_y) of one view, stored h×w×2.

    Convention: ref(u) ≈ src(u + w(u)), so a view that sees the scene at
    disparity d has w = −d·φ.
    """
    w: np.ndarray
    offset: GridOffset = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 3 or w.shape[2] != 2:
            raise FlowError(f"flow must be h×w×2, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise FlowError("flow contains non-finite vectors")
        object.__setattr__(self, 'w', w)

    @classmethod
    def zeros(cls, shape, offset=None):
        return cls(np.zeros(tuple(shape) + (2,)), offset)

    @property
    def shape(self):
        return self.w.shape[:2]

    @property
    def wx(self):
        return self.w[:, :, 0]

    @property
    def wy(self):
        return self.w[:, :, 1]

    def magnitude(self):
        return np.hypot(self.wx, self.wy)


def to_gray(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[2] == 1:
        return image[:, :, 0]
    return image[:, :, :3] @ LUMA_WEIGHTS


def _resize(image, shape):
    """Bilinear resize with pixel-centre alignment, clamped at the border"""
    height, width = image.shape
    new_height, new_width = shape
    rows = np.clip((np.arange(new_height) + 0.5) * height / new_height - 0.5, 0, height - 1)
    cols = np.clip((np.arange(new_width) + 0.5) * width / new_width - 0.5, 0, width - 1)
    grid_rows, grid_cols = np.meshgrid(rows, cols, indexing='ij')
    return ndimage.map_coordinates(image, [grid_rows, grid_cols], order=1, mode='nearest')


def _pyramid(image, levels):
    """Gaussian pyramid, finest first"""
    pyramid = [image]
    for _ in range(1, levels):
        current = pyramid[-1]
        smoothed = ndimage.gaussian_filter(current, 1.0, mode='reflect')
        shape = (max(1, (current.shape[0] + 1) // 2), max(1, (current.shape[1] + 1) // 2))
        pyramid.append(_resize(smoothed, shape))
    return pyramid


def _usable_levels(shape, levels, patch_radius):
    # the coarsest image must still hold a few patches
    minimum = 4 * (2 * patch_radius + 1)
    while levels > 1 and min(shape) / 2 ** (levels - 1) < minimum:
        levels -= 1
    return levels


def _ncc(ref, moved, size):
    mean_r = ndimage.uniform_filter(ref, size)
    mean_m = ndimage.uniform_filter(moved, size)
    var_r = ndimage.uniform_filter(ref * ref, size) - mean_r ** 2
    var_m = ndimage.uniform_filter(moved * moved, size) - mean_m ** 2
    cov = ndimage.uniform_filter(ref * moved, size) - mean_r * mean_m
    denominator = var_r * var_m
    textured = denominator > NCC_MIN_VARIANCE ** 2
    ncc = np.zeros_like(ref)
    ncc[textured] = cov[textured] / np.sqrt(denominator[textured])
    return np.clip(ncc, -1.0, 1.0)


def _match_level(src, ref, prior, search, config):
    """Winner-take-all over integer offsets around the rounded prior, then parabolic refinement"""
    height, width = ref.shape
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    centre = np.rint(prior)
    size = 2 * config.patch_radius + 1

    span = np.arange(-search, search + 1)
    data_cost = np.empty((span.size, span.size, height, width))
    total_cost = np.empty_like(data_cost)
    for a, oy in enumerate(span):
        for b, ox in enumerate(span):
            flow_x = centre[:, :, 0] + ox
            flow_y = centre[:, :, 1] + oy
            moved = ndimage.map_coordinates(src, [np.clip(rows + flow_y, 0, height - 1),
                                                  np.clip(cols + flow_x, 0, width - 1)],
                                            order=1, mode='nearest')
            data_cost[a, b] = 1.0 - _ncc(ref, moved, size)
            deviation = np.abs(flow_x - prior[:, :, 0]) + np.abs(flow_y - prior[:, :, 1])
            total_cost[a, b] = data_cost[a, b] + config.smoothness * deviation

    flat = total_cost.reshape(span.size * span.size, height, width)
    best = np.argmin(flat, axis=0)
    best_y, best_x = np.divmod(best, span.size)
    pick = np.ix_(range(height), range(width))

    def cost_at(y, x):
        return total_cost[y, x, pick[0], pick[1]]

    flow = np.stack([centre[:, :, 0] + span[best_x], centre[:, :, 1] + span[best_y]], axis=-1)
    refine = data_cost[best_y, best_x, pick[0], pick[1]] >= EXACT_MATCH_COST
    c0 = cost_at(best_y, best_x)
    for axis, index in ((0, best_x), (1, best_y)):
        inner = refine & (index > 0) & (index < span.size - 1)
        lower = np.clip(index - 1, 0, span.size - 1)
        upper = np.clip(index + 1, 0, span.size - 1)
        if axis == 0:
            c_minus, c_plus = cost_at(best_y, lower), cost_at(best_y, upper)
        else:
            c_minus, c_plus = cost_at(lower, best_x), cost_at(upper, best_x)
        curvature = c_minus - 2.0 * c0 + c_plus
        usable = inner & (curvature > 0)
        delta = np.zeros_like(c0)
        delta[usable] = 0.5 * (c_minus[usable] - c_plus[usable]) / curvature[usable]
        flow[:, :, axis] += np.clip(delta, -0.5, 0.5)
    return flow


def dense_correspondence(src, ref, radius, config=None):
    """Coarse-to-fine NCC patch matching of `src` against `ref` within ±radius pixels"""
    config = config or FlowConfig()
    src = to_gray(src)
    ref = to_gray(ref)
    if src.shape != ref.shape:
        raise FlowError(f"images differ in size: {src.shape} vs {ref.shape}")
    if radius < 1:
        raise FlowError(f"search radius must be >= 1, got {radius}")
    if radius >= min(ref.shape):
        raise FlowError(f"search radius {radius} exceeds image size {ref.shape}")

    levels = _usable_levels(ref.shape, config.levels, config.patch_radius)
    src_pyramid = _pyramid(src, levels)
    ref_pyramid = _pyramid(ref, levels)

    flow = np.zeros(ref_pyramid[-1].shape + (2,))
    for level in reversed(range(levels)):
        level_ref = ref_pyramid[level]
        if flow.shape[:2] != level_ref.shape:
            scale = np.array([level_ref.shape[1] / flow.shape[1], level_ref.shape[0] / flow.shape[0]])
            flow = np.stack([_resize(flow[:, :, k], level_ref.shape) * scale[k] for k in range(2)], axis=-1)
        search = math.ceil(radius / 2 ** level) if level == levels - 1 else 2
        flow = _match_level(src_pyramid[level], level_ref, flow, search, config)

    flow = np.clip(flow, -radius, radius)
    if config.median_size > 1:
        flow = np.stack([ndimage.median_filter(flow[:, :, k], size=config.median_size, mode='nearest')
                         for k in range(2)], axis=-1)
    return FlowField(flow)


def _fill_from_neighbours(values):
    """Replace NaNs by the median of valid 3×3 neighbours, growing inwards until none remain"""
    values = values.copy()
    while np.isnan(values).any():
        padded = np.pad(values, 1, mode='constant', constant_values=np.nan)
        height, width = values.shape
        neighbours = np.stack([padded[r:r + height, c:c + width] for r in range(3) for c in range(3)])
        holes = np.isnan(values)
        fillable = holes & ~np.all(np.isnan(neighbours), axis=0)
        if not fillable.any():
            break
        values[fillable] = np.nanmedian(neighbours[:, fillable], axis=0)
    return values


def initial_disparity(flows, offsets, degeneracy_threshold=0.25):
    """d⁰ = mean over contributing views of −wᵀw / wᵀφ.

    A view contributes at a pixel when |wᵀφ| ≥ degeneracy_threshold; pixels
    without any contributing view take the median of their valid neighbours.
    """
    if len(flows) != len(offsets):
        raise FlowError(f"{len(flows)} flow fields for {len(offsets)} grid offsets")
    if not flows or all(offset.norm == 0.0 for offset in offsets):
        raise FlowError("no contributing views: every grid offset is zero")

    shape = flows[0].shape
    estimates = []
    weights = []
    for flow, offset in zip(flows, offsets):
        if flow.shape != shape:
            raise FlowError(f"flow shape {flow.shape} does not match {shape}")
        numerator = flow.wx ** 2 + flow.wy ** 2
        denominator = flow.wx * offset.dcol + flow.wy * offset.drow
        valid = np.abs(denominator) >= degeneracy_threshold
        estimate = np.zeros(shape)
        estimate[valid] = -numerator[valid] / denominator[valid]
        estimates.append(estimate)
        weights.append(valid)

    count = np.sum(weights, axis=0)
    if not count.any():
        logger.debug("no view passes the degeneracy threshold, d0 is zero")
        return DisparityMap(np.zeros(shape))

    total = np.sum(estimates, axis=0)
    d0 = np.full(shape, np.nan)
    d0[count > 0] = total[count > 0] / count[count > 0]
    missing = int(np.sum(count == 0))
    if missing:
        logger.debug("%d pixels without contributing views, filled from neighbours", missing)
        d0 = _fill_from_neighbours(d0)
    return DisparityMap(np.nan_to_num(d0, nan=0.0))


def flow_path(dir_path, row, col):
    return os.path.join(dir_path, FLOW_PATTERN.format(row=row, col=col))


def load_flows(dir_path, lf):
    """Read flow_{row}_{col}.flo for every non-reference view; the reference flow is zero"""
    flows = []
    for index, offset in enumerate(lf.offsets):
        row, col = divmod(index, lf.grid_size)
        path = flow_path(dir_path, row, col)
        if index == lf.ref_index and not os.path.exists(path):
            flows.append(FlowField.zeros(lf.shape, offset))
            continue
        try:
            w = read_flo(path)
        except LightFieldError as e:
            raise FlowError(str(e)) from e
        if w.shape[:2] != lf.shape:
            raise FlowError(f"flow {path} is {w.shape[1]}×{w.shape[0]}, views are {lf.width}×{lf.height}")
        flows.append(FlowField(w, offset))
    logger.info("loaded %d flow fields from %s", len(flows), dir_path)
    return flows


def save_flows(dir_path, flows, lf):
    os.makedirs(dir_path, exist_ok=True)
    for index, flow in enumerate(flows):
        row, col = divmod(index, lf.grid_size)
        write_flo(flow_path(dir_path, row, col), flow.w)


def compute_flows(lf, config):
    """Run the matcher of every view against the reference view"""
    reference = to_gray(lf.reference_view)
    flows = []
    for index, offset in enumerate(lf.offsets):
        if index == lf.ref_index:
            flows.append(FlowField.zeros(lf.shape, offset))
            continue
        flow = dense_correspondence(lf.view(index), reference, config.search_radius, config)
        flows.append(FlowField(flow.w, offset))
        logger.debug("view %d (%+d, %+d): mean |w| %.3f", index, offset.dcol, offset.drow,
                     float(flow.magnitude().mean()))
    return flows


def estimate_initial_disparity(lf, flow_config, dmin, dmax, flows=None):
    """Matcher (or given flows), flow averaging, median filter and clamp to [dmin, dmax]"""
    if lf.num_views < 2:
        raise FlowError("no contributing views: the light field has only the reference view")
    if flows is None:
        logger.info("estimating correspondences for %d views (radius %d, %d levels)",
                    lf.num_views - 1, flow_config.search_radius, flow_config.levels)
        flows = compute_flows(lf, flow_config)
    else:
        logger.info("using %d precomputed flow fields, matcher skipped", len(flows))

    d0 = initial_disparity(flows, lf.offsets, flow_config.degeneracy_threshold)
    values = d0.d
    if flow_config.median_size > 1:
        values = ndimage.median_filter(values, size=flow_config.median_size, mode='nearest')
    return DisparityMap.clipped(values, dmin, dmax)
