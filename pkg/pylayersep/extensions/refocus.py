# refocus.py - depth-guided synthetic refocusing of the recovered transmitted layer

import logging
from dataclasses import dataclass

import numba
import numpy as np

from pylayersep.classes.errors import ConfigError, DimensionError
from pylayersep.classes.lightfield import DisparityMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefocusParams:
    focal_disparity: float = 0.0
    aperture: float = 2.0

    def __post_init__(self):
        if not self.aperture > 0:
            raise ConfigError(f"aperture must be > 0, got {self.aperture}")


@numba.njit(parallel=True)
def _disc_gather(image, radius):
    """Average over the in-image disc of radius[r, c] around every pixel; radius < 0.5 passes through"""
    height, width, channels = image.shape
    out = np.empty_like(image)
    for r in numba.prange(height):
        for c in range(width):
            rad = radius[r, c]
            if rad < 0.5:
                for k in range(channels):
                    out[r, c, k] = image[r, c, k]
                continue
            reach = int(np.floor(rad))
            limit = rad * rad
            count = 0
            for k in range(channels):
                out[r, c, k] = 0.0
            for dr in range(-reach, reach + 1):
                rr = r + dr
                if rr < 0 or rr >= height:
                    continue
                for dc in range(-reach, reach + 1):
                    cc = c + dc
                    if cc < 0 or cc >= width or dr * dr + dc * dc > limit:
                        continue
                    count += 1
                    for k in range(channels):
                        out[r, c, k] += image[rr, cc, k]
            for k in range(channels):
                out[r, c, k] /= count
    return out


def blur_radius(d, params):
    values = d.d if isinstance(d, DisparityMap) else np.asarray(d, dtype=np.float64)
    return params.aperture * np.abs(values - params.focal_disparity)


def refocus(T_ref, d, params):
    """Disc blur with radius aperture·|d(p) − focal_disparity| per pixel"""
    image = np.asarray(T_ref, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[:, :, None]
    radius = blur_radius(d, params)
    if radius.shape != image.shape[:2]:
        raise DimensionError(f"disparity shape {radius.shape} does not match image shape {image.shape[:2]}")

    logger.debug("refocus at disparity %.3f, aperture %.3f, max radius %.2f px",
                 params.focal_disparity, params.aperture, float(radius.max()))
    out = _disc_gather(np.ascontiguousarray(image), np.ascontiguousarray(radius))
    return out[:, :, 0] if squeeze else out
