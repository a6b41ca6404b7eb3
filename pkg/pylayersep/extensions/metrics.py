# metrics.py - layer and disparity error measures against synthetic ground truth

import csv
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from pylayersep.classes.errors import DimensionError
from pylayersep.classes.lightfield import DisparityMap

LAYER_THRESHOLD = 0.1
DISPARITY_THRESHOLD = 1.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SWEEP_FIELDS = ['alpha', 'incorrect_pct_T', 'incorrect_pct_S', 'bad_pixel_pct_d', 'error']


def _as_image(image):
    image = np.asarray(image, dtype=np.float64)
    return image[:, :, None] if image.ndim == 2 else image


def _luma(image):
    if image.shape[2] == 1:
        return image
    return (image[:, :, :3] @ LUMA_WEIGHTS)[:, :, None]


def _conform(recovered, truth):
    recovered = _as_image(recovered)
    truth = _as_image(truth)
    if recovered.shape[:2] != truth.shape[:2]:
        raise DimensionError(f"image sizes differ: {recovered.shape[:2]} vs {truth.shape[:2]}")
    if recovered.shape[2] != truth.shape[2]:
        recovered, truth = _luma(recovered), _luma(truth)
    return recovered, truth


def _valid(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise DimensionError(f"mask shape {mask.shape} does not match image shape {shape}")
    return mask


def incorrect_pixel_pct(recovered, truth, thresh=LAYER_THRESHOLD, mask=None):
    """Percentage of valid pixels whose largest channel error exceeds thresh"""
    recovered, truth = _conform(recovered, truth)
    valid = _valid(mask, truth.shape[:2])
    if not valid.any():
        return 0.0
    error = np.abs(recovered - truth).max(axis=2)
    return 100.0 * np.count_nonzero(error[valid] > thresh) / np.count_nonzero(valid)


def bad_pixel_pct(d, d_true, delta=DISPARITY_THRESHOLD, mask=None):
    d = d.d if isinstance(d, DisparityMap) else np.asarray(d, dtype=np.float64)
    d_true = d_true.d if isinstance(d_true, DisparityMap) else np.asarray(d_true, dtype=np.float64)
    if d.shape != d_true.shape:
        raise DimensionError(f"disparity sizes differ: {d.shape} vs {d_true.shape}")
    valid = _valid(mask, d.shape)
    if not valid.any():
        return 0.0
    return 100.0 * np.count_nonzero(np.abs(d - d_true)[valid] > delta) / np.count_nonzero(valid)


def mean_abs_error(d, d_true, mask=None):
    d = d.d if isinstance(d, DisparityMap) else np.asarray(d, dtype=np.float64)
    d_true = d_true.d if isinstance(d_true, DisparityMap) else np.asarray(d_true, dtype=np.float64)
    if d.shape != d_true.shape:
        raise DimensionError(f"disparity sizes differ: {d.shape} vs {d_true.shape}")
    valid = _valid(mask, d.shape)
    return float(np.abs(d - d_true)[valid].mean()) if valid.any() else 0.0


def psnr(recovered, truth, mask=None, peak=1.0):
    """Peak signal-to-noise ratio in dB; exact recovery gives inf"""
    recovered, truth = _conform(recovered, truth)
    valid = _valid(mask, truth.shape[:2])
    mse = float(np.mean(np.square(recovered - truth)[valid]))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


@dataclass(frozen=True)
class EvalReport:
    incorrect_pixel_pct_T: float
    incorrect_pixel_pct_S: float
    psnr_T: float
    psnr_S: float
    bad_pixel_pct_d: float
    mean_abs_err_d: float

    def to_dict(self):
        # JSON has no infinity
        return {key: (None if isinstance(value, float) and math.isinf(value) else value)
                for key, value in asdict(self).items()}

    def sweep_row(self, alpha):
        return {
            'alpha': alpha,
            'incorrect_pct_T': self.incorrect_pixel_pct_T,
            'incorrect_pct_S': self.incorrect_pixel_pct_S,
            'bad_pixel_pct_d': self.bad_pixel_pct_d,
            'error': '',
        }


def evaluate(result, truth, mask=None, thresh=LAYER_THRESHOLD, delta=DISPARITY_THRESHOLD):
    """Compare recovered T, S and d with the (pre-weighted) ground truth"""
    if mask is None:
        mask = getattr(result, 'valid_mask', None)
    return EvalReport(
        incorrect_pixel_pct_T=incorrect_pixel_pct(result.T_ref, truth.T_ref, thresh, mask),
        incorrect_pixel_pct_S=incorrect_pixel_pct(result.S_ref, truth.S_ref, thresh, mask),
        psnr_T=psnr(result.T_ref, truth.T_ref, mask),
        psnr_S=psnr(result.S_ref, truth.S_ref, mask),
        bad_pixel_pct_d=bad_pixel_pct(result.d, truth.d_true, delta, mask),
        mean_abs_err_d=mean_abs_error(result.d, truth.d_true, mask),
    )


def write_sweep_csv(path, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, '') for key in SWEEP_FIELDS})


def append_csv_row(path, report, alpha):
    """Append one sweep row, writing the header for a new file"""
    exists = os.path.exists(path)
    with open(path, 'a', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        if not exists:
            writer.writeheader()
        writer.writerow(report.sweep_row(alpha))


def read_sweep_csv(path):
    with open(path, 'r', newline='') as f:
        return list(csv.DictReader(f))
