# warp.py - backward warping to the reference view, the finite-difference operator D
# and the first-order linearization of the warp in disparity

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse

from pylayersep.classes.errors import DimensionError
from pylayersep.classes.lightfield import DisparityMap, GridOffset, LayerStack, unroll


@dataclass(frozen=True, eq=False)
class WarpJacobian:
    """Ĵ_i per channel (C×h·w); J_i = diag(Ĵ_i)"""
    j_hat: np.ndarray
    offset: GridOffset

    def diag(self, channel=0):
        return sparse.diags(self.j_hat[channel])


def _check_length(x, shape, factor=1):
    height, width = shape
    if x.shape[-1] != factor * height * width:
        raise DimensionError(f"expected trailing length {factor * height * width}, got {x.shape[-1]}")


def gradient(x, shape):
    """Forward differences along x then y, concatenated; the last column/row difference is 0.

    Works on the trailing axis, so a K×h·w stack maps to K×2h·w.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_length(x, shape)
    height, width = shape
    image = x.reshape(x.shape[:-1] + (height, width))

    dx = np.zeros_like(image)
    dy = np.zeros_like(image)
    dx[..., :, :-1] = image[..., :, 1:] - image[..., :, :-1]
    dy[..., :-1, :] = image[..., 1:, :] - image[..., :-1, :]
    lead = x.shape[:-1]
    return np.concatenate([dx.reshape(lead + (-1,)), dy.reshape(lead + (-1,))], axis=-1)


def gradient_adjoint(g, shape):
    """Dᵀ applied on the trailing axis"""
    g = np.asarray(g, dtype=np.float64)
    _check_length(g, shape, factor=2)
    height, width = shape
    size = height * width
    lead = g.shape[:-1]
    gx = g[..., :size].reshape(lead + (height, width))
    gy = g[..., size:].reshape(lead + (height, width))

    out = np.zeros(lead + (height, width))
    out[..., :, 1:] += gx[..., :, :-1]
    out[..., :, :-1] -= gx[..., :, :-1]
    out[..., 1:, :] += gy[..., :-1, :]
    out[..., :-1, :] -= gy[..., :-1, :]
    return out.reshape(lead + (size,))


def gradient_matrix(shape):
    """D materialized as a sparse 2h·w × h·w matrix (row-major unrolling)"""
    height, width = shape

    def forward(n):
        diff = sparse.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format='lil')
        diff[n - 1, n - 1] = 0.0
        return diff.tocsr()

    dx = sparse.kron(sparse.identity(height), forward(width))
    dy = sparse.kron(forward(height), sparse.identity(width))
    return sparse.vstack([dx, dy]).tocsr()


def _disparity_array(d, shape):
    values = d.d if isinstance(d, DisparityMap) else np.asarray(d, dtype=np.float64)
    if values.shape != tuple(shape):
        raise DimensionError(f"disparity shape {values.shape} does not match view shape {tuple(shape)}")
    return values


def _sample(image, rows, cols, order):
    """Sample every channel of an h×w×C image at clamped coordinates"""
    return np.stack([ndimage.map_coordinates(image[:, :, c], [rows, cols], order=order,
                                             mode='nearest', prefilter=order > 1)
                     for c in range(image.shape[2])], axis=-1)


def warp_view(view, d, phi, order=1, return_mask=False):
    """V(p) = Ṽ(p − d(p)·φ), bilinear by default, clamped to the border.

    With return_mask the validity mask (sample inside the image) is returned too.
    """
    view = np.asarray(view, dtype=np.float64)
    squeeze = view.ndim == 2
    if squeeze:
        view = view[:, :, None]
    height, width = view.shape[:2]
    disparity = _disparity_array(d, (height, width))

    shift_x = disparity * phi.dcol
    shift_y = disparity * phi.drow
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    sample_cols = cols - shift_x
    sample_rows = rows - shift_y
    mask = ((sample_cols >= 0.0) & (sample_cols <= width - 1) &
            (sample_rows >= 0.0) & (sample_rows <= height - 1))

    if phi.dcol == 0 and phi.drow == 0:
        warped = view.copy()
    else:
        warped = _sample(view, np.clip(sample_rows, 0, height - 1), np.clip(sample_cols, 0, width - 1), order)
        # no displacement means no interpolation
        still = (shift_x == 0.0) & (shift_y == 0.0)
        warped[still] = view[still]

    if squeeze:
        warped = warped[:, :, 0]
    return (warped, mask) if return_mask else warped


def build_stack(lf, d, order=1):
    """The matrix I: row i of each channel is unroll(warp_view(Ṽ_i, d, φ_i))"""
    rows = []
    masks = []
    for index, offset in enumerate(lf.offsets):
        warped, mask = warp_view(lf.view(index), d, offset, order=order, return_mask=True)
        rows.append(warped)
        masks.append(unroll(mask))
    views = np.stack(rows)
    data = np.stack([views[:, :, :, c].reshape(lf.num_views, -1) for c in range(lf.channels)])
    return LayerStack(data, lf.shape, np.stack(masks))


def linearize(lf, d_t, order=1, step=1e-3):
    """I(d_t) plus Ĵ_i = ‖φ_i‖·∇_{−φ_i/‖φ_i‖} Ṽ_i(p − d_t(p)φ_i) for every view.

    The directional derivative is a central difference of the warped view,
    taken `step` disparity units either side of d_t (a spatial step of
    step·‖φ_i‖ along −φ_i/‖φ_i‖).
    """
    stack = build_stack(lf, d_t, order=order)
    disparity = _disparity_array(d_t, lf.shape)

    jacobians = []
    for index, offset in enumerate(lf.offsets):
        if offset.norm == 0.0:
            j_hat = np.zeros((lf.channels, lf.height * lf.width))
        else:
            ahead = warp_view(lf.view(index), disparity + step, offset, order=order)
            behind = warp_view(lf.view(index), disparity - step, offset, order=order)
            derivative = (ahead - behind) / (2.0 * step)
            j_hat = np.stack([unroll(derivative[:, :, c]) for c in range(lf.channels)])
        jacobians.append(WarpJacobian(j_hat, offset))
    return stack, jacobians
