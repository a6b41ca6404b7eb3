import json
import os

import numpy as np
import pytest

from pylayersep.classes.errors import DimensionError, LightFieldError
from pylayersep.classes.lightfield import (DisparityMap, GridOffset, LayerStack, LightField, grid_offsets,
                                           load_disparity, load_lightfield, roll, save_disparity,
                                           save_lightfield, stack_from_views, unroll, view_index)
from pylayersep.extensions.common import read_pfm, write_image


def write_grid(path, views, grid_size=3, manifest=True):
    os.makedirs(path, exist_ok=True)
    for index, view in enumerate(views):
        row, col = divmod(index, grid_size)
        write_image(os.path.join(path, f'view_{row}_{col}.png'), view)
    if manifest:
        with open(os.path.join(path, 'lf.json'), 'w') as f:
            json.dump({'grid_size': grid_size}, f)


def test_load_nine_views(tmp_path, rng):
    views = rng.uniform(0.0, 1.0, size=(9, 64, 64))
    write_grid(tmp_path, views)

    lf = load_lightfield(str(tmp_path))
    assert lf.num_views == 9
    assert lf.ref_index == 4
    assert lf.shape == (64, 64)
    assert lf.channels == 1
    assert lf.views.min() >= 0.0 and lf.views.max() <= 1.0
    assert np.max(np.abs(lf.views[..., 0] - views)) <= 0.5 / 255 + 1e-12


def test_missing_view(tmp_path, rng):
    write_grid(tmp_path, rng.uniform(size=(9, 16, 16)))
    os.remove(os.path.join(tmp_path, 'view_2_2.png'))

    with pytest.raises(LightFieldError, match='missing view') as excinfo:
        load_lightfield(str(tmp_path))
    assert excinfo.value.path.endswith('view_2_2.png')


def test_inconsistent_dimensions(tmp_path, rng):
    write_grid(tmp_path, rng.uniform(size=(9, 64, 64)))
    write_image(os.path.join(tmp_path, 'view_1_0.png'), rng.uniform(size=(32, 32)))

    with pytest.raises(LightFieldError, match='inconsistent dimensions'):
        load_lightfield(str(tmp_path))


def test_empty_directory_is_missing_view(tmp_path):
    with pytest.raises(LightFieldError, match='missing view'):
        load_lightfield(str(tmp_path))


def test_grid_size_inferred_without_manifest(tmp_path, rng):
    write_grid(tmp_path, rng.uniform(size=(25, 8, 8)), grid_size=5, manifest=False)
    lf = load_lightfield(str(tmp_path))
    assert lf.grid_size == 5
    assert lf.ref_index == 12


@pytest.mark.parametrize('grid_size', [1, 2, 4])
def test_bad_grid_size(grid_size):
    with pytest.raises(LightFieldError):
        LightField(np.zeros((grid_size ** 2, 8, 8, 1)), grid_size)


def test_out_of_range_intensity():
    views = np.zeros((9, 8, 8, 1))
    views[3, 2, 2, 0] = 1.5
    with pytest.raises(LightFieldError):
        LightField(views, 3)


def test_grid_offsets_lattice():
    offsets = grid_offsets(3)
    assert offsets[4] == GridOffset(0, 0)
    assert {(o.dcol, o.drow) for o in offsets} == {(c, r) for r in (-1, 0, 1) for c in (-1, 0, 1)}
    # row-major: index 5 is one column to the right of the centre
    assert offsets[5] == GridOffset(1, 0)
    assert offsets[view_index(0, 1, 3)] == GridOffset(0, -1)


def test_unroll_is_row_major():
    image = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(unroll(image), np.arange(12.0))
    assert np.array_equal(roll(unroll(image), (3, 4)), image)


def test_unroll_rejects_mismatch():
    with pytest.raises(DimensionError):
        unroll(np.zeros((3, 4, 2)))
    with pytest.raises(DimensionError):
        unroll(np.zeros((3, 4)), shape=(4, 3))
    with pytest.raises(DimensionError):
        roll(np.zeros(11), (3, 4))


def test_disparity_map_validation():
    with pytest.raises(LightFieldError):
        DisparityMap(np.array([[0.0, np.nan]]))
    with pytest.raises(LightFieldError):
        DisparityMap(np.full((2, 2), 5.0), dmin=-4.0, dmax=4.0)

    clipped = DisparityMap.clipped(np.array([[-9.0, 0.5, 9.0]]), -4.0, 4.0)
    assert np.array_equal(clipped.d, [[-4.0, 0.5, 4.0]])


def test_stack_rows_are_unrolled_views(rng):
    views = rng.uniform(size=(9, 6, 5, 3))
    stack = stack_from_views(views)
    assert stack.data.shape == (3, 9, 30)
    assert np.array_equal(stack.data[1, 7], views[7, :, :, 1].reshape(-1))
    assert np.array_equal(stack.roll_row(7), views[7])


def test_layer_stack_mask_shape():
    with pytest.raises(DimensionError):
        LayerStack(np.zeros((1, 9, 16)), (4, 4), mask=np.ones((9, 15), dtype=bool))
    assert LayerStack(np.zeros((9, 16)), (4, 4)).channels == 1


def test_save_and_load_pfm_views(tmp_path, rng):
    lf = LightField(rng.uniform(size=(9, 12, 10, 3)), 3)
    save_lightfield(lf, str(tmp_path), fmt='pfm')

    loaded = load_lightfield(str(tmp_path))
    assert loaded.channels == 3
    assert np.allclose(loaded.views, lf.views, atol=1e-6)


def test_disparity_pfm(tmp_path):
    d = DisparityMap(np.linspace(-1.0, 2.0, 20).reshape(4, 5))
    path = os.path.join(tmp_path, 'd.pfm')
    save_disparity(path, d)

    loaded = load_disparity(path, -4.0, 4.0)
    assert np.allclose(loaded.d, d.d, atol=1e-6)


@pytest.mark.parametrize('header', [
    b'Pf\n',
    b'Pf\n4\n-1.0\n',
    b'Pf\nfour 5\n-1.0\n',
    b'Pf\n4 5\nscale\n',
    b'Pf\n4 5 6\n-1.0\n',
    b'Pf\n0 5\n-1.0\n',
])
def test_malformed_pfm_header(tmp_path, header):
    path = tmp_path / 'broken.pfm'
    path.write_bytes(header + np.zeros(20, dtype='<f4').tobytes())
    with pytest.raises(LightFieldError, match='malformed PFM header'):
        read_pfm(str(path))
