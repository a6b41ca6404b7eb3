import logging
import os

import numpy as np
import pytest
from scipy import ndimage

from pylayersep.classes.errors import FlowError
from pylayersep.classes.lightfield import GridOffset, grid_offsets
from pylayersep.config import FlowConfig
from pylayersep.extensions.init_flow import (FlowField, dense_correspondence, estimate_initial_disparity,
                                             flow_path, initial_disparity, load_flows, save_flows, to_gray)
from pylayersep.extensions.synth import SyntheticSpec, render


@pytest.fixture
def textured(rng):
    return ndimage.gaussian_filter(rng.uniform(size=(64, 72)), 1.0)


def pure_disparity_flows(d, shape, offsets):
    return [FlowField(np.stack([np.full(shape, -d * o.dcol), np.full(shape, -d * o.drow)], axis=-1), o)
            for o in offsets]


def test_identical_images_give_zero_flow(textured):
    flow = dense_correspondence(textured[:, :64], textured[:, :64], radius=4)
    assert flow.shape == (64, 64)
    assert np.array_equal(flow.w, np.zeros((64, 64, 2)))


def test_shifted_copy(textured):
    src = textured[:, 2:66]
    ref = textured[:, 4:68]
    flow = dense_correspondence(src, ref, radius=8)

    interior = (slice(8, -8), slice(8, -8))
    error = np.hypot(flow.wx - 2.0, flow.wy)[interior]
    assert np.mean(error <= 0.5) >= 0.95


def test_textureless_images_give_zero_flow():
    flat = np.full((48, 48), 0.5)
    flow = dense_correspondence(flat, flat, radius=4)
    assert np.array_equal(flow.w, np.zeros((48, 48, 2)))


def test_correspondence_errors(textured):
    with pytest.raises(FlowError):
        dense_correspondence(textured[:, :64], textured[:, :60], radius=4)
    with pytest.raises(FlowError):
        dense_correspondence(textured[:, :64], textured[:, :64], radius=0)
    with pytest.raises(FlowError):
        dense_correspondence(textured[:, :64], textured[:, :64], radius=64)


def test_to_gray_uses_luma():
    image = np.zeros((2, 2, 3))
    image[..., 1] = 1.0
    assert np.allclose(to_gray(image), 0.587)


def test_pure_disparity_flow_recovers_disparity():
    offsets = grid_offsets(3)
    d0 = initial_disparity(pure_disparity_flows(1.5, (6, 7), offsets), offsets)
    assert np.allclose(d0.d, 1.5)


def test_negative_disparity_keeps_its_sign():
    offsets = grid_offsets(5)
    d0 = initial_disparity(pure_disparity_flows(-0.75, (4, 4), offsets), offsets)
    assert np.allclose(d0.d, -0.75)


def test_zero_flows_give_zero_disparity():
    offsets = grid_offsets(3)
    flows = [FlowField.zeros((5, 5), o) for o in offsets]
    assert np.array_equal(initial_disparity(flows, offsets).d, np.zeros((5, 5)))


def test_reference_only_grid_has_no_contributing_views():
    with pytest.raises(FlowError, match='no contributing views'):
        initial_disparity([FlowField.zeros((4, 4))], [GridOffset(0, 0)])


def test_flow_count_mismatch():
    with pytest.raises(FlowError):
        initial_disparity([FlowField.zeros((4, 4))], grid_offsets(3))


def test_pixels_without_contributions_take_neighbour_median():
    offsets = grid_offsets(3)
    flows = pure_disparity_flows(2.0, (5, 5), offsets)
    for flow in flows:
        flow.w[2, 2] = 0.0
    d0 = initial_disparity(flows, offsets)
    assert d0.d[2, 2] == pytest.approx(2.0)


def test_flow_field_validation():
    with pytest.raises(FlowError):
        FlowField(np.zeros((4, 4, 3)))
    with pytest.raises(FlowError):
        FlowField(np.full((4, 4, 2), np.nan))


def test_flow_files(tmp_path, random_lightfield):
    offsets = random_lightfield.offsets
    flows = pure_disparity_flows(0.5, random_lightfield.shape, offsets)
    save_flows(str(tmp_path), flows, random_lightfield)
    os.remove(flow_path(str(tmp_path), 1, 1))

    loaded = load_flows(str(tmp_path), random_lightfield)
    assert len(loaded) == 9
    assert np.array_equal(loaded[4].w, np.zeros((16, 16, 2)))
    assert np.allclose(loaded[0].w, flows[0].w)

    os.remove(flow_path(str(tmp_path), 0, 2))
    with pytest.raises(FlowError):
        load_flows(str(tmp_path), random_lightfield)


def test_precomputed_flows_skip_the_matcher(random_lightfield, caplog):
    flows = pure_disparity_flows(0.5, random_lightfield.shape, random_lightfield.offsets)
    with caplog.at_level(logging.INFO, logger='pylayersep'):
        d0 = estimate_initial_disparity(random_lightfield, FlowConfig(), -4.0, 4.0, flows=flows)
    assert 'matcher skipped' in caplog.text
    assert np.allclose(d0.d, 0.5)


def test_initial_disparity_is_clamped(random_lightfield):
    flows = pure_disparity_flows(3.0, random_lightfield.shape, random_lightfield.offsets)
    d0 = estimate_initial_disparity(random_lightfield, FlowConfig(), -2.0, 2.0, flows=flows)
    assert np.allclose(d0.d, 2.0)


def test_matcher_estimates_plane_disparity():
    lf, truth = render(SyntheticSpec(alpha=0.0, disparity=1.0))
    d0 = estimate_initial_disparity(lf, FlowConfig(), -4.0, 4.0)
    interior = (slice(8, -8), slice(8, -8))
    assert np.median(np.abs(d0.d - truth.d_true.d)[interior]) < 0.25
