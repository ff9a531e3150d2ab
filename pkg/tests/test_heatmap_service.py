import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.base_model import Heatmap2D
from services.errors import ContractViolation, DatasetIOError
from services.heatmap_service import (
    VXHM_HEADER,
    draw_gaussian,
    loss_2d,
    read_vxhm,
    render_gaussian_heatmap,
    sample_bilinear,
    sample_bilinear_many,
    write_vxhm,
)


def joint(u, v, visible=1.0):
    return np.array([[u, v, visible]])


def test_single_joint_peaks_at_its_pixel():
    heatmap = render_gaussian_heatmap([joint(10.0, 20.0)], 2.0, (1, 40, 40))

    assert heatmap.values.dtype == np.float32
    assert heatmap.values[0, 20, 10] == pytest.approx(1.0)
    assert np.unravel_index(np.argmax(heatmap.values[0]), (40, 40)) == (20, 10)
    assert heatmap.values[0, 20, 12] == pytest.approx(np.exp(-0.5), rel=1e-6)


def test_invisible_joint_is_not_drawn():
    heatmap = render_gaussian_heatmap([joint(10.0, 20.0, visible=0.0)], 2.0, (1, 40, 40))

    assert not heatmap.values.any()


def test_overlapping_persons_combine_by_maximum():
    heatmap = render_gaussian_heatmap([joint(10.0, 10.0), joint(10.0, 10.0)], 2.0, (1, 20, 20))
    assert heatmap.values.max() == pytest.approx(1.0)

    apart = render_gaussian_heatmap([joint(8.0, 10.0), joint(12.0, 10.0)], 2.0, (1, 20, 20))
    assert apart.values[0, 10, 10] == pytest.approx(np.exp(-4.0 / 8.0), rel=1e-6)


def test_joint_outside_the_canvas_only_draws_its_tail():
    heatmap = render_gaussian_heatmap([joint(-3.0, 5.0)], 2.0, (1, 10, 10))

    assert 0 < heatmap.values.max() < 1


def test_render_rejects_non_positive_sigma():
    with pytest.raises(ContractViolation):
        render_gaussian_heatmap([joint(1.0, 1.0)], 0.0, (1, 4, 4))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 40), st.floats(-10, 40)), min_size=1, max_size=4))
def test_rendered_values_stay_in_unit_range(points):
    heatmap = render_gaussian_heatmap([joint(u, v) for u, v in points], 2.0, (1, 30, 30))

    assert heatmap.values.min() >= 0.0
    assert heatmap.values.max() <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=2, max_size=4))
def test_drawing_order_does_not_matter(points):
    forward = np.zeros((20, 20))
    backward = np.zeros((20, 20))
    for u, v in points:
        draw_gaussian(forward, u, v, 2.0)
    for u, v in reversed(points):
        draw_gaussian(backward, u, v, 2.0)

    np.testing.assert_array_equal(forward, backward)


def test_bilinear_sampling_examples():
    values = np.arange(12, dtype=np.float64).reshape(1, 3, 4)
    heatmap = Heatmap2D(values)

    assert sample_bilinear(heatmap, 2.0, 1.0)[0] == 6.0
    assert sample_bilinear(heatmap, 2.5, 1.0)[0] == pytest.approx(6.5)
    assert sample_bilinear(heatmap, 0.0, 0.5)[0] == pytest.approx(2.0)
    assert sample_bilinear(heatmap, 3.0, 2.0)[0] == 11.0


@pytest.mark.parametrize("u, v", [(-0.1, 1.0), (3.01, 1.0), (1.0, -1.0), (1.0, 2.5), (np.nan, 1.0)])
def test_bilinear_outside_the_map_is_zero(u, v):
    values = np.ones((2, 3, 4))

    np.testing.assert_array_equal(sample_bilinear_many(values, np.array([u]), np.array([v])), [[0.0, 0.0]])


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-5, 5),
    u=st.floats(0, 9), v=st.floats(0, 7),
)
def test_bilinear_reproduces_linear_ramps(a, b, c, u, v):
    ys, xs = np.mgrid[0:8, 0:10]
    values = (a * xs + b * ys + c)[None].astype(np.float64)

    sample = sample_bilinear_many(values, np.array([u]), np.array([v]))[0, 0]
    assert sample == pytest.approx(a * u + b * v + c, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), *[st.floats(0, 9)] * 2, *[st.floats(0, 7)] * 2)
def test_bilinear_is_lipschitz_in_the_neighbour_differences(seed, u0, u1, v0, v1):
    values = np.random.default_rng(seed).random((1, 8, 10))
    step_u = np.abs(np.diff(values, axis=2)).max()
    step_v = np.abs(np.diff(values, axis=1)).max()

    a, b = sample_bilinear_many(values, np.array([u0, u1]), np.array([v0, v1]))[:, 0]
    assert abs(a - b) <= step_u * abs(u0 - u1) + step_v * abs(v0 - v1) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(3, 26), st.floats(3, 16))
def test_rendered_joint_outscores_its_four_neighbours(u, v):
    heatmap = render_gaussian_heatmap([joint(u, v)], 2.0, (1, 20, 30))
    us = np.array([u, u - 1, u + 1, u, u])
    vs = np.array([v, v, v, v - 1, v + 1])

    center, *neighbours = sample_bilinear_many(heatmap.values, us, vs)[:, 0]
    assert all(center >= n - 1e-6 for n in neighbours)


def test_loss_2d():
    target = Heatmap2D(np.zeros((2, 4, 4), dtype=np.float32))
    pred = Heatmap2D(np.zeros((2, 4, 4), dtype=np.float32))
    pred.values[1, 2, 3] = 0.5

    assert loss_2d(target, target) == 0.0
    assert loss_2d(pred, target) == pytest.approx(0.5)
    with pytest.raises(ContractViolation):
        loss_2d(pred, Heatmap2D(np.zeros((2, 4, 5), dtype=np.float32)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 6), st.integers(1, 6))
def test_loss_2d_is_symmetric_and_matches_a_naive_sum(seed, channels, height, width):
    rng = np.random.default_rng(seed)
    a, b = (Heatmap2D(rng.random((channels, height, width)).astype(np.float32)) for _ in range(2))
    total = 0.0
    for c in range(channels):
        for y in range(height):
            for x in range(width):
                total += (float(a.values[c, y, x]) - float(b.values[c, y, x])) ** 2

    assert loss_2d(a, b) == loss_2d(b, a)
    assert loss_2d(a, b) == pytest.approx(np.sqrt(total), rel=1e-12)


def test_vxhm_keeps_shape_and_values(tmp_path):
    values = np.random.default_rng(0).random((3, 5, 7)).astype(np.float32)
    path = tmp_path / "map.vxhm"
    write_vxhm(path, values)

    assert path.stat().st_size == VXHM_HEADER.size + values.size * 4
    np.testing.assert_array_equal(read_vxhm(path), values)


def test_vxhm_rejects_foreign_and_truncated_files(tmp_path):
    foreign = tmp_path / "foreign.vxhm"
    foreign.write_bytes(VXHM_HEADER.pack(b"NOPE", 1, 1, 1) + b"\0" * 4)
    with pytest.raises(DatasetIOError):
        read_vxhm(foreign)

    truncated = tmp_path / "truncated.vxhm"
    write_vxhm(truncated, np.ones((1, 2, 2), dtype=np.float32))
    truncated.write_bytes(truncated.read_bytes()[:-3])
    with pytest.raises(DatasetIOError):
        read_vxhm(truncated)

    with pytest.raises(DatasetIOError):
        read_vxhm(tmp_path / "missing.vxhm")
