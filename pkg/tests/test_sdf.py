"""Signed distance fields against an independent shortest-path oracle."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from segnoise import (
    DegenerateMaskError,
    centered_disk,
    complement,
    dilate_one,
    erode_one,
    sdf_gap,
    signed_distance,
    threshold,
)
from _oracles import brute_signed_distance, random_mask

nondegenerate_2d = hnp.arrays(
    np.bool_, hnp.array_shapes(min_dims=2, max_dims=2, min_side=2, max_side=10)
).filter(lambda m: m.any() and not m.all())
nondegenerate_3d = hnp.arrays(
    np.bool_, hnp.array_shapes(min_dims=3, max_dims=3, min_side=2, max_side=4)
).filter(lambda m: m.any() and not m.all())


def test_single_pixel_row_field():
    phi = signed_distance(np.array([[0, 0, 1, 0, 0]], dtype=bool))
    assert phi.tolist() == [[2.0, 1.0, -1.0, 1.0, 2.0]]
    assert phi.dtype == np.float64


def test_center_pixel_3x3_field():
    m = np.zeros((3, 3), dtype=bool)
    m[1, 1] = True
    expect = [[2.0, 1.0, 2.0], [1.0, -1.0, 1.0], [2.0, 1.0, 2.0]]
    assert signed_distance(m).tolist() == expect


def test_degenerate_masks_are_rejected():
    with pytest.raises(DegenerateMaskError):
        signed_distance(np.ones((3, 3), dtype=bool))
    with pytest.raises(DegenerateMaskError):
        signed_distance(np.zeros((3, 3), dtype=bool))


@given(nondegenerate_2d)
def test_matches_shortest_path_oracle_2d(m):
    assert np.array_equal(signed_distance(m), brute_signed_distance(m))


@given(nondegenerate_3d)
def test_matches_shortest_path_oracle_3d(m):
    assert np.array_equal(signed_distance(m), brute_signed_distance(m))


@given(nondegenerate_2d)
def test_field_invariants(m):
    phi = signed_distance(m)
    assert (np.abs(phi) >= 1).all()  # the +1 offset leaves no zero layer
    assert np.array_equal(phi < 0, m)  # negative exactly on foreground
    assert np.array_equal(threshold(phi, 0.0, mode="le"), m)
    for axis in range(phi.ndim):
        a = np.moveaxis(phi, axis, 0)
        d = a[1:] - a[:-1]
        assert (np.abs(d) <= 2).all()
        jump = np.abs(d) == 2
        # a jump of 2 happens only across the interface, as a (-1, +1) pair
        assert (a[1:][jump] * a[:-1][jump] == -1).all()


@given(nondegenerate_2d)
def test_complement_negates_the_field(m):
    assert np.array_equal(signed_distance(complement(m)), -signed_distance(m))


@pytest.mark.parametrize("radius", [2, 3, 5])
def test_dilation_shifts_the_field_on_disks(radius):
    m = centered_disk((4 * radius + 3, 4 * radius + 3), radius=radius)
    phi = signed_distance(m)
    plus = signed_distance(dilate_one(m))
    ring = phi == 1
    assert np.array_equal(plus[ring], np.full(int(ring.sum()), -1.0))
    assert np.array_equal(plus[~ring], phi[~ring] - 1)


def centered_diamond(shape, radius):
    r0 = (shape[0] - 1) // 2
    c0 = (shape[1] - 1) // 2
    rr = np.abs(np.arange(shape[0]) - r0)
    cc = np.abs(np.arange(shape[1]) - c0)
    return (rr[:, None] + cc[None, :]) <= radius


@pytest.mark.parametrize("radius", [2, 3, 5])
def test_erosion_shifts_the_field_on_diamonds(radius):
    # Eroding an L1 ball of radius k yields exactly the radius k-1 ball, so
    # every distance moves by one. Euclidean pixelations with width steps of
    # two (e.g. radius 3) break this: their corners retreat diagonally by two.
    m = centered_diamond((4 * radius + 3, 4 * radius + 3), radius)
    phi = signed_distance(m)
    minus = signed_distance(erode_one(m))
    rim = phi == -1
    assert np.array_equal(minus[rim], np.full(int(rim.sum()), 1.0))
    assert np.array_equal(minus[~rim], phi[~rim] + 1)


@pytest.mark.parametrize("radius", [2, 5])
def test_erosion_shift_on_smoothly_stepped_disks(radius):
    m = centered_disk((4 * radius + 3, 4 * radius + 3), radius=radius)
    phi = signed_distance(m)
    minus = signed_distance(erode_one(m))
    rim = phi == -1
    assert np.array_equal(minus[rim], np.full(int(rim.sum()), 1.0))
    assert np.array_equal(minus[~rim], phi[~rim] + 1)


@given(st.integers(0, 2**32 - 1))
def test_dilation_shift_universal_parts(seed):
    # On arbitrary masks the strict shift only survives where geometry is
    # thick enough, but three pieces hold always.
    rng = np.random.default_rng(seed)
    m = random_mask(rng, (7, 8))
    di = dilate_one(m)
    if di.all():
        return
    phi = signed_distance(m)
    plus = signed_distance(di)
    assert np.array_equal(plus[phi >= 2], phi[phi >= 2] - 1)  # surviving background
    assert (plus[phi == 1] <= -1).all()  # annexed ring is foreground now
    assert (plus[m] <= phi[m]).all()  # foreground only deepens
    er = erode_one(m)
    if er.any():
        minus = signed_distance(er)
        assert np.array_equal(minus[phi <= -2], phi[phi <= -2] + 1)
        assert (minus[phi == -1] >= 1).all()
        assert (minus[~m] >= phi[~m]).all()


def test_thin_structures_break_the_strict_shift():
    # A one-pixel background channel: its two flanking rings merge under
    # dilation, so the channel site ends deeper than -1.
    m = np.zeros((7, 9), dtype=bool)
    m[2:5, 1:8] = True
    m[:, 4] = False
    phi = signed_distance(m)
    plus = signed_distance(dilate_one(m))
    assert phi[3, 4] == 1
    assert plus[3, 4] < -1


def test_gap_of_identical_fields_is_zero(disk9):
    phi = signed_distance(disk9)
    assert sdf_gap(phi, phi) == 0.0


def test_gap_of_constant_shift_is_that_constant(disk9):
    phi = signed_distance(disk9)
    assert sdf_gap(phi + 3.0, phi) == 3.0


def test_gap_of_dilated_disk_prediction(disk9):
    phi = signed_distance(disk9)
    plus = signed_distance(dilate_one(disk9))
    assert int(np.sum(phi == 1)) == 12  # hand count on the 13-pixel diamond
    assert np.sum(plus - phi) == -93.0  # 81 sites shift by -1, the ring by -2
    assert sdf_gap(plus, phi) == pytest.approx(-1.0 - 12.0 / 81.0, rel=1e-14)


def test_gap_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sdf_gap(np.zeros((2, 2)), np.zeros((2, 3)))
