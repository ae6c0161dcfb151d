"""Tests for click records, interaction state, and disk rasterization.
Disk areas are checked against direct lattice-point enumeration."""

import numpy as np
import pytest

from icmf.clicks import (Click, InteractionState, dump_click_trace,
                         encode_interaction, load_click_trace, rasterize_disks)


def disk_area_oracle(radius):
    """Count integer lattice points with dr^2 + dc^2 <= radius^2."""
    count = 0
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr * dr + dc * dc <= radius * radius:
                count += 1
    return count


class TestClickRecord:
    def test_json_roundtrip(self):
        click = Click(3, 7, False, index=2)
        again = Click.from_json(click.to_json(), index=2)
        assert again == click

    def test_json_fields(self):
        assert Click(1, 2, True).to_json() == {"row": 1, "col": 2,
                                               "positive": True}

    def test_frozen(self):
        with pytest.raises(AttributeError):
            Click(0, 0, True).row = 5


class TestInteractionState:
    def test_click_indices_count_up(self):
        state = InteractionState(10, 10)
        a = state.add(1, 1, True)
        b = state.add(2, 2, False)
        assert (a.index, b.index) == (0, 1)
        assert [c.index for c in state.clicks] == [0, 1]

    def test_first_click_must_be_positive(self):
        state = InteractionState(10, 10)
        with pytest.raises(ValueError, match="positive"):
            state.add(1, 1, False)
        state.add(1, 1, True)
        state.add(2, 2, False)  # fine once one positive click exists

    @pytest.mark.parametrize("row,col", [(-1, 0), (0, -1), (10, 0), (0, 10)])
    def test_out_of_bounds_rejected(self, row, col):
        state = InteractionState(10, 10)
        with pytest.raises(ValueError, match="bounds"):
            state.add(row, col, True)

    def test_prev_mask_shape_validated(self):
        state = InteractionState(4, 6)
        with pytest.raises(ValueError, match="shape"):
            state.set_prev_mask(np.zeros((6, 4), dtype=bool))
        state.set_prev_mask(np.zeros((4, 6), dtype=bool))
        assert state.prev_mask.shape == (4, 6)
        state.set_prev_mask(None)
        assert state.prev_mask is None


class TestRasterizeDisks:
    @pytest.mark.parametrize("radius", [0, 1, 2, 3, 5])
    def test_interior_disk_area_matches_lattice_enumeration(self, radius):
        clicks = [Click(20, 20, True)]
        disk = rasterize_disks(clicks, True, 41, 41, radius)
        assert disk.sum() == disk_area_oracle(radius)

    def test_radius_five_area_is_81(self):
        assert disk_area_oracle(5) == 81
        disk = rasterize_disks([Click(10, 10, True)], True, 21, 21, 5)
        assert disk.sum() == 81

    def test_pixel_membership_rule(self):
        disk = rasterize_disks([Click(10, 10, True)], True, 21, 21, 5)
        rr, cc = np.mgrid[0:21, 0:21]
        expected = (rr - 10) ** 2 + (cc - 10) ** 2 <= 25
        np.testing.assert_array_equal(disk.astype(bool), expected)

    def test_disk_clipped_at_border(self):
        disk = rasterize_disks([Click(0, 0, True)], True, 30, 30, 5)
        # only the quadrant with dr >= 0 and dc >= 0 survives
        expected = sum(1 for dr in range(6) for dc in range(6)
                       if dr * dr + dc * dc <= 25)
        assert disk.sum() == expected

    def test_polarity_filter(self):
        clicks = [Click(5, 5, True), Click(15, 15, False)]
        pos = rasterize_disks(clicks, True, 21, 21, 2)
        neg = rasterize_disks(clicks, False, 21, 21, 2)
        assert pos[5, 5] == 1.0 and pos[15, 15] == 0.0
        assert neg[15, 15] == 1.0 and neg[5, 5] == 0.0

    def test_overlapping_disks_union(self):
        clicks = [Click(10, 10, True), Click(10, 12, True)]
        disk = rasterize_disks(clicks, True, 21, 21, 3)
        assert disk.max() == 1.0  # union, not sum
        single = disk_area_oracle(3)
        assert single < disk.sum() < 2 * single

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError, match="radius"):
            rasterize_disks([], True, 4, 4, -1)

    def test_zero_radius_marks_single_pixel(self):
        disk = rasterize_disks([Click(2, 3, True)], True, 5, 6, 0)
        assert disk.sum() == 1.0
        assert disk[2, 3] == 1.0


class TestEncodeInteraction:
    def test_three_channels_with_expected_content(self):
        state = InteractionState(16, 16)
        state.add(4, 4, True)
        state.add(12, 12, False)
        mask = np.zeros((16, 16), dtype=bool)
        mask[0:2, 0:2] = True
        state.set_prev_mask(mask)
        enc = encode_interaction(state, radius=2)
        assert enc.shape == (3, 16, 16)
        assert enc[0, 4, 4] == 1.0 and enc[0, 12, 12] == 0.0
        assert enc[1, 12, 12] == 1.0 and enc[1, 4, 4] == 0.0
        np.testing.assert_array_equal(enc[2], mask.astype(float))

    def test_no_prev_mask_gives_zero_channel(self):
        state = InteractionState(8, 8)
        state.add(3, 3, True)
        enc = encode_interaction(state, radius=1)
        np.testing.assert_array_equal(enc[2], np.zeros((8, 8)))

    def test_values_are_binary(self):
        state = InteractionState(12, 12)
        state.add(5, 5, True)
        state.add(5, 6, True)
        state.add(9, 9, False)
        enc = encode_interaction(state, radius=3)
        assert set(np.unique(enc)) <= {0.0, 1.0}


class TestClickTrace:
    def test_roundtrip_preserves_order_and_polarity(self):
        state = InteractionState(20, 20)
        state.add(1, 2, True)
        state.add(3, 4, False)
        state.add(5, 6, True)
        text = dump_click_trace(state.clicks)
        loaded = load_click_trace(text)
        assert loaded == state.clicks

    def test_trace_is_plain_json(self):
        import json
        text = dump_click_trace([Click(1, 2, True)])
        assert json.loads(text) == [{"row": 1, "col": 2, "positive": True}]
