import numpy as np
import pytest

from ddlink.frame import FrameConfig
from ddlink.mapping import (GUARD, data_bin_count, demap_bits,
                            full_data_mask, get_constellation, map_bits)

rng = np.random.default_rng(7)


class TestConstellations:
    def test_qpsk_zero_word(self):
        c = get_constellation("qpsk")
        np.testing.assert_allclose(c.bits_to_symbols([0, 0]),
                                   [(1 + 1j) / np.sqrt(2)], atol=1e-12)

    @pytest.mark.parametrize("name", ["qpsk", "16qam"])
    def test_unit_average_energy(self, name):
        c = get_constellation(name)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) <= 1e-12

    @pytest.mark.parametrize("name", ["qpsk", "16qam"])
    def test_roundtrip_all_words(self, name):
        c = get_constellation(name)
        words = np.arange(2 ** c.bits_per_symbol)
        bits = c.indices_to_bits(words)
        np.testing.assert_array_equal(
            c.nearest_indices(c.bits_to_symbols(bits)), words)

    def test_gray_neighbours_differ_by_one_bit(self):
        c = get_constellation("16qam")
        pts = c.points
        for i in range(16):
            for j in range(16):
                if i == j:
                    continue
                if abs(pts[i] - pts[j]) <= 2 / np.sqrt(10) + 1e-9:
                    assert bin(i ^ j).count("1") == 1

    def test_bit_count_mismatch(self):
        with pytest.raises(ValueError):
            get_constellation("16qam").bits_to_symbols([0, 1, 1])

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            get_constellation("64qam")


class TestGridPacking:
    def test_full_grid_roundtrip(self):
        frame = FrameConfig(4, 4)
        c = get_constellation("16qam")
        bits = rng.integers(0, 2, 16 * 4)
        grid = map_bits(bits, c, frame)
        out, _ = demap_bits(grid, c)
        np.testing.assert_array_equal(out, bits)

    def test_mask_skips_reserved_bins(self):
        frame = FrameConfig(4, 4)
        mask = full_data_mask(frame)
        mask[1:3, 1:3] = GUARD
        c = get_constellation("qpsk")
        n_data = data_bin_count(mask)
        assert n_data == 12
        bits = rng.integers(0, 2, n_data * 2)
        grid = map_bits(bits, c, frame, mask)
        assert not grid.data[1:3, 1:3].any()
        out, _ = demap_bits(grid, c, mask)
        np.testing.assert_array_equal(out, bits)

    def test_wrong_bit_count(self):
        frame = FrameConfig(4, 4)
        with pytest.raises(ValueError):
            map_bits(np.zeros(5, dtype=int), get_constellation("qpsk"), frame)

    def test_noisy_hard_decisions(self):
        frame = FrameConfig(8, 8)
        c = get_constellation("qpsk")
        bits = rng.integers(0, 2, 64 * 2)
        grid = map_bits(bits, c, frame)
        noisy = grid.data + 0.05 * (rng.standard_normal((8, 8))
                                    + 1j * rng.standard_normal((8, 8)))
        out, _ = demap_bits(type(grid)(noisy, frame), c)
        np.testing.assert_array_equal(out, bits)
