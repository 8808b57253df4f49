"""Box-to-cell rasterization, text grid assembly, and ground-truth masks."""

import numpy as np
import pytest

from gridpointer.data import EmbeddingTable, OcrToken, QaExample, embed_word
from gridpointer.errors import ContractError, DimensionError
from gridpointer.grid import (
    build_gt_mask,
    build_text_grid,
    cells_for_box,
    fuse,
    ground_truth_match,
)


def pixel_oracle_cells(box, g, pixels_per_cell=16):
    """Independent rasterization: pixel-aligned coverage mapped to cells."""
    res = g * pixels_per_cell
    x0, y0, x1, y1 = box
    cells = set()
    for py in range(res):
        for px in range(res):
            # pixel square [px/res, (px+1)/res) x [py/res, (py+1)/res)
            if (min(x1, (px + 1) / res) - max(x0, px / res) > 1e-12
                    and min(y1, (py + 1) / res) - max(y0, py / res) > 1e-12):
                cells.add((py // pixels_per_cell, px // pixels_per_cell))
    return cells


def random_pixel_box(rng, g, pixels_per_cell=16):
    res = g * pixels_per_cell
    x0, x1 = sorted(rng.choice(res + 1, size=2, replace=False))
    y0, y1 = sorted(rng.choice(res + 1, size=2, replace=False))
    return (x0 / res, y0 / res, x1 / res, y1 / res)


class TestCellsForBox:
    def test_single_patch(self):
        # one 16x16 patch of a 608x608 image is exactly one cell at G=38
        assert cells_for_box((0, 0, 16 / 608, 16 / 608), 38) == {(0, 0)}

    def test_full_image_box(self):
        cells = cells_for_box((0, 0, 1, 1), 4)
        assert cells == {(r, c) for r in range(4) for c in range(4)}

    def test_six_cell_box(self):
        cells = cells_for_box((8 / 608, 8 / 608, 40 / 608, 20 / 608), 38)
        assert cells == {(r, c) for r in (0, 1) for c in (0, 1, 2)}

    def test_border_touch_does_not_claim(self):
        # box ends exactly on the cell border between columns 1 and 2
        cells = cells_for_box((0.0, 0.0, 2 / 4, 1 / 4), 4)
        assert cells == {(0, 0), (0, 1)}

    @pytest.mark.parametrize("g", [4, 13, 38, 128])
    def test_matches_pixel_oracle(self, g):
        rng = np.random.default_rng(g)
        for _ in range(12):
            box = random_pixel_box(rng, g, pixels_per_cell=4)
            assert cells_for_box(box, g) == pixel_oracle_cells(box, g, 4)


class TestBuildTextGrid:
    def test_no_tokens(self):
        table = EmbeddingTable.synthetic(4)
        a = build_text_grid([], table, 5)
        assert np.all(a.text_grid == 0.0)
        assert np.all(a.cell_token == -1)

    def test_small_word_overwrites_large(self):
        table = EmbeddingTable.synthetic(4)
        big = OcrToken("bigword", (0.05, 0.05, 0.55, 0.2))   # cells (0,0) and (0,1) at G=4
        small = OcrToken("tiny", (0.3, 0.05, 0.45, 0.15))    # cell (0,1) only
        a = build_text_grid([big, small], table, 4)
        assert a.cell_token[0, 0] == 0
        assert a.cell_token[0, 1] == 1
        np.testing.assert_array_equal(a.text_grid[0, 1], embed_word(table, "tiny"))
        np.testing.assert_array_equal(a.text_grid[0, 0], embed_word(table, "bigword"))

    def test_empty_cells_exactly_zero(self):
        table = EmbeddingTable.synthetic(4)
        a = build_text_grid([OcrToken("w", (0.0, 0.0, 0.2, 0.2))], table, 5)
        for r in range(5):
            for c in range(5):
                if a.cell_token[r, c] == -1:
                    assert np.all(a.text_grid[r, c] == 0.0)
                else:
                    assert np.any(a.text_grid[r, c] != 0.0)

    def test_matches_replay_oracle(self):
        table = EmbeddingTable.synthetic(3, seed=1)
        rng = np.random.default_rng(17)
        g = 8
        tokens = []
        for i in range(5):
            box = random_pixel_box(rng, g, pixels_per_cell=4)
            tokens.append(OcrToken(f"word{i}", box))
        a = build_text_grid(tokens, table, g)
        # replay: same sort key, pixel-oracle rasterization
        expected = np.full((g, g), -1, dtype=int)
        order = sorted(
            range(len(tokens)),
            key=lambda i: (-(tokens[i].box[2] - tokens[i].box[0])
                           * (tokens[i].box[3] - tokens[i].box[1]), i),
        )
        for idx in order:
            for (r, c) in pixel_oracle_cells(tokens[idx].box, g, 4):
                expected[r, c] = idx
        np.testing.assert_array_equal(a.cell_token, expected)


class TestGroundTruthMatch:
    def example(self, answers, texts):
        tokens = [OcrToken(t, (0.1 + 0.05 * i, 0.1, 0.12 + 0.05 * i, 0.2))
                  for i, t in enumerate(texts)]
        return QaExample(image_id="x", question=["q"], answers=answers, ocr=tokens)

    def test_single_token_case_insensitive(self):
        ex = self.example(["COLUMBIA"], ["shop", "Columbia", "sale"])
        assert ground_truth_match(ex) == [[1]]

    def test_two_token_concatenation(self):
        ex = self.example(["new york"], ["welcome", "New", "York", "city"])
        assert ground_truth_match(ex) == [[1, 2]]

    def test_exact_matching_rejects_partial(self):
        ex = self.example(["50p"], ["apples", "50"])
        assert ground_truth_match(ex) == []

    def test_multiple_answers_union(self):
        ex = self.example(["stop", "go"], ["go", "stop"])
        assert ground_truth_match(ex) == [[1], [0]]


class TestBuildGtMask:
    def test_cell_count(self):
        table = EmbeddingTable.synthetic(2)
        tok = OcrToken("word", (8 / 608, 8 / 608, 40 / 608, 20 / 608))  # 6 cells at G=38
        a = build_text_grid([tok], table, 38)
        mask = build_gt_mask(a, [[0]], 38)
        assert mask.sum() == 6

    def test_values_binary(self):
        table = EmbeddingTable.synthetic(2)
        tok = OcrToken("w", (0.1, 0.1, 0.6, 0.6))
        a = build_text_grid([tok], table, 7)
        mask = build_gt_mask(a, [[0]], 7)
        assert set(np.unique(mask)) <= {0.0, 1.0}

    def test_union_of_alternatives(self):
        table = EmbeddingTable.synthetic(2)
        t0 = OcrToken("a", (0.0, 0.0, 0.24, 0.24))
        t1 = OcrToken("b", (0.5, 0.5, 0.74, 0.74))
        a = build_text_grid([t0, t1], table, 4)
        mask = build_gt_mask(a, [[0], [1]], 4)
        assert mask[0, 0] == 1.0 and mask[2, 2] == 1.0
        assert mask.sum() == 2

    def test_empty_matches_contract_error(self):
        table = EmbeddingTable.synthetic(2)
        a = build_text_grid([], table, 4)
        with pytest.raises(ContractError):
            build_gt_mask(a, [], 4)

    def test_mask_defined_by_boxes_not_survivors(self):
        # a small word occludes the matched larger word's cell; the mask
        # still covers the matched word's full box
        table = EmbeddingTable.synthetic(2)
        big = OcrToken("answer", (0.05, 0.05, 0.55, 0.2))
        small = OcrToken("x", (0.3, 0.05, 0.45, 0.15))
        a = build_text_grid([big, small], table, 4)
        assert a.cell_token[0, 1] == 1  # occluded
        mask = build_gt_mask(a, [[0]], 4)
        assert mask[0, 0] == 1.0 and mask[0, 1] == 1.0


class TestFuse:
    def test_channel_count(self):
        v = np.zeros((38, 38, 512), dtype=np.float32)
        t = np.zeros((38, 38, 300), dtype=np.float32)
        assert fuse(v, t).shape == (38, 38, 812)

    def test_zero_text_passthrough(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((4, 4, 3)).astype(np.float32)
        t = np.zeros((4, 4, 2), dtype=np.float32)
        f = fuse(v, t)
        np.testing.assert_array_equal(f[..., :3], v)
        assert np.all(f[..., 3:] == 0.0)

    def test_split_recovers_inputs(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal((4, 4, 5)).astype(np.float32)
        t = rng.standard_normal((4, 4, 2)).astype(np.float32)
        f = fuse(v, t)
        np.testing.assert_array_equal(f[..., :5], v)
        np.testing.assert_array_equal(f[..., 5:], t)

    def test_spatial_mismatch(self):
        with pytest.raises(DimensionError):
            fuse(np.zeros((4, 4, 2)), np.zeros((5, 5, 2)))
