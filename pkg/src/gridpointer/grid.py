"""Rasterization of OCR tokens onto the feature grid.

Tokens are written largest-area first so that in contested cells a smaller
word survives on top of a larger one. A cell is claimed by a box only when
their area intersection is strictly positive; boxes touching a cell border
do not claim the neighbouring cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import EmbeddingTable, OcrToken, QaExample, embed_word
from .errors import ContractError, DimensionError

_SNAP = 1e-9


def _snap(v: float) -> float:
    r = round(v)
    return r if abs(v - r) < _SNAP else v


def cells_for_box(box: tuple[float, float, float, float], g: int) -> set[tuple[int, int]]:
    """All (row, col) cells whose square overlaps `box` with positive area."""
    x0, y0, x1, y1 = box
    c_lo = int(math.floor(_snap(x0 * g)))
    c_hi = int(math.ceil(_snap(x1 * g))) - 1
    r_lo = int(math.floor(_snap(y0 * g)))
    r_hi = int(math.ceil(_snap(y1 * g))) - 1
    c_lo, r_lo = max(c_lo, 0), max(r_lo, 0)
    c_hi, r_hi = min(c_hi, g - 1), min(r_hi, g - 1)
    return {(r, c) for r in range(r_lo, r_hi + 1) for c in range(c_lo, c_hi + 1)}


@dataclass
class GridAssignment:
    """Per-cell token ownership plus the text-embedding grid."""

    grid_size: int
    cell_token: np.ndarray           # int indices into tokens, -1 for empty
    text_grid: np.ndarray            # G x G x emb_dim float32
    tokens: list[OcrToken]
    gt_mask: np.ndarray | None = None


def build_text_grid(tokens: list[OcrToken], table: EmbeddingTable,
                    g: int) -> GridAssignment:
    """Rasterize token embeddings onto the grid, larger boxes written first
    (ties broken by input order) so smaller words win contested cells."""
    cell_token = np.full((g, g), -1, dtype=np.int32)
    text_grid = np.zeros((g, g, table.dimension), dtype=np.float32)
    order = sorted(
        range(len(tokens)),
        key=lambda i: (-_box_area(tokens[i].box), i),
    )
    for idx in order:
        vec = embed_word(table, tokens[idx].text)
        for (r, c) in cells_for_box(tokens[idx].box, g):
            cell_token[r, c] = idx
            text_grid[r, c, :] = vec
    return GridAssignment(grid_size=g, cell_token=cell_token,
                          text_grid=text_grid, tokens=list(tokens))


def _box_area(box) -> float:
    x0, y0, x1, y1 = box
    return (x1 - x0) * (y1 - y0)


def _fold(s: str) -> str:
    return s.strip().casefold()


def ground_truth_match(example: QaExample) -> list[list[int]]:
    """Runs of consecutive OCR token indices whose space-joined texts equal
    a ground-truth answer (case-insensitive, trimmed). All matches over all
    answers are returned; empty list means the example is not trainable."""
    texts = [_fold(t.text) for t in example.ocr]
    matches = []
    for answer in example.answers:
        target = _fold(answer)
        if not target:
            continue
        for start in range(len(texts)):
            joined = ""
            for stop in range(start, len(texts)):
                joined = texts[stop] if stop == start else joined + " " + texts[stop]
                if len(joined) > len(target):
                    break
                if joined == target:
                    run = list(range(start, stop + 1))
                    if run not in matches:
                        matches.append(run)
    return matches


def build_gt_mask(assignment: GridAssignment, matches: list[list[int]],
                  g: int) -> np.ndarray:
    """Binary target grid: 1 on every cell covered by any matched token's
    box. Defined by the boxes, not by surviving cell ownership."""
    if not matches:
        raise ContractError("build_gt_mask: no matches; example should have been discarded")
    mask = np.zeros((g, g), dtype=np.float32)
    for run in matches:
        for idx in run:
            for (r, c) in cells_for_box(assignment.tokens[idx].box, g):
                mask[r, c] = 1.0
    return mask


def fuse(visual: np.ndarray, text_grid: np.ndarray) -> np.ndarray:
    """Channel-wise concatenation [visual; text], visual channels first."""
    if visual.shape[:2] != text_grid.shape[:2]:
        raise DimensionError(
            f"fuse: spatial extents differ: {visual.shape[:2]} vs {text_grid.shape[:2]}"
        )
    return np.concatenate([visual, text_grid], axis=-1)
