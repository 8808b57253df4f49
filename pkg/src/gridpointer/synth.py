"""Deterministic synthetic corpus generator.

Each image carries a handful of non-overlapping word boxes. Every token is
marked in its own color channel of the feature tensor, at that token's
cells; the question names the answer token's color. The answer is
therefore learnable only from the fused features conditioned on the
question, not from the feature map alone. Every answer is in the OCR set
by construction.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import OcrToken, QaExample, save_dataset, write_features
from .errors import ContractError

COLORS = ["red", "green", "blue", "yellow", "purple", "orange", "cyan", "white"]
MARKER_VALUE = 4.0
NOISE_SCALE = 0.5
# boxes are cell-aligned but shrunk by this fraction of a cell so they
# never touch a neighbouring cell's border
BOX_MARGIN = 0.1


@dataclass
class SynthConfig:
    seed: int = 42
    count: int = 200
    grid_size: int = 19
    c_vis: int = 16
    emb_dim: int = 16


def _random_word(rng: np.random.Generator, used: set) -> str:
    while True:
        length = int(rng.integers(4, 7))
        word = "".join(rng.choice(list(string.ascii_lowercase), size=length))
        if word not in used:
            used.add(word)
            return word


def generate(cfg: SynthConfig) -> tuple[list[QaExample], list[tuple[str, np.ndarray]]]:
    if cfg.count < 1:
        raise ContractError("synthetic corpus needs count >= 1")
    if cfg.c_vis < len(COLORS):
        raise ContractError(f"c_vis must be >= {len(COLORS)} to hold the color channels")
    rng = np.random.default_rng(cfg.seed)
    g = cfg.grid_size
    examples, features = [], []
    for n in range(cfg.count):
        image_id = f"synth_{n:05d}"
        # distinct rows cap the token count on very small grids
        k_hi = min(8, g)
        k_lo = min(3, k_hi)
        k = int(rng.integers(k_lo, k_hi + 1))
        rows = rng.choice(g, size=k, replace=False)
        used_words: set = set()
        tokens = []
        cells_per_token = []
        for row in rows:
            width = int(rng.integers(1, 4))
            col = int(rng.integers(0, g - width + 1))
            box = (
                (col + BOX_MARGIN) / g,
                (row + BOX_MARGIN) / g,
                (col + width - BOX_MARGIN) / g,
                (row + 1 - BOX_MARGIN) / g,
            )
            tokens.append(OcrToken(text=_random_word(rng, used_words), box=box))
            cells_per_token.append([(int(row), c) for c in range(col, col + width)])

        answer_idx = int(rng.integers(0, k))
        # distinct color per token; the question alone singles out the answer
        color_assign = rng.permutation(len(COLORS))[:k]
        color_idx = int(color_assign[answer_idx])
        feat = NOISE_SCALE * rng.standard_normal((g, g, cfg.c_vis)).astype(np.float32)
        for token_idx in range(k):
            for (r, c) in cells_per_token[token_idx]:
                feat[r, c, int(color_assign[token_idx])] += MARKER_VALUE
        examples.append(
            QaExample(
                image_id=image_id,
                question=["which", "word", "is", "marked", COLORS[color_idx]],
                answers=[tokens[answer_idx].text],
                ocr=tokens,
                question_id=f"q{n:05d}",
            )
        )
        features.append((image_id, feat))
    return examples, features


def write_corpus(cfg: SynthConfig, out_dir) -> dict:
    """Write dataset.json, features.bin, and a ready-to-train config.json;
    returns the config dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples, features = generate(cfg)
    save_dataset(examples, out_dir / "dataset.json")
    write_features(out_dir / "features.bin", features)
    run_cfg = {
        "dataset": str(out_dir / "dataset.json"),
        "features": str(out_dir / "features.bin"),
        "out_dir": str(out_dir / "run"),
        "grid_size": cfg.grid_size,
        "c_vis": cfg.c_vis,
        "emb_dim": cfg.emb_dim,
        "q_dim": 32,
        "hidden": 32,
        "att_dim1": 64,
        "att_dim2": 32,
        "fcn_channels": [32, 16],
        "stack": "stacked",
        "seed": cfg.seed,
        "lr": 5e-3,
        "batch_size": 32,
        "epochs": 300,
    }
    import json

    (out_dir / "config.json").write_text(json.dumps(run_cfg, indent=1))
    return run_cfg
