"""Dataset, word-embedding, and image-feature loading.

All pretrained externals (the CNN backbone, the OCR engine, the full
embedding table) are replaced by file-based or seeded-synthetic providers
with the same output contracts.

File formats:
  dataset    JSON, {"examples": [{"image_id", "question", "answers",
             "ocr": [{"text", "box": [x0, y0, x1, y1]}]}]}; the question
             string is whitespace-tokenized on load.
  embeddings text, one line per word: the word then `dimension` floats.
  features   binary, magic "GFEA1", then per-image records:
             u32 id_len, id bytes (utf-8), u32 G, u32 C, G*G*C float32 LE.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FeatureLookupError, ParseError

FEATURE_MAGIC = b"GFEA1"


@dataclass(frozen=True)
class OcrToken:
    """One recognized word: transcription plus a normalized bounding box."""

    text: str
    box: tuple[float, float, float, float]  # (x0, y0, x1, y1) in [0, 1]


@dataclass
class QaExample:
    image_id: str
    question: list[str]
    answers: list[str]
    ocr: list[OcrToken]
    question_id: str = ""


def _validate_token(tok: OcrToken, where: str) -> None:
    x0, y0, x1, y1 = tok.box
    if not tok.text.strip():
        raise ParseError(f"{where}: field 'text' is empty")
    if not (x0 < x1 and y0 < y1):
        raise ParseError(f"{where}: field 'box' is degenerate: {tok.box}")
    if not (0.0 <= x0 and x1 <= 1.0 and 0.0 <= y0 and y1 <= 1.0):
        raise ParseError(f"{where}: field 'box' outside [0,1]: {tok.box}")


def load_dataset(path) -> list[QaExample]:
    """Load and validate an annotation file; raises ParseError with the
    offending example index and field name."""
    path = Path(path)
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "examples" not in doc:
        raise ParseError(f"{path}: missing top-level 'examples' array")
    out = []
    for i, rec in enumerate(doc["examples"]):
        where = f"example {i}"
        try:
            image_id = str(rec["image_id"])
            question = str(rec["question"]).split()
            answers = [str(a) for a in rec["answers"]]
            ocr_raw = rec.get("ocr", [])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{where}: field {exc}") from exc
        if not question:
            raise ParseError(f"{where}: field 'question' is empty")
        if not answers:
            raise ParseError(f"{where}: field 'answers' is empty")
        tokens = []
        for j, t in enumerate(ocr_raw):
            try:
                tok = OcrToken(text=str(t["text"]), box=tuple(float(v) for v in t["box"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{where}: ocr[{j}]: field {exc}") from exc
            if len(tok.box) != 4:
                raise ParseError(f"{where}: ocr[{j}]: field 'box' needs 4 values")
            _validate_token(tok, f"{where}: ocr[{j}]")
            tokens.append(tok)
        out.append(
            QaExample(
                image_id=image_id,
                question=question,
                answers=answers,
                ocr=tokens,
                question_id=f"q{i:05d}",
            )
        )
    return out


def save_dataset(examples: list[QaExample], path) -> None:
    doc = {
        "examples": [
            {
                "image_id": e.image_id,
                "question": " ".join(e.question),
                "answers": list(e.answers),
                "ocr": [{"text": t.text, "box": list(t.box)} for t in e.ocr],
            }
            for e in examples
        ]
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


# -- word embeddings -------------------------------------------------------


@dataclass
class EmbeddingTable:
    """Word -> vector lookup with a deterministic subword fallback.

    Out-of-vocabulary words are embedded as the mean of hashed character
    n-gram bucket vectors (n in [3, 6], word wrapped in boundary markers),
    so the lookup is total and repeatable.
    """

    dimension: int = 300
    vectors: dict = field(default_factory=dict)
    ngram_min: int = 3
    ngram_max: int = 6
    buckets: int = 2 ** 15
    seed: int = 0
    _bucket_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def load(cls, path, seed: int = 0) -> "EmbeddingTable":
        vectors = {}
        dimension = None
        with open(path) as f:
            for lineno, line in enumerate(f):
                parts = line.split()
                if not parts:
                    continue
                word, vals = parts[0], parts[1:]
                if dimension is None:
                    dimension = len(vals)
                elif len(vals) != dimension:
                    raise ParseError(
                        f"{path}: line {lineno}: expected {dimension} values, got {len(vals)}"
                    )
                vectors[word] = np.array([float(v) for v in vals], dtype=np.float32)
        if dimension is None:
            raise ParseError(f"{path}: empty embedding file")
        return cls(dimension=dimension, vectors=vectors, seed=seed)

    @classmethod
    def synthetic(cls, dimension: int, seed: int = 0) -> "EmbeddingTable":
        """Empty table: every word goes through the subword fallback."""
        return cls(dimension=dimension, seed=seed)

    def _bucket_vector(self, bucket: int) -> np.ndarray:
        vec = self._bucket_cache.get(bucket)
        if vec is None:
            rng = np.random.default_rng((self.seed, bucket))
            vec = rng.standard_normal(self.dimension).astype(np.float32)
            vec /= np.sqrt(self.dimension)
            self._bucket_cache[bucket] = vec
        return vec


def embed_word(table: EmbeddingTable, word: str) -> np.ndarray:
    word = word.strip()
    if not word:
        return np.zeros(table.dimension, dtype=np.float32)
    if word in table.vectors:
        return table.vectors[word]
    marked = f"<{word}>"
    grams = []
    for n in range(table.ngram_min, table.ngram_max + 1):
        for i in range(len(marked) - n + 1):
            grams.append(marked[i:i + n])
    if not grams:
        grams = [marked]
    acc = np.zeros(table.dimension, dtype=np.float64)
    for gram in grams:
        bucket = zlib.crc32(gram.encode("utf-8")) % table.buckets
        acc += table._bucket_vector(bucket)
    return (acc / len(grams)).astype(np.float32)


# -- image features --------------------------------------------------------


def write_features(path, records: list[tuple[str, np.ndarray]]) -> None:
    """Write per-image feature tensors (each G x G x C float32)."""
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        for image_id, arr in records:
            g, g2, c = arr.shape
            if g != g2:
                raise ParseError(f"feature for {image_id} is not square: {arr.shape}")
            ident = image_id.encode("utf-8")
            f.write(len(ident).to_bytes(4, "little"))
            f.write(ident)
            f.write(int(g).to_bytes(4, "little"))
            f.write(int(c).to_bytes(4, "little"))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_features(path) -> dict[tuple[str, int], np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:5] != FEATURE_MAGIC:
        raise ParseError(f"{path}: bad magic, expected {FEATURE_MAGIC!r}")
    pos = 5
    records = {}
    while pos < len(blob):
        id_len = int.from_bytes(blob[pos:pos + 4], "little")
        pos += 4
        image_id = blob[pos:pos + id_len].decode("utf-8")
        pos += id_len
        g = int.from_bytes(blob[pos:pos + 4], "little")
        c = int.from_bytes(blob[pos + 4:pos + 8], "little")
        pos += 8
        count = g * g * c
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(g, g, c)
        pos += 4 * count
        records[(image_id, g)] = arr
    return records


@dataclass
class FeatureProvider:
    """Serves the visual feature grid for an image id.

    `file` mode reads records written by write_features; `synthetic` mode
    derives a tensor deterministically from (seed, image_id, G).
    """

    mode: str = "synthetic"
    grid_size: int = 38
    channels: int = 512
    seed: int = 0
    records: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path, grid_size: int | None = None) -> "FeatureProvider":
        records = read_features(path)
        if not records:
            raise ParseError(f"{path}: no feature records")
        (first_id, g0), first = next(iter(records.items()))
        return cls(
            mode="file",
            grid_size=grid_size if grid_size is not None else g0,
            channels=first.shape[2],
            records=records,
        )

    @classmethod
    def synthetic(cls, grid_size: int, channels: int, seed: int = 0) -> "FeatureProvider":
        return cls(mode="synthetic", grid_size=grid_size, channels=channels, seed=seed)

    def at_scale(self, grid_size: int) -> "FeatureProvider":
        """Same source, different grid size."""
        return FeatureProvider(
            mode=self.mode,
            grid_size=grid_size,
            channels=self.channels,
            seed=self.seed,
            records=self.records,
        )


def get_features(fp: FeatureProvider, image_id: str) -> np.ndarray:
    g, c = fp.grid_size, fp.channels
    if fp.mode == "synthetic":
        rng = np.random.default_rng((fp.seed, zlib.crc32(image_id.encode("utf-8")), g))
        return rng.standard_normal((g, g, c)).astype(np.float32)
    key = (image_id, g)
    if key not in fp.records:
        raise FeatureLookupError(f"no feature record for image {image_id!r} at G={g}")
    return fp.records[key]


def filter_trainable(examples: list[QaExample]) -> tuple[list[QaExample], list[QaExample]]:
    """Split examples into (kept, discarded): kept iff some ground-truth
    answer can be formed from consecutive OCR tokens."""
    from .grid import ground_truth_match

    kept, discarded = [], []
    for ex in examples:
        if ground_truth_match(ex):
            kept.append(ex)
        else:
            discarded.append(ex)
    return kept, discarded
