"""Attention-map export as portable graymap images.

Binary P5 by default, ASCII P2 as the portable fallback; no imaging
dependency. The map is nearest-neighbour upsampled and the argmax cell
gets a bright outline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError

UPSCALE = 16


def render_attention(p_att: np.ndarray, argmax_cell: tuple[int, int] | None = None,
                     scale: int = UPSCALE) -> np.ndarray:
    """8-bit image of the probability map, cells upsampled by `scale`."""
    img = np.clip(np.round(p_att * 255.0), 0, 255).astype(np.uint8)
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    if argmax_cell is not None:
        r, c = argmax_cell
        y0, y1 = r * scale, (r + 1) * scale - 1
        x0, x1 = c * scale, (c + 1) * scale - 1
        img[y0, x0:x1 + 1] = 255
        img[y1, x0:x1 + 1] = 255
        img[y0:y1 + 1, x0] = 255
        img[y0:y1 + 1, x1] = 255
    return img


def write_pgm(path, img: np.ndarray, binary: bool = True) -> None:
    h, w = img.shape
    if binary:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())
    else:
        lines = [f"P2\n{w} {h}\n255"]
        for row in img:
            lines.append(" ".join(str(int(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:2] == b"P5":
        parts = blob.split(b"\n", 3)
        w, h = (int(v) for v in parts[1].split())
        return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    if blob[:2] == b"P2":
        tokens = blob.decode("ascii").split()
        w, h = int(tokens[1]), int(tokens[2])
        vals = np.array([int(v) for v in tokens[4:4 + w * h]], dtype=np.uint8)
        return vals.reshape(h, w)
    raise ParseError(f"{path}: not a P2/P5 graymap")
