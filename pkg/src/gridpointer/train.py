"""Training loop: mini-batch gradient averaging over per-example graphs,
adaptive-moment updates, per-epoch train-set scoring, early stopping, and
checkpointing of both the final and the best-scoring parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .checkpoint import save_checkpoint
from .data import QaExample
from .errors import NumericError
from .metrics import score_anls
from .model import PointerModel, ProviderBundle, bce_loss, decode, example_gt_mask
from .optim import OptimizerState, optimizer_step


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 0
    patience: int = 40  # stop after this many epochs without ANLS improvement


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    train_anls: float

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "mean_loss": round(self.mean_loss, 6),
             "train_anls": round(self.train_anls, 6)}
        )


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_anls: float = 0.0
    best_epoch: int = -1
    final_checkpoint: str | None = None
    best_checkpoint: str | None = None


def _prepare(examples: list[QaExample], providers: ProviderBundle):
    prepared = []
    for ex in examples:
        f_m, assignment = providers.build_inputs(ex)
        mask = example_gt_mask(ex, assignment)
        prepared.append((ex, f_m, assignment, mask))
    return prepared


def train(model: PointerModel, examples: list[QaExample], providers: ProviderBundle,
          config: TrainConfig, out_dir=None, quiet: bool = True) -> TrainResult:
    """Train the model in place; inputs must already be filtered so every
    example has a buildable ground-truth mask."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    prepared = _prepare(examples, providers)
    named = model.named_params()
    state = OptimizerState(lr=config.lr)
    result = TrainResult()
    log_lines = []
    stagnant = 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            scale = 1.0 / len(batch)
            for idx in batch:
                ex, f_m, _, mask = prepared[idx]
                p = model.forward(ag.constant(f_m), ex.question, providers.table,
                                  mode="train", rng=rng)
                loss = bce_loss(p, mask)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, example {ex.question_id}"
                    )
                losses.append(value)
                # averaged gradients: scale each example's contribution
                loss.backward(np.asarray(scale, dtype=loss.data.dtype))
            optimizer_step(named, state)

        predictions = {}
        for ex, f_m, assignment, _ in prepared:
            p = model.forward(ag.constant(f_m), ex.question, providers.table, mode="eval")
            out = decode(p.data, assignment)
            predictions[ex.question_id] = out.answer_text or ""
        anls = score_anls(predictions, examples).anls

        record = EpochRecord(epoch=epoch, mean_loss=float(np.mean(losses)),
                             train_anls=anls)
        result.log.append(record)
        log_lines.append(record.to_json())
        if not quiet:
            print(log_lines[-1])

        if anls > result.best_anls or result.best_epoch < 0:
            result.best_anls = anls
            result.best_epoch = epoch
            stagnant = 0
            if out_dir is not None:
                path = out_dir / "best.ckpt"
                save_checkpoint(named, path)
                result.best_checkpoint = str(path)
        else:
            stagnant += 1
        if stagnant >= config.patience or anls >= 1.0:
            break

    if out_dir is not None:
        path = out_dir / "final.ckpt"
        save_checkpoint(named, path)
        result.final_checkpoint = str(path)
        (out_dir / "train_log.jsonl").write_text("\n".join(log_lines) + "\n")
    return result
