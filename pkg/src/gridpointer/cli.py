"""Command-line entry points.

Subcommands: train, eval, predict, viz, synth, analyze. A JSON config
file supplies defaults; command-line flags override file values. Exit
codes: 0 ok, 2 usage/path/config problems, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autograd as ag
from .checkpoint import apply_checkpoint, load_checkpoint, save_checkpoint
from .data import EmbeddingTable, FeatureProvider, QaExample, load_dataset, filter_trainable
from .errors import GridPointerError, NumericError
from .metrics import EnsembleInput, answer_recall, ensemble_select, score_anls
from .model import PointerModel, ProviderBundle, predict
from .synth import SynthConfig, write_corpus
from .train import TrainConfig, train
from .viz import render_attention, write_pgm

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    """Paths plus model/training/metric settings; JSON round-trippable."""

    dataset: str | None = None
    embeddings: str | None = None
    features: str | None = None
    checkpoint: str | None = None
    out_dir: str = "run"
    grid_size: int = 38
    c_vis: int = 512
    emb_dim: int = 300
    q_dim: int = 1024
    hidden: int = 256
    att_dim1: int = 1024
    att_dim2: int = 512
    fcn_channels: tuple = (512, 256)
    stack: str = "stacked"  # single | stacked | fcn
    seed: int = 0
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 300
    patience: int = 40
    anls_threshold: float | None = None
    ensemble_preds: str | None = None
    ensemble_tau: float = 0.37

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise GridPointerError(f"config {path}: unknown keys {sorted(unknown)}")
        cfg = cls(**doc)
        if isinstance(cfg.fcn_channels, list):
            cfg.fcn_channels = tuple(cfg.fcn_channels)
        return cfg

    def to_file(self, path) -> None:
        doc = asdict(self)
        doc["fcn_channels"] = list(self.fcn_channels)
        Path(path).write_text(json.dumps(doc, indent=1))


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        "dataset": args.dataset,
        "features": args.features,
        "embeddings": getattr(args, "embeddings", None),
        "checkpoint": getattr(args, "checkpoint", None),
        "out_dir": getattr(args, "out_dir", None),
        "grid_size": getattr(args, "grid_size", None),
        "stack": getattr(args, "stack", None),
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "anls_threshold": getattr(args, "anls_threshold", None),
        "ensemble_preds": getattr(args, "ensemble_preds", None),
        "ensemble_tau": getattr(args, "ensemble_tau", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _require_path(path, what: str) -> Path:
    if path is None:
        raise GridPointerError(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        raise GridPointerError(f"{what} path does not exist: {p}")
    return p


def _build_bundle(cfg: RunConfig) -> ProviderBundle:
    if cfg.features:
        fp = FeatureProvider.from_file(_require_path(cfg.features, "features"),
                                       grid_size=cfg.grid_size)
    else:
        fp = FeatureProvider.synthetic(cfg.grid_size, cfg.c_vis, cfg.seed)
    if cfg.embeddings:
        table = EmbeddingTable.load(_require_path(cfg.embeddings, "embeddings"))
    else:
        table = EmbeddingTable.synthetic(cfg.emb_dim, seed=cfg.seed)
    return ProviderBundle(features=fp, table=table)


def _build_model(cfg: RunConfig, table_dim: int, c_vis: int) -> PointerModel:
    return PointerModel.create(
        c_vis=c_vis,
        emb_dim=table_dim,
        q_dim=cfg.q_dim,
        hidden=cfg.hidden,
        mode="stacked" if cfg.stack == "stacked" else cfg.stack,
        d1=cfg.att_dim1,
        d2=cfg.att_dim2,
        fcn_channels=tuple(cfg.fcn_channels),
        seed=cfg.seed,
    )


def _pointer_predictions(model, examples, bundle):
    out = {}
    for ex in examples:
        res = predict(model, ex, bundle)
        out[ex.question_id] = (res.answer_text or "", res.confidence)
    return out


def cmd_train(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(_require_path(cfg.dataset, "dataset"))
    bundle = _build_bundle(cfg)
    kept, discarded = filter_trainable(examples)
    if not args.quiet:
        print(f"discarded {len(discarded)} of {len(examples)} examples "
              "(answer not in OCR tokens)")
    model = _build_model(cfg, bundle.table.dimension, bundle.features.channels)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     lr=cfg.lr, seed=cfg.seed, patience=cfg.patience)
    result = train(model, kept, bundle, tc, out_dir=cfg.out_dir, quiet=args.quiet)
    if not args.quiet:
        print(f"best train ANLS {result.best_anls:.4f} at epoch {result.best_epoch}")
        print(f"checkpoint: {result.final_checkpoint}")
    return EXIT_OK


def _load_model_from_checkpoint(cfg: RunConfig, bundle) -> PointerModel:
    model = _build_model(cfg, bundle.table.dimension, bundle.features.channels)
    values = load_checkpoint(_require_path(cfg.checkpoint, "checkpoint"))
    apply_checkpoint(model.named_params(), values)
    return model


def _read_predictions_file(path) -> dict[str, tuple[str, float]]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out[rec["question_id"]] = (rec["answer"], float(rec.get("confidence", 0.0)))
    return out


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(_require_path(cfg.dataset, "dataset"))
    bundle = _build_bundle(cfg)
    model = _load_model_from_checkpoint(cfg, bundle)
    pointer = _pointer_predictions(model, examples, bundle)
    predictions = {qid: ans for qid, (ans, _) in pointer.items()}

    if cfg.ensemble_preds:
        classifier = _read_predictions_file(
            _require_path(cfg.ensemble_preds, "ensemble predictions"))
        inputs = [
            EnsembleInput(
                question_id=ex.question_id,
                classifier_answer=classifier.get(ex.question_id, ("", 0.0))[0],
                classifier_confidence=classifier.get(ex.question_id, ("", 0.0))[1],
                pointer_answer=pointer[ex.question_id][0],
                pointer_confidence=pointer[ex.question_id][1],
            )
            for ex in examples
        ]
        predictions = ensemble_select(inputs, tau=cfg.ensemble_tau)

    from .grid import ground_truth_match

    tags = {ex.question_id: (["answer-in-ocr"] if ground_truth_match(ex) else [])
            for ex in examples}
    report = score_anls(predictions, examples, tau_anls=cfg.anls_threshold, tags=tags)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=1))
    if not args.quiet:
        print(f"ANLS {report.anls:.4f}  accuracy {report.accuracy:.2f}%")
        for tag, sub in report.subsets.items():
            print(f"  [{tag}] ANLS {sub['anls']:.4f}  "
                  f"accuracy {sub['accuracy']:.2f}%  n={sub['count']}")
        print(f"report: {report_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(_require_path(cfg.dataset, "dataset"))
    bundle = _build_bundle(cfg)
    model = _load_model_from_checkpoint(cfg, bundle)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "predictions.jsonl"
    with open(out_path, "w") as f:
        for ex in examples:
            res = predict(model, ex, bundle)
            f.write(json.dumps({
                "question_id": ex.question_id,
                "answer": res.answer_text or "",
                "confidence": round(res.confidence, 6),
            }) + "\n")
    if not args.quiet:
        print(f"predictions: {out_path}")
    return EXIT_OK


def cmd_viz(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(_require_path(cfg.dataset, "dataset"))
    if not 0 <= args.example < len(examples):
        raise GridPointerError(
            f"example index {args.example} out of range (0..{len(examples) - 1})")
    bundle = _build_bundle(cfg)
    model = _load_model_from_checkpoint(cfg, bundle)
    ex = examples[args.example]
    res = predict(model, ex, bundle)
    img = render_attention(res.p_att, res.argmax_cell)
    write_pgm(args.out, img, binary=not args.ascii)
    if not args.quiet:
        print(f"wrote {args.out} ({img.shape[1]}x{img.shape[0]}), "
              f"answer {res.answer_text!r} at cell {res.argmax_cell}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig(seed=args.seed, count=args.count, grid_size=args.grid_size)
    run_cfg = write_corpus(cfg, args.out_dir)
    if not args.quiet:
        print(f"wrote {args.count} examples to {args.out_dir}")
        print(f"train with: gridpointer train --config {Path(args.out_dir) / 'config.json'}")
    _ = run_cfg
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(_require_path(cfg.dataset, "dataset"))
    recall, bound = answer_recall(examples, tau_anls=cfg.anls_threshold)
    result = {"answer_recall": recall, "anls_upper_bound": bound,
              "examples": len(examples)}
    print(json.dumps(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridpointer",
        description="Scene-text VQA with multimodal grid features and cell pointers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--dataset", help="annotation file")
        p.add_argument("--features", help="binary feature file")
        p.add_argument("--embeddings", help="text embedding file")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--grid-size", dest="grid_size", type=int)
        p.add_argument("--stack", choices=["single", "stacked", "fcn"])
        p.add_argument("--seed", type=int)
        p.add_argument("--anls-threshold", dest="anls_threshold", type=float)
        p.add_argument("--quiet", action="store_true")
        if checkpoint:
            p.add_argument("--checkpoint")

    p_train = sub.add_parser("train", help="train a model")
    common(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset")
    common(p_eval, checkpoint=True)
    p_eval.add_argument("--ensemble-preds", dest="ensemble_preds",
                        help="classifier predictions file for ensemble mode")
    p_eval.add_argument("--ensemble-tau", dest="ensemble_tau", type=float)
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="write per-question predictions")
    common(p_pred, checkpoint=True)
    p_pred.set_defaults(func=cmd_predict)

    p_viz = sub.add_parser("viz", help="export an attention map as a graymap image")
    common(p_viz, checkpoint=True)
    p_viz.add_argument("--example", type=int, default=0)
    p_viz.add_argument("--out", required=True)
    p_viz.add_argument("--ascii", action="store_true", help="write ASCII P2 not binary P5")
    p_viz.set_defaults(func=cmd_viz)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--seed", type=int, default=42)
    p_synth.add_argument("--count", type=int, default=200)
    p_synth.add_argument("--grid-size", dest="grid_size", type=int, default=19)
    p_synth.add_argument("--out-dir", dest="out_dir", required=True)
    p_synth.add_argument("--quiet", action="store_true")
    p_synth.set_defaults(func=cmd_synth)

    p_an = sub.add_parser("analyze", help="answer recall and similarity upper bound")
    common(p_an)
    p_an.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GridPointerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
