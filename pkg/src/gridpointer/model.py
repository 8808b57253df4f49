"""Answer-prediction head: question-conditioned attention over the fused
multimodal grid, optional two-layer stacking, an FCN baseline variant, the
per-cell binary cross-entropy objective, and cell-pointer decoding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import FeatureProvider, QaExample, get_features
from .errors import ConfigurationError, ContractError, DimensionError
from .grid import GridAssignment, build_gt_mask, build_text_grid, fuse, ground_truth_match
from .layers import LayerParams, conv3x3_params, conv_apply, dense_apply, dense_params
from .question import QuestionEncoderParams, encode_question

PROB_EPS = 1e-7  # probabilities clamped away from {0, 1} before logs


@dataclass
class AttentionLayerParams:
    """One attention layer: conv -> tanh -> conv on the grid branch,
    dense -> tanh -> broadcast on the question branch, add, tanh, then a
    final 1x1 conv with sigmoid. All spatial operators are 1x1, so the
    layer works at any grid size."""

    conv_a: LayerParams   # C_m -> d1
    conv_b: LayerParams   # d1  -> d2
    dense_q: LayerParams  # q_dim -> d2
    conv_out: LayerParams  # d2 -> 1

    @classmethod
    def create(cls, c_m: int, q_dim: int, d1: int = 1024, d2: int = 512,
               rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(
            conv_a=dense_params(c_m, d1, rng, dtype),
            conv_b=dense_params(d1, d2, rng, dtype),
            dense_q=dense_params(q_dim, d2, rng, dtype),
            conv_out=dense_params(d2, 1, rng, dtype),
        )

    def layers(self):
        return [("conv_a", self.conv_a), ("conv_b", self.conv_b),
                ("dense_q", self.dense_q), ("conv_out", self.conv_out)]


@dataclass
class NormParams:
    """Learned per-channel scale/shift with frozen running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "NormParams":
        return cls(
            gamma=ag.parameter(np.ones(channels, dtype=dtype)),
            beta=ag.parameter(np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=np.float64),
            running_var=np.ones(channels, dtype=np.float64),
        )


@dataclass
class StackParams:
    """The prediction head in one of three variants: a single attention
    layer, two stacked attention layers joined by a learned bridge, or the
    attention-free FCN baseline (three same-padded 3x3 convolutions)."""

    mode: str                      # "single" | "stacked" | "fcn"
    layers: list = field(default_factory=list)
    bridge: LayerParams | None = None    # C_m -> q_dim between stacked layers
    fcn_convs: list = field(default_factory=list)
    fcn_norms: list = field(default_factory=list)

    @classmethod
    def create(cls, mode: str, c_m: int, q_dim: int, d1: int = 1024, d2: int = 512,
               fcn_channels: tuple[int, int] = (512, 256),
               rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        if mode == "single":
            return cls(mode=mode,
                       layers=[AttentionLayerParams.create(c_m, q_dim, d1, d2, rng, dtype)])
        if mode == "stacked":
            return cls(
                mode=mode,
                layers=[AttentionLayerParams.create(c_m, q_dim, d1, d2, rng, dtype),
                        AttentionLayerParams.create(c_m, q_dim, d1, d2, rng, dtype)],
                bridge=dense_params(c_m, q_dim, rng, dtype),
            )
        if mode == "fcn":
            ch1, ch2 = fcn_channels
            c_in = c_m + q_dim
            return cls(
                mode=mode,
                fcn_convs=[conv3x3_params(c_in, ch1, rng, dtype),
                           conv3x3_params(ch1, ch2, rng, dtype),
                           conv3x3_params(ch2, 1, rng, dtype)],
                fcn_norms=[NormParams.create(ch1, dtype), NormParams.create(ch2, dtype)],
            )
        raise ConfigurationError(f"unknown stack mode {mode!r}")

    def named_params(self, prefix: str = "stack") -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            for lname, lp in layer.layers():
                for tname, t in lp.tensors():
                    out.append((f"{prefix}.att{i}.{lname}.{tname}", t))
        if self.bridge is not None:
            for tname, t in self.bridge.tensors():
                out.append((f"{prefix}.bridge.{tname}", t))
        for i, lp in enumerate(self.fcn_convs):
            for tname, t in lp.tensors():
                out.append((f"{prefix}.fcn{i}.{tname}", t))
        for i, norm in enumerate(self.fcn_norms):
            out.append((f"{prefix}.norm{i}.gamma", norm.gamma))
            out.append((f"{prefix}.norm{i}.beta", norm.beta))
        return out


def attention_forward(layer: AttentionLayerParams, f_m, f_q,
                      mode: str = "eval", rng=None) -> Tensor:
    """One attention pass producing the per-cell probability map (G, G)."""
    f_m = ag.as_tensor(f_m)
    g = f_m.data.shape[0]
    if f_m.data.shape[-1] != layer.conv_a.in_dim:
        raise DimensionError(
            f"attention_forward: input channels {f_m.data.shape[-1]} != "
            f"layer channels {layer.conv_a.in_dim}"
        )
    m = conv_apply(f_m, layer.conv_a, 1)
    m = ag.tanh(m)
    m = conv_apply(m, layer.conv_b, 1)                     # (G, G, d2)
    q = ag.tanh(dense_apply(f_q, layer.dense_q))           # (d2,), broadcast = tile
    t = ag.tanh(ag.add(m, q))
    p = ag.sigmoid(conv_apply(t, layer.conv_out, 1))       # (G, G, 1)
    return ag.reshape(p, (g, g))


def stacked_forward(stack: StackParams, f_m, f_q,
                    mode: str = "eval", rng=None) -> Tensor:
    """Full head in pointer mode. With two layers, the first map is
    sum-normalized into weights, the weighted average of the grid features
    is bridged into the question space and added to the question vector,
    and the second layer runs on that enriched question."""
    if stack.mode == "fcn":
        raise ConfigurationError("stacked_forward requires pointer mode; use fcn_forward")
    f_m = ag.as_tensor(f_m)
    p1 = attention_forward(stack.layers[0], f_m, f_q, mode, rng)
    if len(stack.layers) == 1:
        return p1
    g = f_m.data.shape[0]
    w = ag.div(p1, ag.tensor_sum(p1))                       # weights sum to 1
    w3 = ag.reshape(w, (g, g, 1))
    context = ag.tensor_sum(ag.mul(w3, f_m), axis=(0, 1))   # (C_m,)
    q2 = ag.add(f_q, dense_apply(context, stack.bridge))
    return attention_forward(stack.layers[1], f_m, q2, mode, rng)


def fcn_forward(stack: StackParams, f_m, f_q_tiled, mode: str = "eval") -> Tensor:
    """FCN baseline: three 3x3 convolutions over the grid features
    concatenated with the tiled question embedding; the first two are
    followed by feature normalization and ReLU, the last by a sigmoid."""
    if stack.mode != "fcn":
        raise ConfigurationError("fcn_forward requires fcn mode")
    f_m = ag.as_tensor(f_m)
    g = f_m.data.shape[0]
    if f_q_tiled.data.shape[:2] != (g, g):
        raise DimensionError(
            f"fcn_forward: tiled question {f_q_tiled.data.shape} does not match grid {g}"
        )
    x = ag.concat_last(f_m, f_q_tiled)
    for conv, norm in zip(stack.fcn_convs[:2], stack.fcn_norms):
        x = conv_apply(x, conv, 3)
        x = ag.channel_norm(x, norm.gamma, norm.beta,
                            norm.running_mean, norm.running_var, mode)
        x = ag.relu(x)
    p = ag.sigmoid(conv_apply(x, stack.fcn_convs[2], 3))
    return ag.reshape(p, (g, g))


def tile_question(f_q, g: int) -> Tensor:
    """Broadcast a (q_dim,) vector to a (G, G, q_dim) field."""
    f_q = ag.as_tensor(f_q)
    return ag.broadcast_to(f_q, (g, g, f_q.data.shape[-1]))


def bce_loss(p, g_mask) -> Tensor:
    """Summed per-cell binary cross entropy over the whole grid."""
    p = ag.as_tensor(p)
    g_arr = np.asarray(g_mask.data if isinstance(g_mask, Tensor) else g_mask)
    if p.data.shape != g_arr.shape:
        raise DimensionError(f"bce_loss: shapes differ: {p.data.shape} vs {g_arr.shape}")
    pc = ag.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    g_t = ag.constant(g_arr.astype(p.data.dtype))
    pos = ag.mul(g_t, ag.log(pc))
    neg = ag.mul(1.0 - g_t, ag.log(1.0 - pc))
    return ag.mul(ag.tensor_sum(ag.add(pos, neg)), -1.0)


# -- the assembled model ---------------------------------------------------


@dataclass
class PointerModel:
    """Question encoder plus prediction head; everything checkpointable."""

    question: QuestionEncoderParams
    stack: StackParams
    c_vis: int
    emb_dim: int

    @classmethod
    def create(cls, c_vis: int, emb_dim: int, q_dim: int, hidden: int,
               mode: str = "stacked", d1: int = 1024, d2: int = 512,
               fcn_channels: tuple[int, int] = (512, 256),
               seed: int = 0, dtype=np.float32) -> "PointerModel":
        rng = np.random.default_rng(seed)
        c_m = c_vis + emb_dim
        return cls(
            question=QuestionEncoderParams.create(emb_dim, hidden, q_dim, rng, dtype),
            stack=StackParams.create(mode, c_m, q_dim, d1, d2, fcn_channels, rng, dtype),
            c_vis=c_vis,
            emb_dim=emb_dim,
        )

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.question.named_params() + self.stack.named_params()

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def zero_grad(self) -> None:
        for _, t in self.named_params():
            t.zero_grad()

    def forward(self, f_m, words: list[str], table, mode: str = "eval",
                rng=None) -> Tensor:
        f_q = encode_question(self.question, table, words, mode, rng)
        if self.stack.mode == "fcn":
            g = ag.as_tensor(f_m).data.shape[0]
            return fcn_forward(self.stack, f_m, tile_question(f_q, g), mode)
        return stacked_forward(self.stack, f_m, f_q, mode, rng)


@dataclass
class PredictionOutput:
    p_att: np.ndarray
    argmax_cell: tuple[int, int]
    answer_text: str | None
    confidence: float


@dataclass
class ProviderBundle:
    """Everything predict needs besides the example itself."""

    features: FeatureProvider
    table: object  # EmbeddingTable

    def build_inputs(self, example: QaExample,
                     grid_size: int | None = None) -> tuple[np.ndarray, GridAssignment]:
        fp = self.features if grid_size is None else self.features.at_scale(grid_size)
        visual = get_features(fp, example.image_id)
        assignment = build_text_grid(example.ocr, self.table, fp.grid_size)
        return fuse(visual, assignment.text_grid), assignment


def decode(p_att: np.ndarray, assignment: GridAssignment) -> PredictionOutput:
    """Point at the cell with maximum probability; ties resolve to the
    smallest row-major index. A token-less argmax yields no answer text."""
    flat_idx = int(np.argmax(p_att))
    g = p_att.shape[0]
    cell = (flat_idx // g, flat_idx % g)
    token_idx = int(assignment.cell_token[cell])
    answer = assignment.tokens[token_idx].text if token_idx >= 0 else None
    return PredictionOutput(
        p_att=p_att,
        argmax_cell=cell,
        answer_text=answer,
        confidence=float(p_att[cell]),
    )


def predict(model: PointerModel, example: QaExample,
            providers: ProviderBundle) -> PredictionOutput:
    f_m, assignment = providers.build_inputs(example)
    p = model.forward(ag.constant(f_m), example.question, providers.table, mode="eval")
    return decode(p.data, assignment)


def predict_multiscale(model: PointerModel, example: QaExample,
                       providers: ProviderBundle,
                       grid_sizes: list[int]) -> dict[int, PredictionOutput]:
    """Run the same weights at each requested grid size."""
    out = {}
    for g in grid_sizes:
        f_m, assignment = providers.build_inputs(example, grid_size=g)
        p = model.forward(ag.constant(f_m), example.question, providers.table, mode="eval")
        out[g] = decode(p.data, assignment)
    return out


def example_gt_mask(example: QaExample, assignment: GridAssignment) -> np.ndarray:
    matches = ground_truth_match(example)
    if not matches:
        raise ContractError(
            f"example {example.question_id}: no answer match; run filter_trainable first"
        )
    return build_gt_mask(assignment, matches, assignment.grid_size)
