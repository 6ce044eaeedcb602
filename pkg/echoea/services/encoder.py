"""The Echo encoder: primitive aggregation, echo network, complete aggregation.

    X0 --PAN--> X_pan (d_e) --EN--> X_en (d_e + 2 d_r) --CAN--> [X_en || GAT(X_en)]

Each stage can be switched off through ``EncoderConfig`` and is then replaced
by the identity; the stage trace on the event bus records what ran.
"""
import logging
import math
from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn

from config import GCN_INIT_NOISE_STD, RunMode, Stage
from events import RunEvent, event_bus
from models.entities import EncoderConfig
from services.layers import (
    DTYPE,
    GraphView,
    dropout,
    gat_forward,
    gcn_forward,
    highway,
    leaky_relu,
    segment_softmax,
    segment_weighted_sum,
)

logger = logging.getLogger(__name__)

ECHO_KEYS = ("h_rh", "h_rt", "t_rh", "t_rt")


def glorot(shape: Tuple[int, ...], generator: torch.Generator) -> torch.Tensor:
    fan = shape[0] + (shape[1] if len(shape) > 1 else 1)
    bound = math.sqrt(6.0 / fan)
    return (torch.rand(shape, generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound


class ModelParams(nn.Module):
    """All trainable encoder weights, named so checkpoints are self-describing."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        super().__init__()
        self.config = config
        g = torch.Generator().manual_seed(seed)
        d_e, d_r, width = config.d_e, config.d_r, config.en_width

        def p(t: torch.Tensor) -> nn.Parameter:
            return nn.Parameter(t)

        self.gcn_weights = nn.ParameterList([
            p(torch.eye(d_e, dtype=DTYPE) + GCN_INIT_NOISE_STD * torch.randn((d_e, d_e), generator=g, dtype=DTYPE))
            for _ in range(config.pan_gcn_layers)
        ])
        self.gcn_gate_w = p(glorot((d_e, d_e), g))
        self.gcn_gate_b = p(torch.zeros(d_e, dtype=DTYPE))
        self.gat_attention = nn.ParameterList([p(glorot((2 * d_e,), g)) for _ in range(config.pan_gat_layers)])
        self.gat_gate_w = nn.ParameterList([p(glorot((d_e, d_e), g)) for _ in range(config.pan_gat_layers)])
        self.gat_gate_b = nn.ParameterList([p(torch.zeros(d_e, dtype=DTYPE)) for _ in range(config.pan_gat_layers)])

        self.head_proj = p(glorot((d_e, d_r), g))
        self.tail_proj = p(glorot((d_e, d_r), g))
        self.rel_attention = p(glorot((2 * d_r,), g))
        self.echo_attention = nn.ParameterDict({k: p(glorot((d_e + d_r,), g)) for k in ECHO_KEYS})
        self.echo_head_gate_w = p(glorot((d_r, d_r), g))
        self.echo_head_gate_b = p(torch.zeros(d_r, dtype=DTYPE))
        self.echo_tail_gate_w = p(glorot((d_r, d_r), g))
        self.echo_tail_gate_b = p(torch.zeros(d_r, dtype=DTYPE))

        self.can_attention = p(glorot((2 * width,), g))

    def groups(self) -> Dict[str, torch.Tensor]:
        """Parameter groups keyed by their dotted names."""
        return dict(self.named_parameters())

    def load_groups(self, groups: Dict[str, torch.Tensor]) -> None:
        missing = set(self.groups()) - set(groups)
        if missing:
            raise KeyError(f"Checkpoint lacks parameter groups: {sorted(missing)}")
        with torch.no_grad():
            for name, param in self.named_parameters():
                value = torch.as_tensor(groups[name], dtype=DTYPE)
                if value.shape != param.shape:
                    raise ValueError(f"Group {name}: expected shape {tuple(param.shape)}, got {tuple(value.shape)}")
                param.copy_(value)


# ============================================================================
# Stages
# ============================================================================

def pan_forward(
    x0: torch.Tensor,
    graph: GraphView,
    params: ModelParams,
    config: EncoderConfig,
    mode: RunMode = RunMode.INFER,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """GCN stack, highway back to X0, dropout, then highway-wrapped GAT layers."""
    h = x0
    if config.pan_gcn_layers > 0:
        g = x0
        for weight in params.gcn_weights:
            g = gcn_forward(g, graph, weight, config.activation)
        h = highway(x0, g, params.gcn_gate_w, params.gcn_gate_b)
    if mode is RunMode.TRAIN:
        h = dropout(h, config.dropout_rate, generator)
    for a, w, b in zip(params.gat_attention, params.gat_gate_w, params.gat_gate_b):
        h = highway(h, gat_forward(h, graph, a), w, b)
    return h


def relation_attention(x_pan: torch.Tensor, graph: GraphView, params: ModelParams) -> torch.Tensor:
    """Weight of each triple within its relation."""
    xh = x_pan @ params.head_proj
    xt = x_pan @ params.tail_proj
    d_r = xh.shape[1]
    a = params.rel_attention
    logits = leaky_relu(xh[graph.heads] @ a[:d_r] + xt[graph.tails] @ a[d_r:])
    return segment_softmax(logits, graph.rels, graph.n_relations)


def relation_repr(x_pan: torch.Tensor, graph: GraphView, params: ModelParams) -> Tuple[torch.Tensor, torch.Tensor]:
    """Head-side and tail-side relation representations (|R| x d_r each).

    Relations without triples get zero vectors.
    """
    xh = x_pan @ params.head_proj
    xt = x_pan @ params.tail_proj
    alpha = relation_attention(x_pan, graph, params)
    rh = segment_weighted_sum(alpha, xh[graph.heads], graph.rels, graph.n_relations)
    rt = segment_weighted_sum(alpha, xt[graph.tails], graph.rels, graph.n_relations)
    return rh, rt


def echo_attention(
    x_pan: torch.Tensor,
    rel_repr: torch.Tensor,
    entities: torch.Tensor,
    relations: torch.Tensor,
    a: torch.Tensor,
    n: int,
) -> torch.Tensor:
    """Weight of each (entity, relation) list entry within the entity's list."""
    d_e = x_pan.shape[1]
    logits = leaky_relu(x_pan[entities] @ a[:d_e] + rel_repr[relations] @ a[d_e:])
    return segment_softmax(logits, entities, n)


def echo_components(
    x_pan: torch.Tensor,
    rh: torch.Tensor,
    rt: torch.Tensor,
    graph: GraphView,
    params: ModelParams,
) -> Dict[str, torch.Tensor]:
    """The four echoed parts keyed ``{entity side}_{relation side}``.

    The entity side "h" attends over the relations where the entity is head,
    "t" over those where it is tail; one list entry per triple.
    """
    lists = {"h": (graph.heads, graph.rels), "t": (graph.tails, graph.rels)}
    reprs = {"rh": rh, "rt": rt}
    out = {}
    for key in ECHO_KEYS:
        side, rel_side = key.split("_")
        entities, relations = lists[side]
        r = reprs[rel_side]
        alpha = echo_attention(x_pan, r, entities, relations, params.echo_attention[key], graph.n)
        out[key] = segment_weighted_sum(alpha, r[relations], entities, graph.n)
    return out


def echo_forward(
    x_pan: torch.Tensor,
    rh: torch.Tensor,
    rt: torch.Tensor,
    graph: GraphView,
    params: ModelParams,
) -> torch.Tensor:
    parts = echo_components(x_pan, rh, rt, graph, params)
    head_part = highway(parts["h_rh"], parts["h_rt"], params.echo_head_gate_w, params.echo_head_gate_b)
    tail_part = highway(parts["t_rh"], parts["t_rt"], params.echo_tail_gate_w, params.echo_tail_gate_b)
    return torch.cat([x_pan, head_part, tail_part], dim=1)


def can_forward(x_en: torch.Tensor, graph: GraphView, params: ModelParams) -> torch.Tensor:
    return torch.cat([x_en, gat_forward(x_en, graph, params.can_attention)], dim=1)


def _trace(stage: Stage, enabled: bool) -> None:
    event_bus.emit(RunEvent.STAGE_ENTERED if enabled else RunEvent.STAGE_SKIPPED, stage)


def encode(
    graph: GraphView,
    x0: torch.Tensor,
    params: ModelParams,
    config: EncoderConfig,
    mode: RunMode = RunMode.INFER,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Final alignment embeddings for one KG."""
    if x0.shape != (graph.n, config.d_e):
        raise ValueError(f"X0 must be {graph.n}x{config.d_e}, got {tuple(x0.shape)}")

    _trace(Stage.PAN, config.use_pan)
    h = pan_forward(x0, graph, params, config, mode, generator) if config.use_pan else x0

    _trace(Stage.EN, config.use_en)
    if config.use_en:
        rh, rt = relation_repr(h, graph, params)
        h = echo_forward(h, rh, rt, graph, params)

    _trace(Stage.CAN, config.use_can)
    if config.use_can:
        h = can_forward(h, graph, params)
    return h
