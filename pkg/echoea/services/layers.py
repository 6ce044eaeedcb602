"""Functional graph layers over an explicit edge list.

All layers take their weights as arguments so the encoder can own them in
one module and checkpoint them by name. Tensors are float64 throughout.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from config import LEAKY_RELU_SLOPE, Activation
from models.entities import AdjacencyStructure, KnowledgeGraph
from services.adjacency import build_adjacency, normalized_adjacency

DTYPE = torch.float64


@dataclass
class GraphView:
    """Tensor form of one KG: edges of M + I (target=row, source=col),
    the normalised GCN operator and the relation triples."""
    n: int
    n_relations: int
    norm_adj: torch.Tensor
    edge_dst: torch.Tensor
    edge_src: torch.Tensor
    heads: torch.Tensor
    rels: torch.Tensor
    tails: torch.Tensor

    @classmethod
    def from_adjacency(cls, adj: AdjacencyStructure, kg: KnowledgeGraph) -> "GraphView":
        norm = normalized_adjacency(adj).tocoo()
        indices = torch.from_numpy(np.vstack([norm.row, norm.col]).astype(np.int64))
        norm_adj = torch.sparse_coo_tensor(
            indices, torch.from_numpy(norm.data).to(DTYPE), (adj.size, adj.size)
        ).coalesce()
        m_hat = adj.self_loop_adjacency.tocoo()
        triples = torch.from_numpy(np.array(kg.rel_triples, dtype=np.int64))
        return cls(
            n=adj.size,
            n_relations=kg.n_relations,
            norm_adj=norm_adj,
            edge_dst=torch.from_numpy(m_hat.row.astype(np.int64)),
            edge_src=torch.from_numpy(m_hat.col.astype(np.int64)),
            heads=triples[:, 0] if len(triples) else torch.zeros(0, dtype=torch.long),
            rels=triples[:, 1] if len(triples) else torch.zeros(0, dtype=torch.long),
            tails=triples[:, 2] if len(triples) else torch.zeros(0, dtype=torch.long),
        )

    @classmethod
    def from_kg(cls, kg: KnowledgeGraph, undirected: bool = True) -> "GraphView":
        return cls.from_adjacency(build_adjacency(kg, undirected=undirected), kg)


def activate(x: torch.Tensor, activation: Activation) -> torch.Tensor:
    if activation is Activation.TANH:
        return torch.tanh(x)
    if activation is Activation.RELU:
        return torch.relu(x)
    return x


def leaky_relu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, negative_slope=LEAKY_RELU_SLOPE)


def segment_softmax(logits: torch.Tensor, index: torch.Tensor, n_segments: int) -> torch.Tensor:
    """Softmax of ``logits`` within groups sharing the same ``index``."""
    if logits.numel() == 0:
        return logits
    seg_max = torch.zeros(n_segments, dtype=logits.dtype).scatter_reduce(
        0, index, logits.detach(), reduce="amax", include_self=False
    )
    exp = torch.exp(logits - seg_max[index])
    seg_sum = torch.zeros(n_segments, dtype=logits.dtype).index_add(0, index, exp)
    return exp / seg_sum[index]


def segment_weighted_sum(weights: torch.Tensor, rows: torch.Tensor, index: torch.Tensor, n_segments: int) -> torch.Tensor:
    out = torch.zeros(n_segments, rows.shape[1], dtype=rows.dtype)
    if weights.numel() == 0:
        return out
    return out.index_add(0, index, weights.unsqueeze(1) * rows)


def dropout(x: torch.Tensor, rate: float, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Inverted dropout with an explicit generator so runs can be replayed."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = torch.bernoulli(torch.full_like(x, keep), generator=generator)
    return x * mask / keep


# ============================================================================
# Layers
# ============================================================================

def gcn_forward(x: torch.Tensor, graph: GraphView, weight: torch.Tensor, activation: Activation) -> torch.Tensor:
    """sigma(D^-1/2 (M + I) D^-1/2 X W)."""
    if x.shape[0] != graph.n:
        raise ValueError(f"X has {x.shape[0]} rows but the graph has {graph.n} entities")
    if weight.shape != (x.shape[1], x.shape[1]):
        raise ValueError(f"GCN weight must be {x.shape[1]}x{x.shape[1]}, got {tuple(weight.shape)}")
    return activate(torch.sparse.mm(graph.norm_adj, x @ weight), activation)


def highway(xa: torch.Tensor, xb: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Gated mix (1 - a) * Xa + a * Xb with a = sigmoid(Xa W + b)."""
    if xa.shape != xb.shape:
        raise ValueError(f"Highway inputs differ in shape: {tuple(xa.shape)} vs {tuple(xb.shape)}")
    d = xa.shape[1]
    if weight.shape != (d, d) or bias.shape != (d,):
        raise ValueError(f"Highway gate must be {d}x{d} with bias {d}")
    alpha = torch.sigmoid(xa @ weight + bias)
    return (1.0 - alpha) * xa + alpha * xb


def gat_attention(x: torch.Tensor, graph: GraphView, a: torch.Tensor) -> torch.Tensor:
    """Attention weight per edge of M + I, normalised over each target's neighbors."""
    d = x.shape[1]
    if a.shape != (2 * d,):
        raise ValueError(f"GAT attention vector must have length {2 * d}, got {tuple(a.shape)}")
    logits = leaky_relu((x @ a[:d])[graph.edge_dst] + (x @ a[d:])[graph.edge_src])
    return segment_softmax(logits, graph.edge_dst, graph.n)


def gat_forward(x: torch.Tensor, graph: GraphView, a: torch.Tensor) -> torch.Tensor:
    alpha = gat_attention(x, graph, a)
    return segment_weighted_sum(alpha, x[graph.edge_src], graph.edge_dst, graph.n)
