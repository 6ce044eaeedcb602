import logging
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp

from config import EdgeDirection
from models.entities import AdjacencyStructure, KnowledgeGraph

logger = logging.getLogger(__name__)


def build_adjacency(kg: KnowledgeGraph, undirected: bool = True) -> AdjacencyStructure:
    """Build the 0/1 self-loop adjacency M + I, its degrees and labelled neighbors.

    Parallel edges collapse to a single 1 in the matrix but every
    relation-labelled edge is kept in ``neighbor_lists``.
    """
    n = kg.n_entities
    triples = kg.rel_triples
    heads = triples[:, 0] if len(triples) else np.zeros(0, dtype=np.int64)
    tails = triples[:, 2] if len(triples) else np.zeros(0, dtype=np.int64)

    rows = [heads, np.arange(n)]
    cols = [tails, np.arange(n)]
    if undirected:
        rows.append(tails)
        cols.append(heads)
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    m_hat = sp.coo_matrix((np.ones(len(row)), (row, col)), shape=(n, n)).tocsr()
    # Duplicates are summed by the conversion; clamp back to 0/1
    m_hat.data = np.ones_like(m_hat.data)
    m_hat.eliminate_zeros()
    degree = np.asarray(m_hat.sum(axis=1)).ravel().astype(np.int64)

    neighbor_lists: List[List[Tuple[int, int, EdgeDirection]]] = [[] for _ in range(n)]
    for h, r, t in triples.tolist():
        neighbor_lists[h].append((t, r, EdgeDirection.HEAD_TO_TAIL))
        if undirected:
            neighbor_lists[t].append((h, r, EdgeDirection.TAIL_TO_HEAD))

    logger.debug(f"Adjacency over {n} entities: {m_hat.nnz} non-zeros")
    return AdjacencyStructure(self_loop_adjacency=m_hat, degree=degree, neighbor_lists=neighbor_lists)


def normalized_adjacency(adj: AdjacencyStructure) -> sp.csr_matrix:
    """Symmetric normalisation D^-1/2 (M + I) D^-1/2."""
    d_inv_sqrt = 1.0 / np.sqrt(adj.degree.astype(np.float64))
    d_mat = sp.diags(d_inv_sqrt)
    return (d_mat @ adj.self_loop_adjacency @ d_mat).tocsr()
