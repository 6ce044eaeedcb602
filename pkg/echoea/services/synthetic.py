"""Synthetic KG pairs with a known alignment, for desk-scale runs and tests.

KG2 is a relabelled copy of KG1. Noise rewires KG2 triple tails, redraws the
KG2 embedding rows and attribute values of perturbed entities.
"""
import logging
from typing import Tuple

import numpy as np

from models.entities import KnowledgeGraph, SeedPairs

logger = logging.getLogger(__name__)

MAX_ATTRS_PER_ENTITY = 3


def synth_kg_pair(
    n_entities: int,
    n_relations: int,
    triple_density: float,
    attr_vocab: int,
    noise: float,
    rng_seed: int,
    dim: int = 64,
) -> Tuple[KnowledgeGraph, KnowledgeGraph, SeedPairs, Tuple[np.ndarray, np.ndarray]]:
    """Generate (KG1, KG2, ground truth, (X1, X2)).

    ``triple_density`` is the expected number of relation triples per entity.
    """
    if n_entities < 2:
        raise ValueError(f"n_entities must be >= 2, got {n_entities}")
    if n_relations < 1:
        raise ValueError(f"n_relations must be >= 1, got {n_relations}")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must be in [0, 1], got {noise}")
    n_triples = int(round(triple_density * n_entities))
    if n_triples <= 0:
        raise ValueError(f"triple_density {triple_density} yields no triples for {n_entities} entities")

    rng = np.random.default_rng(rng_seed)

    heads = rng.integers(0, n_entities, size=n_triples)
    offsets = rng.integers(1, n_entities, size=n_triples)
    tails = (heads + offsets) % n_entities
    rels = rng.integers(0, n_relations, size=n_triples)
    triples1 = list(dict.fromkeys(zip(heads.tolist(), rels.tolist(), tails.tolist())))

    attribute_names = [f"attr_{a}" for a in range(attr_vocab)]
    value_pool = max(2, n_entities // 4)
    attr_triples1 = []
    if attr_vocab > 0:
        for e in range(n_entities):
            count = int(rng.integers(1, min(MAX_ATTRS_PER_ENTITY, attr_vocab) + 1))
            for a in sorted(rng.choice(attr_vocab, size=count, replace=False).tolist()):
                attr_triples1.append((e, a, int(rng.integers(value_pool))))
    values = [f"v{k}" for k in range(value_pool)]

    x1 = rng.standard_normal((n_entities, dim))

    ent_perm = rng.permutation(n_entities)
    rel_perm = rng.permutation(n_relations)
    perturbed = rng.random(n_entities) < noise

    triples2 = []
    for h, r, t in triples1:
        if rng.random() < noise:
            t = int((h + rng.integers(1, n_entities)) % n_entities)
        triples2.append((int(ent_perm[h]), int(rel_perm[r]), int(ent_perm[t])))
    triples2 = list(dict.fromkeys(triples2))

    attr_triples2 = []
    for e, a, v in attr_triples1:
        if perturbed[e]:
            v = int(rng.integers(value_pool))
        attr_triples2.append((int(ent_perm[e]), a, v))

    x2 = np.empty_like(x1)
    redrawn = rng.standard_normal((n_entities, dim))
    for i in range(n_entities):
        x2[ent_perm[i]] = redrawn[i] if perturbed[i] else x1[i]

    kg1 = KnowledgeGraph(
        entity_uris=[f"kg1/e{i}" for i in range(n_entities)],
        relation_uris=[f"kg1/r{k}" for k in range(n_relations)],
        attribute_names=list(attribute_names),
        values=list(values),
        rel_triples=triples1,
        attr_triples=list(dict.fromkeys(attr_triples1)),
    )
    kg2 = KnowledgeGraph(
        entity_uris=[f"kg2/e{i}" for i in range(n_entities)],
        relation_uris=[f"kg2/r{k}" for k in range(n_relations)],
        attribute_names=list(attribute_names),
        values=list(values),
        rel_triples=triples2,
        attr_triples=list(dict.fromkeys(attr_triples2)),
    )
    truth = SeedPairs(tuple((i, int(ent_perm[i])) for i in range(n_entities)))
    logger.info(
        f"Synthetic pair: {n_entities} entities, {len(triples1)}/{len(triples2)} triples, "
        f"{int(perturbed.sum())} perturbed entities"
    )
    return kg1, kg2, truth, (x1, x2)
