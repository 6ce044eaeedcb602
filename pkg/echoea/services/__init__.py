from .kg_loader import load_dataset, save_dataset, load_embeddings
from .adjacency import build_adjacency
from .seeds import split_seeds, default_candidates
from .synthetic import synth_kg_pair
