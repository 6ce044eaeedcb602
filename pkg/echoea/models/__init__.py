from .entities import KnowledgeGraph, SeedPairs, CandidateSets, SimilarityMatrix, EncoderConfig, TrainingConfig
