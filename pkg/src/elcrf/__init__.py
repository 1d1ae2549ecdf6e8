"""Embedded-state latent CRF sequence labeler."""
from .data import Corpus, Sentence, chunk_f1, read_conll, write_conll
from .inference import Lattice, forward_log_partition, marginals, viterbi_decode
from .labels import LabelSchema, StateSpace, allocate_states
from .model import ModelParams, load, predict, save
from .potentials import NEG_INF, ConstraintMask, TransitionFactors, effective_transition_matrix
from .training import TrainConfig, train

__all__ = [
    "ConstraintMask", "Corpus", "Lattice", "LabelSchema", "ModelParams", "NEG_INF", "Sentence",
    "StateSpace", "TrainConfig", "TransitionFactors", "allocate_states", "chunk_f1",
    "effective_transition_matrix", "forward_log_partition", "load", "marginals", "predict",
    "read_conll", "save", "train", "viterbi_decode", "write_conll",
]

__version__ = "0.1.0"
