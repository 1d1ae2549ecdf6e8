"""Maximum-likelihood training with per-example SGD.

The gradient of the negative log-likelihood with respect to the local and
transition scores is the difference between expected occupancies under the
free lattice and under the gold-clamped lattice; it is then pushed through
the transition factorization and the featurizer by hand.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Corpus, chunk_f1
from .featurizer import UNK_ID, FeaturizerParams, build_vocab, featurize_ids, featurizer_backward
from .inference import Lattice, marginals
from .labels import LabelSchema, allocate_states, end_allowed, iob_transition_allowed, start_allowed
from .model import ModelParams, predict_many
from .potentials import INFEASIBLE, TransitionFactors, apply_boundary_mask, fold_output_potential

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class InfeasibleGoldError(ValueError):
    """The gold labels cannot be produced under the hard transition mask."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    lr_decay: float = 0.05
    clip_norm: float = 5.0
    batch_size: int = 1
    dropout_p: float = 0.5
    max_epochs: int = 50
    patience: int = 10
    factor_size: Optional[int] = 20  # None: full-rank transitions
    hidden_states: Optional[int] = None  # None: 4 states per label
    seed: int = 0
    d_emb: int = 100
    window: int = 2
    scheme: str = "iob"
    digit_normalize: bool = True
    unk_replace_p: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.lr_decay < 0:
            raise ConfigError("lr_decay must be >= 0")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout_p must be in [0, 1)")
        if self.factor_size is not None and self.factor_size < 1:
            raise ConfigError("factor_size must be >= 1 (or None for full rank)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0 or self.patience < 1:
            raise ConfigError("max_epochs must be >= 0 and patience >= 1")
        if not 0 <= self.unk_replace_p <= 1:
            raise ConfigError("unk_replace_p must be in [0, 1]")

    @property
    def full_rank(self) -> bool:
        return self.factor_size is None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def init_params(config: TrainConfig, corpus: Corpus, schema: Optional[LabelSchema] = None) -> ModelParams:
    """Fresh model sized from the training corpus."""
    if schema is None:
        schema = LabelSchema.from_sequences(corpus.label_seqs, config.scheme)
    M = config.hidden_states if config.hidden_states is not None else 4 * schema.size
    states = allocate_states(schema, M)
    rng = np.random.default_rng(config.seed)
    vocab, counts = build_vocab(corpus.token_seqs)
    singletons = [t for t, c in counts.items() if c == 1]
    factors = TransitionFactors.init_random(M, config.factor_size, rng)
    feat = FeaturizerParams.init_random(vocab, M, config.d_emb, config.window, config.dropout_p,
                                        rng, singletons)
    return ModelParams(states, factors, feat, config.to_dict())


# -- objective ------------------------------------------------------------


def _nll_and_grads(params: ModelParams, ids: np.ndarray, gold: np.ndarray,
                   dropout_rng: Optional[np.random.Generator] = None,
                   trans: Optional[np.ndarray] = None, need_grads: bool = True):
    psi_raw, cache = featurize_ids(ids, params.featurizer, dropout_rng)
    psi = apply_boundary_mask(psi_raw, params.mask)
    if trans is None:
        trans = params.transitions()
    free = marginals(Lattice(psi, trans))
    clamped = marginals(Lattice(fold_output_potential(psi, gold, params.states), trans))
    if clamped.log_Z <= INFEASIBLE:
        raise InfeasibleGoldError(_infeasible_diagnostic(params, gold), None)
    nll = max(free.log_Z - clamped.log_Z, 0.0)
    if not need_grads:
        return nll, None
    g_psi = free.node_marginals - clamped.node_marginals
    g_trans = free.expected_transitions() - clamped.expected_transitions()
    g_trans[~params.mask.allowed] = 0.0
    grads = {}
    if params.factors.mode == "full-rank":
        grads["A"] = g_trans
    else:
        grads["U"] = params.factors.V @ g_trans.T
        grads["V"] = params.factors.U @ g_trans
    grads.update(featurizer_backward(g_psi, cache, params.featurizer))
    return nll, grads


def _infeasible_diagnostic(params: ModelParams, gold: np.ndarray) -> str:
    labs = params.schema.decode(gold)
    if not start_allowed(labs[0], params.schema):
        return f"gold sequence starts with {labs[0]!r}"
    for t in range(1, len(labs)):
        if not iob_transition_allowed(labs[t - 1], labs[t], params.schema):
            return f"illegal transition {labs[t - 1]!r} -> {labs[t]!r} at position {t}"
    if not end_allowed(labs[-1], params.schema):
        return f"gold sequence ends with {labs[-1]!r}"
    return "gold sequence has no feasible latent path"


def _encode(params: ModelParams, tokens, gold):
    if len(tokens) != len(gold):
        raise ValueError(f"{len(tokens)} tokens but {len(gold)} labels")
    return params.featurizer.token_ids(tokens), params.schema.encode(gold)


def sequence_nll(params: ModelParams, tokens: Sequence[str], gold: Sequence[str],
                 training_mode: bool = False, rng_seed: Optional[int] = None) -> float:
    """Negative conditional log-likelihood of ``gold``; dropout only in
    training mode."""
    ids, g = _encode(params, tokens, gold)
    rng = np.random.default_rng(rng_seed) if training_mode else None
    return _nll_and_grads(params, ids, g, rng, need_grads=False)[0]


def sequence_gradients(params: ModelParams, tokens: Sequence[str], gold: Sequence[str],
                       training_mode: bool = False, rng_seed: Optional[int] = None) -> dict[str, np.ndarray]:
    """Gradients of :func:`sequence_nll` for every trainable tensor."""
    ids, g = _encode(params, tokens, gold)
    rng = np.random.default_rng(rng_seed) if training_mode else None
    return _nll_and_grads(params, ids, g, rng)[1]


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> dict[str, np.ndarray]:
    """Rescale all gradients together when their joint L2 norm exceeds ``clip_norm``."""
    if clip_norm <= 0:
        raise ConfigError("clip_norm must be > 0")
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
    arrays = params.arrays()
    for name, g in grads.items():
        arrays[name] -= lr * g


# -- training loop --------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    mean_nll: float
    dev_f1: Optional[float]
    lr: float
    skipped: int

    def to_row(self) -> str:
        dev = "" if self.dev_f1 is None else f"{self.dev_f1:.4f}"
        return f"{self.epoch}\t{self.mean_nll:.10f}\t{dev}\t{self.lr:.10g}\t{self.skipped}"


LOG_HEADER = "epoch\tmean_nll\tdev_f1\tlr\tskipped"


@dataclass
class TrainLog:
    epochs: list[EpochRecord]
    best_epoch: Optional[int] = None
    best_dev_f1: Optional[float] = None

    def to_tsv(self) -> str:
        return "\n".join([LOG_HEADER] + [e.to_row() for e in self.epochs]) + "\n"


def train(config: TrainConfig, train_set: Corpus, dev_set: Optional[Corpus] = None,
          params: Optional[ModelParams] = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> tuple[ModelParams, TrainLog]:
    """SGD over shuffled single examples with global-norm clipping and
    ``lr / (1 + decay * epoch)`` decay.

    With a dev set, the parameters with the best dev chunk F1 are returned and
    training stops after ``patience`` epochs without improvement.
    """
    if len(train_set) == 0:
        raise ConfigError("training set is empty")
    if params is None:
        params = init_params(config, train_set)
    params.config = config.to_dict()
    examples = [_encode(params, s.tokens, s.labels) for s in train_set.sentences]
    singleton = np.zeros(len(params.featurizer.vocab), dtype=bool)
    singleton[list(params.featurizer.singletons)] = True
    rng = np.random.default_rng(config.seed + 1)

    history: list[EpochRecord] = []
    best = params.copy() if dev_set is not None else None
    best_f1, best_epoch, stale = -1.0, None, 0
    for epoch in range(config.max_epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(len(examples))
        seeds = rng.integers(0, 2**63 - 1, size=len(examples))
        total, counted, skipped = 0.0, 0, 0
        batch: Optional[dict[str, np.ndarray]] = None
        in_batch = 0
        for n, idx in enumerate(order):
            ids, gold = examples[idx]
            ex_rng = np.random.default_rng(seeds[n])
            if config.unk_replace_p > 0:
                drop = singleton[ids] & (ex_rng.random(len(ids)) < config.unk_replace_p)
                if drop.any():
                    ids = np.where(drop, UNK_ID, ids)
            try:
                nll, grads = _nll_and_grads(params, ids, gold, ex_rng)
            except InfeasibleGoldError as exc:
                skipped += 1
                log.warning("skipping training sequence %d: %s", idx, exc)
                continue
            total += nll
            counted += 1
            if batch is None:
                batch = grads
            else:
                for k in batch:
                    batch[k] += grads[k]
            in_batch += 1
            if in_batch == config.batch_size:
                sgd_step(params, clip_gradients(batch, config.clip_norm), lr)
                batch, in_batch = None, 0
        if batch is not None:
            sgd_step(params, clip_gradients(batch, config.clip_norm), lr)

        dev_f1 = None
        if dev_set is not None and len(dev_set):
            pred = predict_many(params, dev_set.token_seqs)
            dev_f1 = chunk_f1(dev_set.label_seqs, pred).overall.f1
        rec = EpochRecord(epoch, total / max(counted, 1), dev_f1, lr, skipped)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        if dev_f1 is not None:
            if dev_f1 > best_f1:
                best_f1, best_epoch, stale = dev_f1, epoch, 0
                best = params.copy()
            else:
                stale += 1
                if stale >= config.patience:
                    break

    if best is not None and best_epoch is not None:
        return best, TrainLog(history, best_epoch, best_f1)
    return params, TrainLog(history)
