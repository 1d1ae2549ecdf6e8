"""Model parameters, decoding and the on-disk model format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import inference
from .featurizer import FeaturizerParams, featurize_ids
from .inference import Lattice
from .labels import LabelSchema, StateSpace
from .potentials import ConstraintMask, TransitionFactors, apply_boundary_mask, effective_transition_matrix

FORMAT_NAME = "elcrf-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class ModelParams:
    states: StateSpace
    factors: TransitionFactors
    featurizer: FeaturizerParams
    config: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.factors.M != self.states.M or self.featurizer.M != self.states.M:
            raise ValueError("transition, featurizer and state space disagree on M")
        self._mask = ConstraintMask.from_states(self.states)

    @property
    def schema(self) -> LabelSchema:
        return self.states.schema

    @property
    def mask(self) -> ConstraintMask:
        return self._mask

    def arrays(self) -> dict[str, np.ndarray]:
        """All trainable tensors by name (views, not copies)."""
        return {**self.factors.arrays(), **self.featurizer.arrays()}

    def copy(self) -> "ModelParams":
        return ModelParams(self.states, self.factors.copy(), self.featurizer.copy(),
                           dict(self.config), self.version)

    def transitions(self) -> np.ndarray:
        return effective_transition_matrix(self.factors, self._mask)

    def lattice(self, tokens: Sequence[str], trans: Optional[np.ndarray] = None) -> Lattice:
        ids = self.featurizer.token_ids(tokens)
        psi, _ = featurize_ids(ids, self.featurizer)
        return Lattice(apply_boundary_mask(psi, self._mask),
                       self.transitions() if trans is None else trans)


def predict(params: ModelParams, tokens: Sequence[str], trans: Optional[np.ndarray] = None) -> list[str]:
    """Labels of the best latent state path."""
    return inference.viterbi_decode(params.lattice(tokens, trans), params.states).labels


def predict_many(params: ModelParams, token_seqs: Sequence[Sequence[str]]) -> list[list[str]]:
    trans = params.transitions()
    return [predict(params, toks, trans) for toks in token_seqs]


# -- serialization --------------------------------------------------------


def _arr(a: np.ndarray):
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def to_dict(params: ModelParams) -> dict:
    feat = params.featurizer
    vocab = sorted(feat.vocab, key=feat.vocab.__getitem__)
    return {
        "format": FORMAT_NAME,
        "version": params.version,
        "schema": {
            "labels": list(params.schema.labels),
            "entity_counts": list(params.schema.entity_counts),
            "scheme": params.schema.scheme,
        },
        "state_sizes": list(params.states.sizes),
        "transitions": {"mode": params.factors.mode,
                        **{k: _arr(v) for k, v in params.factors.arrays().items()}},
        "featurizer": {
            "vocab": vocab,
            "window": feat.window,
            "dropout_p": feat.dropout_p,
            "singletons": sorted(int(i) for i in feat.singletons),
            "E": _arr(feat.E),
            "W": _arr(feat.W),
            "b": _arr(feat.b),
        },
        "config": params.config,
    }


def from_dict(d: dict) -> ModelParams:
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFormatError("not an elcrf model file")
    if d.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('version')!r} "
                               f"(this build reads version {FORMAT_VERSION})")
    try:
        s = d["schema"]
        schema = LabelSchema(tuple(s["labels"]), tuple(s["entity_counts"]), s["scheme"])
        states = StateSpace(schema, tuple(d["state_sizes"]))
        t = d["transitions"]
        if t["mode"] == "full-rank":
            factors = TransitionFactors(A=_unarr(t["A"]))
        else:
            factors = TransitionFactors(U=_unarr(t["U"]), V=_unarr(t["V"]))
        f = d["featurizer"]
        vocab = {tok: i for i, tok in enumerate(f["vocab"])}
        feat = FeaturizerParams(vocab, _unarr(f["E"]), _unarr(f["W"]), _unarr(f["b"]),
                                int(f["window"]), float(f["dropout_p"]), frozenset(f["singletons"]))
        return ModelParams(states, factors, feat, dict(d.get("config", {})), d["version"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def save(params: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(params), fh, sort_keys=True)
        fh.write("\n")


def load(path) -> ModelParams:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    return from_dict(d)
