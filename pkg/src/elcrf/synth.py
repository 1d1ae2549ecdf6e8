"""Synthetic corpora whose trigger labels are decided only by a sequence-level
constraint.

Trigger tokens come from one pool shared by a constrained label and a
distractor label, and sit far enough from each other and from the sequence
ends that no window of ``context`` tokens can tell them apart. Which label a
trigger gets depends on the other triggers in the sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Corpus, Sentence, extract_chunks

KINDS = ("at-most-once", "exactly-once", "co-occurrence", "first-occurrence-only")

_DEFAULT_COUNTS = {
    "at-most-once": ((1, 2), (0.3, 0.7)),
    "first-occurrence-only": ((1, 2, 3), (0.4, 0.3, 0.3)),
    "exactly-once": ((1, 2), (0.3, 0.7)),
    "co-occurrence": ((1, 2), (0.5, 0.5)),
}


class GenerationError(ValueError):
    pass


def _pool(prefix, n):
    return tuple(f"{prefix}{i}" for i in range(n))


@dataclass(frozen=True)
class ConstraintSpec:
    """What to generate.

    ``trigger_counts``/``count_probs`` give the distribution of trigger
    occurrences per sequence (defaults depend on ``kind``). ``context`` is the
    minimum distance between triggers and from triggers to the sequence ends.
    For ``co-occurrence`` the constrained label is used iff the sequence also
    holds a ``partner`` token, present with probability ``partner_p``.
    """

    kind: str = "at-most-once"
    constrained: str = "key"
    distractor: str = "alt"
    partner: str = "anchor"
    trigger_pool: tuple[str, ...] = field(default_factory=lambda: _pool("trig", 12))
    filler_pool: tuple[str, ...] = field(default_factory=lambda: _pool("w", 40))
    partner_pool: tuple[str, ...] = field(default_factory=lambda: _pool("anc", 4))
    length: tuple[int, int] = (12, 20)
    trigger_counts: tuple[int, ...] = ()
    count_probs: tuple[float, ...] = ()
    partner_p: float = 0.5
    context: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GenerationError(f"unknown constraint kind {self.kind!r}; expected one of {KINDS}")
        if not self.trigger_counts:
            counts, probs = _DEFAULT_COUNTS[self.kind]
            object.__setattr__(self, "trigger_counts", counts)
            object.__setattr__(self, "count_probs", probs)
        elif not self.count_probs:
            k = len(self.trigger_counts)
            object.__setattr__(self, "count_probs", tuple([1.0 / k] * k))
        if len(self.count_probs) != len(self.trigger_counts):
            raise GenerationError("count_probs must align with trigger_counts")
        if not self.trigger_pool or not self.filler_pool:
            raise GenerationError("trigger and filler pools must be non-empty")
        if set(self.trigger_pool) & set(self.filler_pool):
            raise GenerationError("trigger and filler pools must be disjoint")

    @property
    def labels(self) -> tuple[str, str, str]:
        return f"B-{self.constrained}", f"B-{self.distractor}", f"B-{self.partner}"


def _slots_needed(n: int, context: int) -> int:
    # n points pairwise > context apart, each >= context from both ends
    return 2 * context + (n - 1) * (context + 1) + 1 if n else 0


def _check_satisfiable(spec: ConstraintSpec):
    counts = [c for c, p in zip(spec.trigger_counts, spec.count_probs) if p > 0]
    if not counts:
        raise GenerationError("trigger count distribution has no mass")
    if spec.kind in ("exactly-once", "first-occurrence-only") and max(counts) == 0:
        raise GenerationError(f"{spec.kind} needs at least one trigger slot")
    if spec.kind in ("exactly-once", "first-occurrence-only") and min(counts) == 0:
        raise GenerationError(f"{spec.kind} cannot allow sequences without triggers")
    if spec.kind == "co-occurrence" and not spec.partner_pool:
        raise GenerationError("co-occurrence needs a partner token pool")
    extra = 1 if spec.kind == "co-occurrence" else 0
    need = _slots_needed(max(counts) + extra, spec.context)
    if need > spec.length[1]:
        raise GenerationError(f"sequences of length <= {spec.length[1]} cannot hold "
                              f"{max(counts) + extra} separated triggers (need {need})")


def _positions(rng: np.random.Generator, T: int, n: int, context: int) -> list[int]:
    # sample gaps: pick n sorted points then spread by the required spacing
    free = T - _slots_needed(n, context)
    cuts = np.sort(rng.integers(0, free + 1, size=n))
    return [int(context + c + i * (context + 1)) for i, c in enumerate(cuts)]


def generate_constraint_corpus(spec: ConstraintSpec, n_sequences: int, seed: int) -> Corpus:
    _check_satisfiable(spec)
    rng = np.random.default_rng(seed)
    c_lab, d_lab, p_lab = spec.labels
    counts = np.asarray(spec.trigger_counts)
    probs = np.asarray(spec.count_probs, dtype=float)
    probs = probs / probs.sum()
    sentences = []
    for i in range(n_sequences):
        n = int(rng.choice(counts, p=probs))
        with_partner = spec.kind == "co-occurrence" and rng.random() < spec.partner_p
        n_slots = n + int(with_partner)
        lo = max(spec.length[0], _slots_needed(n_slots, spec.context))
        T = int(rng.integers(lo, spec.length[1] + 1))
        tokens = list(rng.choice(spec.filler_pool, size=T))
        labels = ["O"] * T
        slots = _positions(rng, T, n_slots, spec.context)
        partner_at = None
        if with_partner:
            partner_at = slots.pop(int(rng.integers(len(slots))))
            tokens[partner_at] = str(rng.choice(spec.partner_pool))
            labels[partner_at] = p_lab
        for j, pos in enumerate(slots):
            tokens[pos] = str(rng.choice(spec.trigger_pool))
            if spec.kind in ("at-most-once", "first-occurrence-only"):
                labels[pos] = c_lab if j == 0 else d_lab
            elif spec.kind == "exactly-once":
                labels[pos] = c_lab if j == len(slots) - 1 else d_lab
            else:
                labels[pos] = c_lab if with_partner else d_lab
        meta = {"constraint": spec.kind, "triggers": slots, "partner": partner_at}
        sentences.append(Sentence([str(t) for t in tokens], labels, i, None, meta))
    return Corpus(sentences, f"synthetic:{spec.kind}:seed={seed}")


def constraint_violations(label_seqs: Sequence[Sequence[str]], spec: ConstraintSpec,
                          token_seqs: Sequence[Sequence[str]] | None = None) -> list[int]:
    """Indices of sequences that break the constraint.

    Only the label sequences are inspected, except for
    ``first-occurrence-only``, which also needs the tokens to locate
    triggers.
    """
    c_type, d_type, p_type = spec.constrained, spec.distractor, spec.partner
    bad = []
    for i, labels in enumerate(label_seqs):
        types = [typ for typ, _, _ in extract_chunks(labels)]
        n_c = types.count(c_type)
        if spec.kind == "at-most-once":
            ok = n_c <= 1
        elif spec.kind == "exactly-once":
            ok = n_c == 1
        elif spec.kind == "co-occurrence":
            ok = (n_c > 0) == (p_type in types)
        else:
            if token_seqs is None:
                raise ValueError("first-occurrence-only audit needs the tokens")
            pool = set(spec.trigger_pool)
            trig = [j for j, tok in enumerate(token_seqs[i]) if tok in pool]
            want = [f"B-{c_type}" if k == 0 else f"B-{d_type}" for k in range(len(trig))]
            ok = [labels[j] for j in trig] == want
        if not ok:
            bad.append(i)
    return bad
