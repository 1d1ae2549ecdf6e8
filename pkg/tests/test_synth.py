from collections import Counter, defaultdict

import numpy as np
import pytest

from elcrf.data import extract_chunks
from elcrf.synth import (
    KINDS,
    ConstraintSpec,
    GenerationError,
    constraint_violations,
    generate_constraint_corpus,
)


def test_at_most_once_two_triggers():
    spec = ConstraintSpec(trigger_counts=(2,))
    for s in generate_constraint_corpus(spec, 50, 0):
        trig = [lab for tok, lab in zip(s.tokens, s.labels) if tok in spec.trigger_pool]
        assert sorted(trig) == ["B-alt", "B-key"]


def test_empty():
    assert len(generate_constraint_corpus(ConstraintSpec(), 0, 0)) == 0


def test_co_occurrence_independent_scan():
    spec = ConstraintSpec(kind="co-occurrence")
    corpus = generate_constraint_corpus(spec, 300, 1)
    seen_both = seen_neither = 0
    for s in corpus:
        has_p = any(lab.endswith("anchor") for lab in s.labels)
        has_q = any(lab.endswith("key") for lab in s.labels)
        assert has_p == has_q
        seen_both += has_p
        seen_neither += not has_p
    assert seen_both and seen_neither


@pytest.mark.parametrize("kind", KINDS)
def test_corpus_passes_own_audit(kind):
    spec = ConstraintSpec(kind=kind)
    corpus = generate_constraint_corpus(spec, 200, 2)
    assert constraint_violations(corpus.label_seqs, spec, corpus.token_seqs) == []
    assert all(s.meta["constraint"] == kind for s in corpus)


def test_audit_catches_violations():
    spec = ConstraintSpec()
    assert constraint_violations([["B-key", "O", "B-key"], ["B-key", "B-alt"]], spec) == [0]
    spec = ConstraintSpec(kind="exactly-once")
    assert constraint_violations([["O"], ["B-alt", "B-key"]], spec) == [0]
    spec = ConstraintSpec(kind="first-occurrence-only")
    with pytest.raises(ValueError):
        constraint_violations([["O"]], spec)
    assert constraint_violations([["B-alt", "B-key"]], spec, [["trig0", "trig1"]]) == [0]


def test_deterministic():
    a = generate_constraint_corpus(ConstraintSpec(), 20, 5)
    b = generate_constraint_corpus(ConstraintSpec(), 20, 5)
    assert a.token_seqs == b.token_seqs and a.label_seqs == b.label_seqs


class TestUnsatisfiable:
    def test_exactly_once_without_slots(self):
        with pytest.raises(GenerationError):
            generate_constraint_corpus(ConstraintSpec(kind="exactly-once", trigger_counts=(0,)), 1, 0)

    def test_too_short(self):
        with pytest.raises(GenerationError, match="cannot hold"):
            generate_constraint_corpus(ConstraintSpec(length=(5, 8), trigger_counts=(2,)), 1, 0)

    def test_unknown_kind(self):
        with pytest.raises(GenerationError):
            ConstraintSpec(kind="at-least-twice")


@pytest.mark.parametrize("kind", KINDS)
def test_triggers_are_separated(kind):
    spec = ConstraintSpec(kind=kind)
    special = set(spec.trigger_pool) | set(spec.partner_pool)
    for s in generate_constraint_corpus(spec, 200, 3):
        marks = [i for i, t in enumerate(s.tokens) if t in special]
        assert marks == sorted(s.meta["triggers"] + ([s.meta["partner"]] if s.meta["partner"] is not None else []))
        for i in marks:
            assert spec.context <= i <= len(s.tokens) - 1 - spec.context
        assert all(b - a > spec.context for a, b in zip(marks, marks[1:]))
        assert all(len(c) == 1 for c in [s.tokens[a:e] for _, a, e in extract_chunks(s.labels)])


def window_features(tokens, i, w):
    return [(o, tokens[i + o] if 0 <= i + o < len(tokens) else "<pad>") for o in range(-w, w + 1)]


def test_window_classifier_ceiling():
    """A naive Bayes classifier over any window of half-width <= context
    cannot beat always guessing the majority trigger label."""
    spec = ConstraintSpec()
    w = spec.context
    train, test = (generate_constraint_corpus(spec, n, seed) for n, seed in ((3000, 10), (1000, 11)))

    def trigger_rows(corpus):
        for s in corpus:
            for i in s.meta["triggers"]:
                yield window_features(s.tokens, i, w), s.labels[i]

    prior = Counter()
    counts = defaultdict(Counter)
    for feats, lab in trigger_rows(train):
        prior[lab] += 1
        for f in feats:
            counts[lab][f] += 1
    labels = sorted(prior)
    majority = prior.most_common(1)[0][0]
    n_feat_values = len({f for lab in labels for f in counts[lab]})

    def score(feats, lab):
        total = sum(counts[lab].values())
        return np.log(prior[lab]) + sum(np.log((counts[lab][f] + 1) / (total + n_feat_values)) for f in feats)

    rows = list(trigger_rows(test))
    nb_acc = np.mean([max(labels, key=lambda lab: score(f, lab)) == y for f, y in rows])
    maj_acc = np.mean([y == majority for _, y in rows])
    assert nb_acc <= maj_acc + 0.03, (nb_acc, maj_acc)
    # the constraint, seen globally, decides every trigger
    assert maj_acc < 0.7
