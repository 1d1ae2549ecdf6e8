import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elcrf.data import (
    Corpus,
    CorpusFormatError,
    Sentence,
    chunk_f1,
    compare_reports,
    extract_chunks,
    format_comparison,
    loo_cross_validate,
    read_conll,
    write_conll,
)
from elcrf.training import ConfigError, TrainConfig


class TestReadConll:
    def test_single_token(self):
        c = read_conll(io.StringIO("John B-PER\n\n"))
        assert len(c) == 1
        assert c.sentences[0].tokens == ["John"] and c.sentences[0].labels == ["B-PER"]

    def test_empty(self):
        assert len(read_conll(io.StringIO(""))) == 0

    def test_digit_normalize(self):
        assert read_conll(io.StringIO("12 B-DATE\n"), digit_normalize=True).sentences[0].tokens == ["00"]
        assert read_conll(io.StringIO("12 B-DATE\n")).sentences[0].tokens == ["12"]

    def test_last_column_is_label(self):
        s = read_conll(io.StringIO("a NN x B-X\nb NN y I-X\n\n\n\n")).sentences
        assert len(s) == 1 and s[0].labels == ["B-X", "I-X"]

    def test_single_column_error(self):
        with pytest.raises(CorpusFormatError, match="line 3"):
            read_conll(io.StringIO("a O\n\nbad\n"))

    def test_documents(self):
        text = "-DOCSTART- O\n\na O\n\nb O\n\n-DOCSTART- O\n\nc O\n\n"
        c = read_conll(io.StringIO(text))
        assert c.documents() == [[0, 1], [2]]
        c = read_conll(io.StringIO("a O\n\nb O\n\n"))
        assert c.documents() == [[0], [1]]


def _roundtrip(text):
    c = read_conll(io.StringIO(text))
    out = io.StringIO()
    write_conll(c, out)
    return out.getvalue()


def test_roundtrip_fixed_point():
    text = "-DOCSTART- O\n\nJohn NNP B-PER\nlives VBZ O\n\nParis NNP B-LOC\n\n-DOCSTART- O\n\nx X O\n\n"
    once = _roundtrip(text)
    assert _roundtrip(once) == once
    a, b = read_conll(io.StringIO(text)), read_conll(io.StringIO(once))
    assert a.token_seqs == b.token_seqs and a.label_seqs == b.label_seqs
    assert a.documents() == b.documents()


def test_prediction_column():
    c = read_conll(io.StringIO("a O\nb B-X\n\n"))
    out = io.StringIO()
    write_conll(c, out, [["O", "O"]])
    assert out.getvalue() == "a O O\nb B-X O\n\n"
    with pytest.raises(ValueError):
        write_conll(c, io.StringIO(), [["O"]])


class TestChunkF1:
    def test_identity(self):
        seqs = [["B-PER", "I-PER", "O", "B-LOC"], ["O"]]
        r = chunk_f1(seqs, seqs)
        assert (r.overall.precision, r.overall.recall, r.overall.f1) == (100.0, 100.0, 100.0)

    def test_half_right(self):
        gold = [["B-A", "O", "B-B"]]
        pred = [["B-A", "O", "B-A"]]
        o = chunk_f1(gold, pred).overall
        assert (o.precision, o.recall, o.f1) == (50.0, 50.0, 50.0)

    def test_all_outside(self):
        o = chunk_f1([["B-A", "I-A"]], [["O", "O"]]).overall
        assert (o.precision, o.recall, o.f1) == (0.0, 0.0, 0.0)

    def test_hierarchical_type_must_match(self):
        r = chunk_f1([["B-venue/date"]], [["B-venue"]])
        assert r.overall.f1 == 0.0
        assert r.per_entity["venue/date"].n_gold == 1

    def test_boundary_must_match(self):
        assert chunk_f1([["B-A", "I-A"]], [["B-A", "O"]]).overall.f1 == 0.0

    def test_support(self):
        r = chunk_f1([["B-A", "O", "B-A", "B-B"]], [["O"] * 4])
        assert r.per_entity["A"].support == 2 and r.per_entity["B"].support == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            chunk_f1([["O"]], [])
        with pytest.raises(ValueError, match="sequence 0"):
            chunk_f1([["O"]], [["O", "O"]])

    def test_json_and_table(self):
        r = chunk_f1([["B-A", "O"]], [["B-A", "B-B"]])
        d = json.loads(r.to_json())
        assert d["entities"]["A"]["f1"] == 100.0 and d["overall"]["predicted"] == 2
        assert "overall" in r.format_table()

    def test_comparison_sorted_by_gain(self):
        gold = [["B-A", "B-B", "B-C"]]
        base = chunk_f1(gold, [["B-A", "O", "O"]])
        new = chunk_f1(gold, [["O", "B-B", "B-C"]])
        rows = compare_reports(base, new)
        assert [r[0] for r in rows] == ["B", "C", "A"]
        assert rows[-1][3] == -100.0
        assert "overall" in format_comparison(base, new)


def naive_chunks(labels):
    """IOB segmentation written directly from the definition."""
    out = []
    cur = None
    for i, lab in enumerate(labels + ["O"]):
        if lab == "O" or lab.startswith("B-") or (cur is not None and lab[2:] != cur[0]):
            if cur is not None:
                out.append((cur[0], cur[1], i))
                cur = None
        if lab != "O" and cur is None:
            cur = (lab[2:], i)
    return out


def test_chunker_matches_naive_reference():
    rng = np.random.default_rng(0)
    tags = ["O", "B-A", "I-A", "B-B", "I-B", "B-a/b", "I-a/b"]
    gold, pred = [], []
    for _ in range(1000):
        T = int(rng.integers(1, 15))
        g = list(rng.choice(tags, size=T))
        p = list(rng.choice(tags, size=T))
        assert extract_chunks(g) == naive_chunks(g), g
        gold.append(g)
        pred.append(p)
    r = chunk_f1(gold, pred)
    ng = sum(len(naive_chunks(g)) for g in gold)
    npred = sum(len(naive_chunks(p)) for p in pred)
    ok = sum(len(set(naive_chunks(g)) & set(naive_chunks(p))) for g, p in zip(gold, pred))
    assert (r.overall.n_gold, r.overall.n_pred, r.overall.n_correct) == (ng, npred, ok)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["O", "B-X", "I-X", "S-X", "E-X"]), min_size=1, max_size=10))
def test_chunks_are_disjoint_and_ordered(labels):
    spans = extract_chunks(labels)
    for (_, s, e), (_, s2, _) in zip(spans, spans[1:]):
        assert s < e <= s2
    for _, s, e in spans:
        assert all(labels[i] != "O" for i in range(s, e))


def tiny_corpus(n_docs, seed=0):
    rng = np.random.default_rng(seed)
    sents = []
    for d in range(n_docs):
        toks = list(rng.choice(["a", "b", "x"], size=4))
        sents.append(Sentence(toks, ["B-X" if t == "x" else "O" for t in toks], doc=d))
    return Corpus(sents)


LOO_CFG = TrainConfig(max_epochs=2, d_emb=4, hidden_states=2, factor_size=1, dropout_p=0.0)


class TestLOO:
    def test_two_documents(self):
        corpus = tiny_corpus(2)
        res = loo_cross_validate(LOO_CFG, corpus)
        assert res.n_models == 2
        assert sorted(i for fold in res.fold_docs for i in fold) == [0, 1]
        assert all(p is not None and len(p) == 4 for p in res.predictions)

    def test_deterministic(self):
        corpus = tiny_corpus(4, 1)
        a = loo_cross_validate(LOO_CFG, corpus)
        b = loo_cross_validate(LOO_CFG, corpus)
        assert a.report == b.report and a.predictions == b.predictions

    def test_worker_count_does_not_matter(self):
        corpus = tiny_corpus(3, 2)
        assert loo_cross_validate(LOO_CFG, corpus, jobs=2).predictions == \
            loo_cross_validate(LOO_CFG, corpus).predictions

    def test_one_fold_per_document(self):
        res = loo_cross_validate(TrainConfig(**{**LOO_CFG.to_dict(), "max_epochs": 1}), tiny_corpus(101, 3))
        assert res.n_models == 101
        assert len(res.predictions) == 101

    def test_needs_two_documents(self):
        with pytest.raises(ConfigError):
            loo_cross_validate(LOO_CFG, tiny_corpus(1))

    def test_blocks_merged_per_document(self):
        sents = [Sentence(["x", "a"], ["B-X", "O"], doc=0), Sentence(["b"], ["O"], doc=0),
                 Sentence(["a", "x"], ["O", "B-X"], doc=1), Sentence(["x"], ["B-X"], doc=1)]
        corpus = Corpus(sents, doc_markers=True)
        merged = corpus.merge_documents()
        assert merged.token_seqs == [["x", "a", "b"], ["a", "x", "x"]]
        for merge in (True, False):
            res = loo_cross_validate(LOO_CFG, corpus, merge_blocks=merge)
            assert res.n_models == 2
            assert [len(p) for p in res.predictions] == [2, 1, 2, 1]
