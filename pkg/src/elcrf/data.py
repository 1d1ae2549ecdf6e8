"""Corpus I/O in CoNLL column format, chunk-level F1 scoring in the style of
``conlleval``, and leave-one-document-out cross-validation."""
from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

from .featurizer import normalize_digits
from .labels import OUTSIDE, split_tag

DOC_SEPARATOR = "-DOCSTART-"


class CorpusFormatError(ValueError):
    pass


@dataclass
class Sentence:
    tokens: list[str]
    labels: list[str]
    doc: int = 0
    columns: Optional[list[list[str]]] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tokens)


@dataclass
class Corpus:
    sentences: list[Sentence]
    source: str = ""
    digit_normalize: bool = False
    doc_markers: bool = False

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def token_seqs(self) -> list[list[str]]:
        return [s.tokens for s in self.sentences]

    @property
    def label_seqs(self) -> list[list[str]]:
        return [s.labels for s in self.sentences]

    def documents(self) -> list[list[int]]:
        """Sentence indices grouped by document, in document order."""
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(self.sentences):
            groups.setdefault(s.doc, []).append(i)
        return [groups[d] for d in sorted(groups)]

    def merge_documents(self) -> "Corpus":
        """One sequence per document, its blocks concatenated in order."""
        merged = []
        for idx in self.documents():
            parts = [self.sentences[i] for i in idx]
            cols = None
            if all(p.columns is not None for p in parts):
                cols = [c for p in parts for c in p.columns]
            merged.append(Sentence([t for p in parts for t in p.tokens],
                                   [lab for p in parts for lab in p.labels], parts[0].doc, cols))
        return Corpus(merged, self.source, self.digit_normalize, self.doc_markers)

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus([self.sentences[i] for i in indices], self.source,
                      self.digit_normalize, self.doc_markers)


def read_conll(source: TextIO, digit_normalize: bool = False, doc_separator: str = DOC_SEPARATOR,
               name: str = "") -> Corpus:
    """Parse whitespace-separated token lines (first column token, last column
    label) with blank lines between sequences.

    Lines whose first column is ``doc_separator`` start a new document. When
    no separator occurs, each sequence is its own document.
    """
    sentences: list[Sentence] = []
    cols: list[list[str]] = []
    doc = 0
    saw_marker = False
    started = False

    def flush():
        nonlocal cols
        if cols:
            toks = [normalize_digits(c[0]) if digit_normalize else c[0] for c in cols]
            sentences.append(Sentence(toks, [c[-1] for c in cols], doc, cols))
            cols = []

    for lineno, line in enumerate(source, start=1):
        parts = line.split()
        if not parts:
            flush()
            continue
        if parts[0] == doc_separator:
            flush()
            if started or saw_marker:
                doc += 1
            saw_marker = True
            continue
        if len(parts) < 2:
            raise CorpusFormatError(f"line {lineno}: expected token and label columns, got {line.rstrip()!r}")
        cols.append(parts)
        started = True
    flush()
    if not saw_marker:
        for i, s in enumerate(sentences):
            s.doc = i
    else:
        # renumber densely; separators with no sentences after them are dropped
        remap = {d: i for i, d in enumerate(sorted({s.doc for s in sentences}))}
        for s in sentences:
            s.doc = remap[s.doc]
    return Corpus(sentences, name, digit_normalize, saw_marker)


def write_conll(corpus: Corpus, out: TextIO, predictions: Optional[Sequence[Sequence[str]]] = None,
                doc_separator: str = DOC_SEPARATOR) -> None:
    """Write the corpus back out; ``predictions`` appends one label column."""
    if predictions is not None and len(predictions) != len(corpus):
        raise ValueError("one prediction sequence per sentence required")
    prev_doc = None
    for i, s in enumerate(corpus.sentences):
        if corpus.doc_markers and s.doc != prev_doc:
            out.write(f"{doc_separator} O\n\n")
        prev_doc = s.doc
        rows = s.columns if s.columns is not None else [[t, lab] for t, lab in zip(s.tokens, s.labels)]
        pred = predictions[i] if predictions is not None else None
        if pred is not None and len(pred) != len(rows):
            raise ValueError(f"sentence {i}: prediction length {len(pred)} != {len(rows)}")
        for j, row in enumerate(rows):
            fields = list(row) + ([pred[j]] if pred is not None else [])
            out.write(" ".join(fields) + "\n")
        out.write("\n")


# -- chunking -------------------------------------------------------------


def _chunk_end(prev_tag, tag, prev_type, typ):
    if prev_tag in ("E", "S"):
        return True
    if prev_tag in ("B", "I", "") and tag in ("B", "S", OUTSIDE):
        return True
    return prev_tag != OUTSIDE and prev_type != typ


def _chunk_start(prev_tag, tag, prev_type, typ):
    if tag in ("B", "S"):
        return True
    if prev_tag in ("E", "S", OUTSIDE) and tag in ("E", "I", ""):
        return True
    return tag != OUTSIDE and prev_type != typ


def extract_chunks(labels: Sequence[str]) -> list[tuple[str, int, int]]:
    """``(type, start, end)`` spans with ``end`` exclusive.

    Follows conlleval: a chunk opens on ``B-``/``S-`` or on a continuation tag
    whose type differs from the previous tag's, and the type is the full
    hierarchical path after the prefix.
    """
    chunks = []
    prev_tag, prev_type = OUTSIDE, ""
    start = None
    for i, lab in enumerate(labels):
        tag, typ = split_tag(lab)
        if start is not None and _chunk_end(prev_tag, tag, prev_type, typ):
            chunks.append((prev_type, start, i))
            start = None
        if _chunk_start(prev_tag, tag, prev_type, typ):
            start = i
        prev_tag, prev_type = tag, typ
    if start is not None:
        chunks.append((prev_type, start, len(labels)))
    return chunks


# -- scoring --------------------------------------------------------------


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float
    n_gold: int
    n_pred: int
    n_correct: int

    @property
    def support(self) -> int:
        return self.n_gold

    @classmethod
    def from_counts(cls, n_gold: int, n_pred: int, n_correct: int) -> "Score":
        p = 100.0 * n_correct / n_pred if n_pred else 0.0
        r = 100.0 * n_correct / n_gold if n_gold else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, n_gold, n_pred, n_correct)


@dataclass(frozen=True)
class ChunkF1Report:
    overall: Score
    per_entity: dict[str, Score]

    def to_dict(self) -> dict:
        def d(s: Score):
            return {"precision": s.precision, "recall": s.recall, "f1": s.f1,
                    "support": s.n_gold, "predicted": s.n_pred, "correct": s.n_correct}
        return {"overall": d(self.overall), "entities": {k: d(v) for k, v in sorted(self.per_entity.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        o = self.overall
        width = max([len("overall")] + [len(k) for k in self.per_entity])
        lines = [f"{'label':<{width}}  {'prec':>7} {'rec':>7} {'F1':>7} {'S':>6}"]
        for name in sorted(self.per_entity):
            s = self.per_entity[name]
            lines.append(f"{name:<{width}}  {s.precision:7.2f} {s.recall:7.2f} {s.f1:7.2f} {s.n_gold:6d}")
        lines.append(f"{'overall':<{width}}  {o.precision:7.2f} {o.recall:7.2f} {o.f1:7.2f} {o.n_gold:6d}")
        return "\n".join(lines)


def chunk_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> ChunkF1Report:
    """Exact span-and-type chunk precision/recall/F1 (percentages)."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    n_gold: dict[str, int] = defaultdict(int)
    n_pred: dict[str, int] = defaultdict(int)
    n_ok: dict[str, int] = defaultdict(int)
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sequence {i}: gold length {len(g)} != predicted length {len(p)}")
        gc = extract_chunks(g)
        pc = extract_chunks(p)
        for typ, _, _ in gc:
            n_gold[typ] += 1
        for typ, _, _ in pc:
            n_pred[typ] += 1
        for typ, _, _ in set(gc) & set(pc):
            n_ok[typ] += 1
    types = set(n_gold) | set(n_pred)
    per = {t: Score.from_counts(n_gold[t], n_pred[t], n_ok[t]) for t in types}
    overall = Score.from_counts(sum(n_gold.values()), sum(n_pred.values()), sum(n_ok.values()))
    return ChunkF1Report(overall, per)


def compare_reports(base: ChunkF1Report, new: ChunkF1Report) -> list[tuple[str, float, float, float, int]]:
    """Per-entity ``(label, base F1, new F1, gain, support)`` rows, largest
    gain first."""
    rows = []
    for name in set(base.per_entity) | set(new.per_entity):
        b = base.per_entity.get(name)
        n = new.per_entity.get(name)
        bf = b.f1 if b else 0.0
        nf = n.f1 if n else 0.0
        support = (b or n).n_gold
        rows.append((name, bf, nf, nf - bf, support))
    rows.sort(key=lambda r: (-r[3], r[0]))
    return rows


def format_comparison(base: ChunkF1Report, new: ChunkF1Report, names=("base", "new")) -> str:
    rows = compare_reports(base, new)
    width = max([len("overall")] + [len(r[0]) for r in rows])
    lines = [f"{'label':<{width}}  {names[0]:>7} {names[1]:>7} {'+':>7} {'S':>6}"]
    for name, bf, nf, gain, support in rows:
        lines.append(f"{name:<{width}}  {bf:7.2f} {nf:7.2f} {gain:7.2f} {support:6d}")
    bo, no = base.overall, new.overall
    lines.append(f"{'overall':<{width}}  {bo.f1:7.2f} {no.f1:7.2f} {no.f1 - bo.f1:7.2f} {bo.n_gold:6d}")
    return "\n".join(lines)


# -- leave-one-out --------------------------------------------------------


@dataclass
class LOOResult:
    report: ChunkF1Report
    predictions: list[list[str]]
    n_models: int
    fold_docs: list[list[int]]


def _run_fold(args):
    from .training import train
    from .model import predict

    config, corpus, held_out = args
    keep = [i for i in range(len(corpus)) if i not in set(held_out)]
    params, _ = train(config, corpus.subset(keep), None)
    return [predict(params, corpus.sentences[i].tokens) for i in held_out]


def loo_cross_validate(config, corpus: Corpus, jobs: int = 1, merge_blocks: bool = True) -> LOOResult:
    """Train one model per held-out document, merge the held-out predictions
    and score them in a single pass.

    With ``merge_blocks`` each document's blocks are tagged as one sequence;
    predictions are split back into the original blocks either way.
    """
    from .training import ConfigError

    docs = corpus.documents()
    if len(docs) < 2:
        raise ConfigError("leave-one-out needs at least two documents")
    if merge_blocks and len(docs) < len(corpus):
        inner = loo_cross_validate(config, corpus.merge_documents(), jobs, merge_blocks=False)
        preds: list[list[str]] = []
        for idx, doc_pred in zip(docs, inner.predictions):
            start = 0
            for i in idx:
                preds.append(doc_pred[start:start + len(corpus.sentences[i])])
                start += len(corpus.sentences[i])
        return LOOResult(chunk_f1(corpus.label_seqs, preds), preds, len(docs), docs)
    tasks = [(config, corpus, held) for held in docs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_fold, tasks))
    else:
        outputs = [_run_fold(t) for t in tasks]
    merged: list[Optional[list[str]]] = [None] * len(corpus)
    for held, preds in zip(docs, outputs):
        for i, p in zip(held, preds):
            merged[i] = p
    report = chunk_f1(corpus.label_seqs, merged)
    return LOOResult(report, merged, len(docs), docs)
