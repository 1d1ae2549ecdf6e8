"""Output label space: hierarchical label paths, IOB/IOBES tags and the
allocation of latent states to labels."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

OUTSIDE = "O"
SCHEMES = ("iob", "iobes")


class SchemaError(ValueError):
    """Unknown label or inconsistent label set."""


class MalformedLabelError(SchemaError):
    pass


class AllocationError(ValueError):
    """Requested latent state budget cannot cover the label set."""


def parse_hierarchical_label(raw: str) -> list[str]:
    """Split a hierarchical entity type such as ``venue/editor/person`` into
    its path segments.

    The outside label ``O`` has an empty path. A leading IOB prefix is not
    stripped here; use :func:`split_tag` for full tags.
    """
    if not raw:
        raise MalformedLabelError("empty label")
    if raw == OUTSIDE:
        return []
    segments = raw.split("/")
    if any(not s for s in segments):
        raise MalformedLabelError(f"empty path segment in label {raw!r}")
    return segments


def split_tag(label: str) -> tuple[str, str]:
    """Return ``(prefix, entity_type)`` for a tag like ``B-venue/date``.

    ``O`` maps to ``("O", "")``. Tags without a recognised prefix are bare
    entity types with an empty prefix; they never need a continuation tag.
    """
    if label == OUTSIDE:
        return OUTSIDE, ""
    if len(label) > 2 and label[1] == "-" and label[0] in "BIES":
        return label[0], label[2:]
    return "", label


def iob_to_iobes(labels: Sequence[str]) -> list[str]:
    out = []
    for i, lab in enumerate(labels):
        prefix, typ = split_tag(lab)
        if prefix == OUTSIDE:
            out.append(lab)
            continue
        nxt_prefix, nxt_typ = split_tag(labels[i + 1]) if i + 1 < len(labels) else (OUTSIDE, "")
        continues = nxt_prefix == "I" and nxt_typ == typ
        if prefix == "B":
            out.append(("B-" if continues else "S-") + typ)
        elif prefix == "I":
            out.append(("I-" if continues else "E-") + typ)
        else:
            raise SchemaError(f"not an IOB tag: {lab!r}")
    return out


def iobes_to_iob(labels: Sequence[str]) -> list[str]:
    out = []
    for lab in labels:
        prefix, typ = split_tag(lab)
        if prefix == "S":
            out.append("B-" + typ)
        elif prefix == "E":
            out.append("I-" + typ)
        else:
            out.append(lab)
    return out


def _tag_order(label: str) -> tuple:
    prefix, typ = split_tag(label)
    if prefix == OUTSIDE:
        return (0, "", 0)
    return (1, typ, "BIES".find(prefix) if prefix else -1)


@dataclass(frozen=True)
class LabelSchema:
    """Ordered output labels with their hierarchy paths and corpus entity
    counts (used to allocate latent states)."""

    labels: tuple[str, ...]
    entity_counts: tuple[int, ...]
    scheme: str = "iob"
    hierarchy: tuple[tuple[str, ...], ...] = field(init=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entity_counts", tuple(int(c) for c in self.entity_counts))
        if not labels:
            raise SchemaError("label schema needs at least one label")
        if len(set(labels)) != len(labels):
            raise SchemaError("duplicate labels in schema")
        if len(self.entity_counts) != len(labels):
            raise SchemaError("entity_counts must align with labels")
        if any(c < 0 for c in self.entity_counts):
            raise SchemaError("entity counts must be non-negative")
        if self.scheme not in SCHEMES:
            raise SchemaError(f"unknown tagging scheme {self.scheme!r}")
        paths = []
        for lab in labels:
            prefix, typ = split_tag(lab)
            if prefix == OUTSIDE:
                paths.append(())
                continue
            if self.scheme == "iob" and prefix in ("E", "S"):
                raise SchemaError(f"label {lab!r} is not valid under scheme {self.scheme}")
            paths.append(tuple(parse_hierarchical_label(typ)))
        object.__setattr__(self, "hierarchy", tuple(paths))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown label {label!r}") from None

    @property
    def _index(self) -> dict[str, int]:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {lab: i for i, lab in enumerate(self.labels)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def encode(self, labels: Iterable[str]) -> np.ndarray:
        return np.array([self.index(lab) for lab in labels], dtype=np.intp)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.labels[i] for i in ids]

    @classmethod
    def from_sequences(cls, label_seqs: Iterable[Sequence[str]], scheme: str = "iob") -> "LabelSchema":
        """Infer the schema from gold label sequences.

        Labels are ordered ``O`` first, then by entity type and prefix.
        A label's count is the number of entities (chunks) of its type; for
        ``O`` it is the number of maximal outside runs.
        """
        label_seqs = [list(s) for s in label_seqs]
        seen = {lab for seq in label_seqs for lab in seq}
        if not seen:
            raise SchemaError("cannot infer a schema from an empty corpus")
        labels = sorted(seen, key=_tag_order)
        counts = entity_counts(label_seqs, labels)
        return cls(tuple(labels), tuple(counts), scheme)

    @classmethod
    def from_file(cls, lines: Iterable[str], label_seqs: Iterable[Sequence[str]] = (),
                  scheme: str = "iob") -> "LabelSchema":
        """Schema from a label list (one label per line, canonical order).
        Counts come from ``label_seqs`` when given, else every label gets 1."""
        labels = [ln.strip() for ln in lines if ln.strip()]
        label_seqs = [list(s) for s in label_seqs]
        if label_seqs:
            unknown = {lab for seq in label_seqs for lab in seq} - set(labels)
            if unknown:
                raise SchemaError(f"labels missing from label file: {sorted(unknown)}")
            counts = entity_counts(label_seqs, labels)
        else:
            counts = [1] * len(labels)
        return cls(tuple(labels), tuple(counts), scheme)


def entity_counts(label_seqs: Iterable[Sequence[str]], labels: Sequence[str]) -> list[int]:
    from .data import extract_chunks

    chunk_counts: Counter = Counter()
    outside_runs = 0
    for seq in label_seqs:
        for typ, _, _ in extract_chunks(seq):
            chunk_counts[typ] += 1
        prev_o = False
        for lab in seq:
            is_o = lab == OUTSIDE
            if is_o and not prev_o:
                outside_runs += 1
            prev_o = is_o
    out = []
    for lab in labels:
        prefix, typ = split_tag(lab)
        out.append(outside_runs if prefix == OUTSIDE else chunk_counts[typ])
    return out


@dataclass(frozen=True)
class StateSpace:
    """Many-to-one map from ``M`` latent states to labels. Each label owns a
    contiguous block of state indices."""

    schema: LabelSchema
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) != self.schema.size:
            raise AllocationError("one state count per label required")
        if any(s < 1 for s in sizes):
            raise AllocationError("every label must own at least one state")
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
        owner = np.repeat(np.arange(len(sizes), dtype=np.intp), sizes)
        owner.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "state_to_label", owner)

    @property
    def M(self) -> int:
        return int(self._offsets[-1])

    @property
    def N(self) -> int:
        return self.schema.size

    def label_to_states(self, label: int | str) -> range:
        if isinstance(label, str):
            label = self.schema.index(label)
        return range(int(self._offsets[label]), int(self._offsets[label + 1]))

    def label_of(self, state: int) -> str:
        return self.schema.labels[self.state_to_label[state]]

    def allocation(self) -> dict[str, int]:
        return dict(zip(self.schema.labels, self.sizes))


def allocate_states(schema: LabelSchema, M: int) -> StateSpace:
    """Apportion ``M`` latent states to labels proportionally to their entity
    counts (largest remainder, ties by label order), with at least one state
    per label.

    Labels whose proportional share rounds below one are pinned at one state
    and the remainder is re-apportioned among the others until stable.
    """
    N = schema.size
    if M < N:
        raise AllocationError(f"cannot allocate {M} states to {N} labels")
    counts = np.asarray(schema.entity_counts, dtype=np.float64)
    if counts.sum() <= 0:
        raise AllocationError("entity counts sum to zero")

    pinned = np.zeros(N, dtype=bool)
    while True:
        free = ~pinned
        budget = M - int(pinned.sum())
        sizes = np.ones(N, dtype=np.int64)
        sizes[free] = _largest_remainder(counts[free], budget)
        newly = free & (sizes < 1)
        if not newly.any():
            return StateSpace(schema, tuple(int(s) for s in sizes))
        pinned |= newly


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    if weights.sum() <= 0:
        # nothing to be proportional to; spread evenly, ties by order
        weights = np.ones_like(weights)
    quotas = total * weights / weights.sum()
    base = np.floor(quotas).astype(np.int64)
    rem = quotas - base
    leftover = total - int(base.sum())
    # stable sort on -rem keeps label order among equal remainders
    order = np.argsort(-rem, kind="stable")
    base[order[:leftover]] += 1
    return base


def iob_transition_allowed(prev: str, nxt: str, schema: LabelSchema) -> bool:
    """Whether tag ``nxt`` may directly follow tag ``prev``.

    Continuation tags (``I-``, and ``E-`` under IOBES) must follow a tag of
    the identical full hierarchical type; under IOBES, ``B-``/``I-`` must be
    continued and ``E-``/``S-``/``O`` close the segment.
    """
    schema.index(prev)
    schema.index(nxt)
    p_prefix, p_type = split_tag(prev)
    n_prefix, n_type = split_tag(nxt)
    if schema.scheme == "iob":
        if n_prefix == "I":
            return p_prefix in ("B", "I") and p_type == n_type
        return True
    open_prev = p_prefix in ("B", "I")
    if n_prefix in ("I", "E"):
        return open_prev and p_type == n_type
    return not open_prev


def start_allowed(label: str, schema: LabelSchema) -> bool:
    prefix, _ = split_tag(label)
    return prefix not in ("I", "E")


def end_allowed(label: str, schema: LabelSchema) -> bool:
    prefix, _ = split_tag(label)
    if schema.scheme == "iob":
        return True
    return prefix not in ("B", "I")


def sequence_is_valid(labels: Sequence[str], schema: LabelSchema) -> bool:
    """True when the whole label sequence obeys the scheme's hard constraints."""
    if not labels:
        return True
    if not start_allowed(labels[0], schema) or not end_allowed(labels[-1], schema):
        return False
    return all(iob_transition_allowed(a, b, schema) for a, b in zip(labels, labels[1:]))
