"""Action vocabulary, annotation records and the synthetic anticipation task.

An action is a ``(verb, noun)`` index pair into a :class:`Vocabulary`. A
sequence of actions is a plain tuple of :class:`ActionPair`; the reserved
:data:`PAD` pair marks padding and never belongs to the vocabulary.
"""

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from ._random import rng_stream
from .exceptions import (
    DuplicateLabel,
    EmptyLabelSet,
    InputError,
    InvalidConfig,
    MalformedLine,
    UnknownLabel,
)

PAD_LABEL = "⟨pad⟩"


class ActionPair(NamedTuple):
    verb: int
    noun: int


PAD = ActionPair(-1, -1)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered verb and noun label sets.

    Indices are 0-based positions in ``verbs`` / ``nouns`` and are stable for
    the lifetime of the object.
    """

    verbs: tuple
    nouns: tuple
    _verb_index: dict = field(init=False, repr=False, compare=False)
    _noun_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "verbs", tuple(self.verbs))
        object.__setattr__(self, "nouns", tuple(self.nouns))
        if not self.verbs:
            raise EmptyLabelSet("vocabulary has no verbs")
        if not self.nouns:
            raise EmptyLabelSet("vocabulary has no nouns")
        object.__setattr__(self, "_verb_index", _index_labels(self.verbs, "verb"))
        object.__setattr__(self, "_noun_index", _index_labels(self.nouns, "noun"))

    @property
    def n_verbs(self):
        return len(self.verbs)

    @property
    def n_nouns(self):
        return len(self.nouns)

    @property
    def n_pairs(self):
        return len(self.verbs) * len(self.nouns)

    def verb_index(self, label, line=None):
        try:
            return self._verb_index[label]
        except KeyError:
            raise UnknownLabel(label, line) from None

    def noun_index(self, label, line=None):
        try:
            return self._noun_index[label]
        except KeyError:
            raise UnknownLabel(label, line) from None

    def pair(self, verb, noun, line=None):
        """Resolve a ``(verb label, noun label)`` into an :class:`ActionPair`."""
        return ActionPair(self.verb_index(verb, line), self.noun_index(noun, line))

    def contains(self, pair):
        return 0 <= pair.verb < self.n_verbs and 0 <= pair.noun < self.n_nouns

    def pair_text(self, pair):
        if pair == PAD:
            return PAD_LABEL
        return f"{self.verbs[pair.verb]} {self.nouns[pair.noun]}"

    def pair_id(self, pair):
        """Flat index ``verb * n_nouns + noun`` of a real pair."""
        return pair.verb * self.n_nouns + pair.noun

    def pair_from_id(self, idx):
        return ActionPair(*divmod(int(idx), self.n_nouns))


def _index_labels(labels, kind):
    index = {}
    for i, label in enumerate(labels):
        if label in index:
            raise DuplicateLabel(f"duplicate {kind} label {label!r}")
        index[label] = i
    return index


@dataclass(frozen=True)
class AnnotationRecord:
    clip_id: str
    observed: tuple
    future: tuple
    intention_gt: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(ActionPair(*p) for p in self.observed))
        object.__setattr__(self, "future", tuple(ActionPair(*p) for p in self.future))


def fit_length(seq, length):
    """Truncate ``seq`` to ``length`` or right-pad it with :data:`PAD`."""
    seq = tuple(seq[:length])
    return seq + (PAD,) * (length - len(seq))


def load_vocabulary(path):
    """Read a ``kind,label`` CSV into a :class:`Vocabulary`, keeping file order."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"vocabulary file not found: {path}")
    verbs, nouns = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"kind", "label"} <= set(reader.fieldnames):
            raise InputError(f"{path}: expected a 'kind,label' header")
        for lineno, row in enumerate(reader, start=2):
            kind = (row["kind"] or "").strip()
            label = (row["label"] or "").strip()
            if not label:
                raise MalformedLine(lineno, "empty label")
            if kind == "verb":
                verbs.append(label)
            elif kind == "noun":
                nouns.append(label)
            else:
                raise MalformedLine(lineno, f"kind must be 'verb' or 'noun', got {kind!r}")
    return Vocabulary(verbs, nouns)


def write_vocabulary(vocab, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "label"])
        writer.writerows(("verb", v) for v in vocab.verbs)
        writer.writerows(("noun", n) for n in vocab.nouns)


def encode_sequence(seq, vocab):
    return [PAD_LABEL if p == PAD else [vocab.verbs[p.verb], vocab.nouns[p.noun]] for p in seq]


def decode_sequence(items, vocab, line=None):
    if not isinstance(items, list):
        raise MalformedLine(line, "action sequence must be a list")
    out = []
    for item in items:
        if item == PAD_LABEL:
            out.append(PAD)
        elif isinstance(item, list) and len(item) == 2 and all(isinstance(s, str) for s in item):
            out.append(vocab.pair(item[0], item[1], line))
        else:
            raise MalformedLine(line, f"bad action item {item!r}")
    pads = [p == PAD for p in out]
    if any(pads) and not all(pads[pads.index(True):]):
        raise MalformedLine(line, "pad markers may only appear as a suffix")
    return tuple(out)


def record_to_json(record, vocab):
    obj = {
        "clip_id": record.clip_id,
        "observed": encode_sequence(record.observed, vocab),
        "future": encode_sequence(record.future, vocab),
    }
    if record.intention_gt is not None:
        obj["intention_gt"] = record.intention_gt
    return obj


def parse_annotations(path, vocab, K=None, Z=None):
    """Parse an annotations JSONL file.

    Parameters
    ----------
    path : path-like
        One JSON object per line with ``clip_id``, ``observed``, ``future`` and
        an optional ``intention_gt``. Actions are ``[verb, noun]`` label lists.
    vocab : Vocabulary
    K, Z : int, optional
        When given, observed/future lengths must match exactly (strict mode).

    Returns
    -------
    list of AnnotationRecord
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"annotations file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedLine(lineno, "expected a JSON object")
            missing = {"observed", "future"} - obj.keys()
            if missing:
                raise MalformedLine(lineno, f"missing field(s) {sorted(missing)}")
            observed = decode_sequence(obj["observed"], vocab, lineno)
            future = decode_sequence(obj["future"], vocab, lineno)
            if K is not None and len(observed) != K:
                raise MalformedLine(lineno, f"expected {K} observed actions, got {len(observed)}")
            if Z is not None and len(future) != Z:
                raise MalformedLine(lineno, f"expected {Z} future actions, got {len(future)}")
            intention = obj.get("intention_gt")
            if intention is not None and not isinstance(intention, str):
                raise MalformedLine(lineno, "intention_gt must be a string")
            records.append(
                AnnotationRecord(str(obj.get("clip_id", lineno)), observed, future, intention)
            )
    return records


def write_annotations(records, vocab, path):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec, vocab), ensure_ascii=False) + "\n")


_VERB_NAMES = (
    "take", "put", "open", "close", "wash", "cut", "pour", "stir", "hold", "turn",
    "wipe", "move", "mix", "peel", "fill", "throw", "dry", "press", "pick", "place",
)
_NOUN_NAMES = (
    "cup", "knife", "bowl", "plate", "pan", "door", "tap", "spoon", "lid", "bottle",
    "onion", "board", "towel", "sponge", "fork", "bag", "jar", "pot", "glass", "egg",
)


@dataclass(frozen=True)
class SyntheticTaskConfig:
    verb_count: int = 5
    noun_count: int = 5
    K: int = 8
    Z: int = 20
    transition_concentration: float = 0.1
    n_records: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.verb_count < 2 or self.noun_count < 2:
            raise InvalidConfig("verb_count and noun_count must be >= 2")
        if self.K < 1 or self.Z < 1:
            raise InvalidConfig("K and Z must be >= 1")
        if not self.transition_concentration > 0:
            raise InvalidConfig("transition_concentration must be positive")
        if self.n_records < 0:
            raise InvalidConfig("n_records must be >= 0")

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfig(f"unknown synthetic-task keys: {sorted(unknown)}")
        return cls(**obj)


def _labels(names, count, prefix):
    if count <= len(names):
        return list(names[:count])
    return list(names) + [f"{prefix}{i}" for i in range(len(names), count)]


def dominant_noun(seq):
    """Most frequent noun index in ``seq`` (lowest index on ties), or None."""
    counts = {}
    for p in seq:
        if p != PAD:
            counts[p.noun] = counts.get(p.noun, 0) + 1
    if not counts:
        return None
    return min(counts, key=lambda n: (-counts[n], n))


def generate_synthetic_task(cfg):
    """Sample a synthetic anticipation dataset from a Markov chain over pairs.

    Returns
    -------
    vocab : Vocabulary
    records : list of AnnotationRecord
    transitions : ndarray of shape (n_pairs, n_pairs)
        Row-stochastic ground-truth table indexed by :meth:`Vocabulary.pair_id`.
    """
    vocab = Vocabulary(
        _labels(_VERB_NAMES, cfg.verb_count, "verb"),
        _labels(_NOUN_NAMES, cfg.noun_count, "noun"),
    )
    m = vocab.n_pairs
    chain_rng = rng_stream(cfg.seed, "synthesis.chain")
    transitions = chain_rng.dirichlet(np.full(m, cfg.transition_concentration), size=m)
    # tiny concentrations can underflow a whole row; fall back to one-hot
    for i, row in enumerate(transitions):
        total = row.sum()
        if not np.isfinite(total) or total <= 0:
            row[:] = 0.0
            row[chain_rng.integers(m)] = 1.0
        else:
            row /= total
    cdf = np.cumsum(transitions, axis=1)
    cdf[:, -1] = 1.0

    walk_rng = rng_stream(cfg.seed, "synthesis.records")
    length = cfg.K + cfg.Z
    records = []
    for r in range(cfg.n_records):
        state = int(walk_rng.integers(m))
        states = [state]
        for _ in range(length - 1):
            state = int(np.searchsorted(cdf[state], walk_rng.random(), side="right"))
            states.append(min(state, m - 1))
        pairs = [vocab.pair_from_id(s) for s in states]
        future = tuple(pairs[cfg.K:])
        noun = dominant_noun(future)
        records.append(
            AnnotationRecord(
                clip_id=f"synth-{r:05d}",
                observed=tuple(pairs[:cfg.K]),
                future=future,
                intention_gt=f"prepare {vocab.nouns[noun]}",
            )
        )
    return vocab, records, transitions
