"""Verb-noun co-occurrence priors and semantic correction of independent
verb/noun predictions."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatch, InputError, MalformedLine
from .vocab import PAD, ActionPair, Vocabulary


@dataclass(frozen=True)
class CooccurrenceMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2:
            raise DimensionMismatch("co-occurrence counts must be 2-D")
        if np.any(counts < 0):
            raise InputError("co-occurrence counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class ConditionalTables:
    p_n_given_v: np.ndarray
    p_v_given_n: np.ndarray


def build_cooccurrence(annotations, vocab, include_future=False):
    """Count verb-noun pairs over the observed (and optionally future) actions."""
    counts = np.zeros((vocab.n_verbs, vocab.n_nouns), dtype=np.int64)
    for rec in annotations:
        seqs = (rec.observed, rec.future) if include_future else (rec.observed,)
        for seq in seqs:
            for pair in seq:
                if pair == PAD:
                    continue
                if not vocab.contains(pair):
                    raise DimensionMismatch(
                        f"pair {tuple(pair)} in record {rec.clip_id!r} is outside the "
                        f"{vocab.n_verbs}x{vocab.n_nouns} vocabulary"
                    )
                counts[pair.verb, pair.noun] += 1
    return CooccurrenceMatrix(counts)


def normalize_conditionals(cooc):
    """Row- and column-normalise counts; empty rows/columns stay all-zero."""
    counts = np.asarray(getattr(cooc, "counts", cooc), dtype=float)
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True)
    p_n_given_v = np.divide(counts, row, out=np.zeros_like(counts), where=row > 0)
    p_v_given_n = np.divide(counts, col, out=np.zeros_like(counts), where=col > 0)
    return ConditionalTables(p_n_given_v, p_v_given_n)


def corrected_joint(p_verb, p_noun, tables):
    """Unnormalised corrected joint score for every (verb, noun) cell."""
    p_verb = np.asarray(p_verb, dtype=float).ravel()
    p_noun = np.asarray(p_noun, dtype=float).ravel()
    shape = tables.p_n_given_v.shape
    if shape != (p_verb.size, p_noun.size) or tables.p_v_given_n.shape != shape:
        raise DimensionMismatch(
            f"marginals ({p_verb.size}, {p_noun.size}) do not match tables {shape}"
        )
    prior = 0.5 * (tables.p_n_given_v + tables.p_v_given_n)
    return np.outer(p_verb, p_noun) * prior


def map_decode(scores):
    """Argmax cell of a score grid; ties go to the lowest verb, then noun index."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.size == 0:
        raise InputError("score grid must be a non-empty 2-D array")
    # np.argmax returns the first maximum in row-major order, which is exactly
    # the (verb, noun) lexicographic tie-break
    v, n = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return ActionPair(int(v), int(n))


def write_cooccurrence_csv(cooc, vocab, path):
    counts = cooc.counts
    if counts.shape != (vocab.n_verbs, vocab.n_nouns):
        raise DimensionMismatch("matrix shape does not match the vocabulary")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["verb", *vocab.nouns])
        for v, label in enumerate(vocab.verbs):
            writer.writerow([label, *(int(x) for x in counts[v])])


def read_cooccurrence_csv(path):
    """Read a labelled count grid; returns ``(CooccurrenceMatrix, Vocabulary)``."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"co-occurrence file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise InputError(f"{path}: missing header row")
    nouns = rows[0][1:]
    verbs, grid = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(nouns) + 1:
            raise MalformedLine(lineno, f"expected {len(nouns) + 1} cells, got {len(row)}")
        verbs.append(row[0])
        try:
            grid.append([int(x) for x in row[1:]])
        except ValueError:
            raise MalformedLine(lineno, "counts must be integers") from None
    vocab = Vocabulary(verbs, nouns)
    return CooccurrenceMatrix(np.array(grid, dtype=np.int64).reshape(len(verbs), len(nouns))), vocab


class SemanticCorrector(BaseEstimator):
    """Decode (verb, noun) pairs from independent marginals using co-occurrence priors.

    Parameters
    ----------
    include_future : bool, default=False
        Also count the future actions of each annotation record when fitting.
    correct : bool, default=True
        If False, ``predict`` decodes the plain outer product of the marginals,
        which is useful as an ablation baseline.

    Attributes
    ----------
    vocabulary_ : Vocabulary
    cooccurrence_ : CooccurrenceMatrix
    tables_ : ConditionalTables
    """

    def __init__(self, include_future=False, correct=True):
        self.include_future = include_future
        self.correct = correct

    def fit(self, records, vocab):
        self.vocabulary_ = vocab
        self.cooccurrence_ = build_cooccurrence(records, vocab, self.include_future)
        self.tables_ = normalize_conditionals(self.cooccurrence_)
        return self

    def fit_counts(self, cooc, vocab):
        """Fit from a precomputed co-occurrence matrix."""
        if cooc.shape != (vocab.n_verbs, vocab.n_nouns):
            raise DimensionMismatch("matrix shape does not match the vocabulary")
        self.vocabulary_ = vocab
        self.cooccurrence_ = cooc
        self.tables_ = normalize_conditionals(cooc)
        return self

    def _split(self, X):
        check_is_fitted(self, "tables_")
        X = check_array(X, ensure_min_samples=0)
        nv, nn = self.vocabulary_.n_verbs, self.vocabulary_.n_nouns
        if X.shape[1] != nv + nn:
            raise DimensionMismatch(
                f"expected {nv} verb + {nn} noun columns, got {X.shape[1]} columns"
            )
        return X[:, :nv], X[:, nv:]

    def score_grids(self, X):
        """Per-row score grids of shape ``(n_samples, n_verbs, n_nouns)``.

        ``X`` holds the verb marginals followed by the noun marginals.
        """
        p_verb, p_noun = self._split(X)
        raw = np.einsum("iv,in->ivn", p_verb, p_noun)
        if not self.correct:
            return raw
        prior = 0.5 * (self.tables_.p_n_given_v + self.tables_.p_v_given_n)
        return raw * prior

    def predict(self, X):
        """Decoded pairs as an integer array of shape ``(n_samples, 2)``."""
        grids = self.score_grids(X)
        out = np.zeros((len(grids), 2), dtype=np.int64)
        for i, grid in enumerate(grids):
            out[i] = map_decode(grid)
        return out
