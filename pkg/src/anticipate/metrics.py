"""Evaluation protocols: minimum edit distance over candidate sequences and
class-wise mean average precision over observation horizons."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InputError, SkippedNoPositives

N_CANDIDATES = 5
DEFAULT_HORIZONS = (25, 50, 75)
CATEGORIES = ("ALL", "FREQ", "RARE")


def edit_distance(a, b):
    """Damerau-Levenshtein distance between two symbol sequences.

    Unit cost for insertion, deletion, substitution and transposition of
    adjacent symbols. This is the unrestricted variant (Lowrance-Wagner), so
    a substring may be edited again after a transposition and the result is a
    true metric. Symbols may be any hashable values.
    """
    a = list(a)
    b = list(b)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return n + m
    big = n + m
    last_row = {}
    # d has a sentinel border: d[i + 1][j + 1] is the distance of a[:i], b[:j]
    d = [[big] * (m + 2) for _ in range(n + 2)]
    for i in range(n + 1):
        d[i + 1][1] = i
    for j in range(m + 1):
        d[1][j + 1] = j
    for i in range(1, n + 1):
        last_col = 0
        for j in range(1, m + 1):
            k = last_row.get(b[j - 1], 0)
            l = last_col
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_col = j
            else:
                cost = 1
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[k][l] + (i - k - 1) + 1 + (j - l - 1),
            )
        last_row[a[i - 1]] = i
    return d[n + 1][m + 1]


@dataclass(frozen=True)
class EdReport:
    verb_ed: float
    noun_ed: float
    action_ed: float


def ego4d_eval(candidates, truth):
    """Minimum normalised edit distance of five candidates against the truth.

    Each of the three views (verbs only, nouns only, whole pairs) is scored
    independently, so the best candidate may differ between views.
    """
    candidates = [tuple(c) for c in candidates]
    truth = tuple(truth)
    if len(candidates) != N_CANDIDATES:
        raise InputError(f"expected exactly {N_CANDIDATES} candidates, got {len(candidates)}")
    z = len(truth)
    if z == 0:
        raise InputError("ground-truth sequence is empty")
    for c in candidates:
        if len(c) != z:
            raise InputError(f"candidate length {len(c)} differs from Z={z}")
    return EdReport(
        verb_ed=min_normalized_ed(candidates, truth, lambda p: p.verb),
        noun_ed=min_normalized_ed(candidates, truth, lambda p: p.noun),
        action_ed=min_normalized_ed(candidates, truth, lambda p: p),
    )


def min_normalized_ed(candidates, truth, view):
    target = [view(p) for p in truth]
    return min(edit_distance([view(p) for p in c], target) for c in candidates) / len(truth)


def average_precision(scores, labels):
    """Average precision of a single ranking.

    Items are ranked by descending score, ties broken by ascending index.

    Raises
    ------
    SkippedNoPositives
        If ``labels`` has no positive entry.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DimensionMismatch(f"{scores.size} scores vs {labels.size} labels")
    positive = labels.astype(bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise SkippedNoPositives("ranking has no positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = positive[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))


@dataclass(frozen=True)
class FreqRareSplit:
    freq_classes: frozenset
    rare_classes: frozenset

    def __post_init__(self):
        object.__setattr__(self, "freq_classes", frozenset(int(c) for c in self.freq_classes))
        object.__setattr__(self, "rare_classes", frozenset(int(c) for c in self.rare_classes))
        if self.freq_classes & self.rare_classes:
            raise InputError("FREQ and RARE class sets overlap")

    def members(self, category, n_classes):
        if category == "ALL":
            return range(n_classes)
        return sorted(self.freq_classes if category == "FREQ" else self.rare_classes)


def make_freq_rare_split(counts, threshold=None):
    """Split classes into frequent and rare by training label counts.

    A class is frequent when its count reaches ``threshold``, which defaults to
    the median count over classes seen at least once. Unseen classes are rare.
    """
    counts = np.asarray(counts, dtype=float).ravel()
    if counts.size == 0:
        raise InputError("class counts are empty")
    if np.any(counts < 0):
        raise InputError("class counts must be non-negative")
    if not np.any(counts > 0):
        raise InputError("all class counts are zero")
    if threshold is None:
        threshold = float(np.median(counts[counts > 0]))
    freq = np.flatnonzero(counts >= threshold)
    rare = np.flatnonzero(counts < threshold)
    return FreqRareSplit(frozenset(freq.tolist()), frozenset(rare.tolist()))


@dataclass(frozen=True)
class MapReport:
    """mAP per horizon and category, plus per-category means over horizons.

    ``per_horizon[P][category]`` is None when no class of that category has a
    positive label at horizon ``P``.
    """

    per_horizon: dict
    average: dict
    class_ap: dict

    def to_dict(self):
        return {
            "per_horizon": {str(h): dict(v) for h, v in self.per_horizon.items()},
            "average": dict(self.average),
        }


def class_average_precisions(scores, labels):
    """Per-class AP with examples as ranking units; classes without positives
    map to None."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise DimensionMismatch(
            f"scores {scores.shape} and labels {labels.shape} must be equal 2-D shapes"
        )
    out = []
    for c in range(scores.shape[1]):
        try:
            out.append(average_precision(scores[:, c], labels[:, c]))
        except SkippedNoPositives:
            out.append(None)
    return out


def map_eval(predictions, labels, split, horizons=DEFAULT_HORIZONS):
    """Multi-label anticipation mAP across observation horizons.

    Parameters
    ----------
    predictions, labels : mapping of horizon -> array of shape (n_examples, n_classes)
        Scores and binary targets for the unobserved part of each video.
    split : FreqRareSplit
    horizons : sequence of int
    """
    per_horizon, class_ap = {}, {}
    n_classes = None
    for h in horizons:
        if h not in predictions or h not in labels:
            raise InputError(f"missing horizon {h}")
        aps = class_average_precisions(predictions[h], labels[h])
        if n_classes is None:
            n_classes = len(aps)
        elif len(aps) != n_classes:
            raise DimensionMismatch("class count differs between horizons")
        class_ap[h] = aps
        per_horizon[h] = {}
        for cat in CATEGORIES:
            members = split.members(cat, n_classes)
            vals = [aps[c] for c in members if c < n_classes and aps[c] is not None]
            per_horizon[h][cat] = float(np.mean(vals)) if vals else None
    average = {}
    for cat in CATEGORIES:
        vals = [per_horizon[h][cat] for h in horizons]
        average[cat] = None if any(v is None for v in vals) else sum(vals) / len(vals)
    return MapReport(per_horizon, average, class_ap)
