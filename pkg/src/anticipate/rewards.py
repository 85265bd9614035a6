"""Format and content rewards for structured anticipation outputs, and their
weighted aggregate."""

import json
import math
import re
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Protocol

import numpy as np

from ._random import stable_hash64
from .exceptions import InputError, InvalidConfig, SkippedNoPositives
from .metrics import average_precision, edit_distance
from .structured import check_language, parse_structured
from .vocab import fit_length


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 0.90
    w2: float = 0.10
    w3: float = 0.85
    w4: float = 0.05
    w5: float = 0.05
    w6: float = 0.05

    def __post_init__(self):
        if any(w < 0 for w in asdict(self).values()):
            raise InvalidConfig("reward weights must be non-negative")


@dataclass(frozen=True)
class IntentionParams:
    beta: float = 0.8
    gamma: float = 40.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidConfig("gamma must be positive")


@dataclass(frozen=True)
class OverlongParams:
    l_max: int = 450
    l_cache: int = 256

    def __post_init__(self):
        if self.l_max <= 0 or self.l_cache <= 0:
            raise InvalidConfig("l_max and l_cache must be positive")
        if self.l_cache > self.l_max:
            raise InvalidConfig("l_cache must not exceed l_max")


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    intention: IntentionParams = field(default_factory=IntentionParams)
    overlong: OverlongParams = field(default_factory=OverlongParams)

    @classmethod
    def from_dict(cls, obj):
        unknown = set(obj) - {"weights", "intention", "overlong"}
        if unknown:
            raise InvalidConfig(f"unknown reward-config keys: {sorted(unknown)}")
        try:
            return cls(
                RewardWeights(**obj.get("weights", {})),
                IntentionParams(**obj.get("intention", {})),
                OverlongParams(**obj.get("overlong", {})),
            )
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        if not path.is_file():
            raise InputError(f"reward config not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class RewardBreakdown:
    s_len: float
    s_fmt: float
    s_lang: float
    s_acc: float
    s_int: float
    r_soft: float
    r_task: float
    r_total: float

    def to_dict(self):
        return asdict(self)


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


_TOKEN = re.compile(r"[^\W_]+")


@lru_cache(maxsize=65536)
def _token_hash(token):
    return stable_hash64(token)


class HashingEmbedder:
    """Deterministic bag-of-words embedder.

    Each lowercase alphanumeric token adds 1 to the bucket picked by a fixed
    64-bit hash; the count vector is L2-normalised. Empty text embeds to the
    zero vector.
    """

    def __init__(self, dim=256):
        self.dim = dim

    def embed(self, text):
        vec = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            vec[_token_hash(token) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def reference_embedder():
    return HashingEmbedder(256)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def length_reward(parsed_pairs, Z):
    return 1.0 if len(parsed_pairs) >= Z else 0.0


def format_reward(parse):
    return 1.0 if parse.tags_valid else 0.0


def language_reward(raw):
    return 1.0 if check_language(raw) else 0.0


def soft_overlong(L, p=None):
    """Length penalty: 0 up to ``l_max - l_cache``, then a linear ramp down to
    -1 at ``l_max``, and -1 beyond."""
    p = p or OverlongParams()
    start = p.l_max - p.l_cache
    if L <= start:
        return 0.0
    if L <= p.l_max:
        return -(L - start) / p.l_cache
    return -1.0


def accuracy_reward_ed(pred, truth, Z):
    """``1 - ED / Z`` after truncating or padding ``pred`` to length ``Z``."""
    truth = tuple(truth)
    if not truth:
        raise InputError("ground-truth sequence is empty")
    if len(truth) != Z:
        raise InputError(f"ground truth has {len(truth)} actions, expected Z={Z}")
    d = edit_distance(fit_length(tuple(pred), Z), truth)
    return min(1.0, max(0.0, 1.0 - d / len(truth)))


def accuracy_reward_map(pred_scores, truth_labels):
    """Average precision of one example's class ranking.

    Returns ``(reward, skipped)``; ``skipped`` is True (and the reward 0.0)
    when the example has no positive label.
    """
    pred_scores = np.asarray(pred_scores, dtype=float).ravel()
    truth_labels = np.asarray(truth_labels).ravel()
    if pred_scores.shape != truth_labels.shape:
        raise InputError("score and label vectors differ in length")
    try:
        return average_precision(pred_scores, truth_labels), False
    except SkippedNoPositives:
        return 0.0, True


def intention_from_similarity(sim, p=None):
    p = p or IntentionParams()
    ratio = _sigmoid(p.gamma * (sim - p.beta)) / _sigmoid(p.gamma * (1.0 - p.beta))
    return min(ratio, 1.0)


def intention_reward(int_gen, int_gt, emb=None, p=None):
    emb = emb or reference_embedder()
    sim = cosine_similarity(emb.embed(int_gen), emb.embed(int_gt))
    return intention_from_similarity(sim, p)


def total_reward(s_len, s_fmt, s_lang, s_acc, s_int, r_soft, w=None):
    w = w or RewardWeights()
    r_task = w.w3 * s_acc + w.w4 * s_int + w.w5 * s_lang + w.w6 * s_fmt
    r_total = w.w1 * s_len * r_task + w.w2 * r_soft
    return RewardBreakdown(
        s_len=s_len, s_fmt=s_fmt, s_lang=s_lang, s_acc=s_acc, s_int=s_int,
        r_soft=r_soft, r_task=r_task, r_total=r_total,
    )


class RewardScorer:
    """Scores raw generations against annotation records.

    Parameters
    ----------
    vocab : Vocabulary
    config : RewardConfig, optional
    embedder : EmbeddingProvider, optional
        Defaults to :func:`reference_embedder`.
    """

    def __init__(self, vocab, config=None, embedder=None):
        self.vocab = vocab
        self.config = config or RewardConfig()
        self.embedder = embedder or reference_embedder()
        self._gt_cache = {}

    def _gt_embedding(self, text):
        vec = self._gt_cache.get(text)
        if vec is None:
            vec = self._gt_cache[text] = self.embedder.embed(text)
        return vec

    def score(self, raw, record):
        parse = parse_structured(raw, self.vocab)
        truth = record.future
        z = len(truth)
        if record.intention_gt is None:
            s_int = 0.0
        else:
            sim = cosine_similarity(
                self.embedder.embed(parse.intention_text), self._gt_embedding(record.intention_gt)
            )
            s_int = intention_from_similarity(sim, self.config.intention)
        return total_reward(
            s_len=length_reward(parse.parsed_pairs, z),
            s_fmt=format_reward(parse),
            s_lang=language_reward(raw),
            s_acc=accuracy_reward_ed(parse.parsed_pairs, truth, z),
            s_int=s_int,
            r_soft=soft_overlong(parse.token_count, self.config.overlong),
            w=self.config.weights,
        )

    __call__ = score
