"""Tabular autoregressive softmax policy over verb-noun pairs.

The emission alphabet is every pair of the vocabulary (flat index
``verb * n_nouns + noun``) plus a stop symbol at index ``n_pairs``. With
``context_order=1`` the first emission is conditioned on a hash bucket of the
last observed pair and every later emission on the previous emission; with
``context_order=0`` a single row is shared by all steps.
"""

import json
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._random import stable_hash64
from .exceptions import DimensionMismatch, InputError, InvalidConfig
from .structured import format_structured
from .vocab import PAD, Vocabulary, dominant_noun

DEFAULT_THINK = "I observe the recent actions."
DEFAULT_INTENTION = "prepare {noun}"
CHECKPOINT_FORMAT = "anticipate.toy_policy/1"


@lru_cache(maxsize=4096)
def _bucket(key, n_buckets):
    return stable_hash64(key) % n_buckets


def softmax(z):
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ToyPolicy:
    """Softmax policy with an explicit logits table and exact gradients.

    Parameters
    ----------
    vocab : Vocabulary
    context_order : {0, 1}
    n_buckets : int
        Number of prompt buckets for the first emission (order 1 only).
    temperature : float
        Default sampling / scoring temperature.
    logits : array-like, optional
        Initial table of shape ``(n_rows, n_pairs + 1)``; zeros by default.
    think_text, intention_template : str
        Filler for the non-answer sections. ``intention_template`` may use
        ``{noun}``, filled with the most frequent noun of the emitted answer.
    """

    def __init__(self, vocab, context_order=1, n_buckets=16, temperature=1.0, logits=None,
                 think_text=DEFAULT_THINK, intention_template=DEFAULT_INTENTION):
        if context_order not in (0, 1):
            raise InvalidConfig("context_order must be 0 or 1")
        if n_buckets < 1:
            raise InvalidConfig("n_buckets must be >= 1")
        if not temperature > 0:
            raise InvalidConfig("temperature must be positive")
        self.vocab = vocab
        self.context_order = context_order
        self.n_buckets = n_buckets
        self.temperature = float(temperature)
        self.think_text = think_text
        self.intention_template = intention_template
        shape = (self.n_rows, self.n_symbols)
        if logits is None:
            logits = np.zeros(shape)
        logits = np.array(logits, dtype=float)
        if logits.shape != shape:
            raise DimensionMismatch(f"logits shape {logits.shape}, expected {shape}")
        if not np.all(np.isfinite(logits)):
            raise InputError("logits must be finite")
        # read-only: updates go through apply_update, which returns a new policy
        logits.setflags(write=False)
        self.logits = logits
        self._tables = {}

    @property
    def n_symbols(self):
        return self.vocab.n_pairs + 1

    @property
    def stop(self):
        return self.vocab.n_pairs

    @property
    def n_rows(self):
        return 1 if self.context_order == 0 else self.n_buckets + self.vocab.n_pairs

    def copy(self, logits=None):
        return ToyPolicy(
            self.vocab, self.context_order, self.n_buckets, self.temperature,
            self.logits if logits is None else logits,
            self.think_text, self.intention_template,
        )

    def prompt_bucket(self, context):
        """Bucket of the last real pair in the observed sequence ``context``."""
        last = next((p for p in reversed(tuple(context)) if p != PAD), None)
        key = "" if last is None else f"{last.verb},{last.noun}"
        return _bucket(key, self.n_buckets)

    def tables(self, temperature=None):
        """``(probs, log_probs, cdf)`` for every row at ``temperature``."""
        temperature = temperature or self.temperature
        cached = self._tables.get(temperature)
        if cached is None:
            z = self.logits / temperature
            z = z - z.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            probs = np.exp(logp)
            cdf = np.cumsum(probs, axis=1)
            cdf[:, -1] = 1.0
            cached = self._tables[temperature] = (probs, logp, cdf)
        return cached

    def rows(self, context, emissions):
        """Logit row used at each step of ``emissions``."""
        if self.context_order == 0:
            return [0] * len(emissions)
        out = []
        for t in range(len(emissions)):
            out.append(self.prompt_bucket(context) if t == 0 else self.n_buckets + emissions[t - 1])
        return out

    def probs(self, row, temperature=None):
        return self.tables(temperature)[0][row]

    def _check(self, emissions):
        for e in emissions:
            if not 0 <= e < self.n_symbols:
                raise InputError(f"unknown emission symbol {e}")
        if self.stop in emissions[:-1]:
            raise InputError("stop symbol may only be the last emission")

    def render(self, emissions):
        pairs = [self.vocab.pair_from_id(e) for e in emissions if e != self.stop]
        noun = dominant_noun(pairs)
        label = "nothing" if noun is None else self.vocab.nouns[noun]
        return format_structured(
            self.think_text,
            self.intention_template.format(noun=label),
            ", ".join(self.vocab.pair_text(p) for p in pairs),
        )

    def sample(self, context, Z, rng, temperature=None):
        """Draw up to ``Z`` pairs; returns ``(raw text, emissions)``."""
        cdf = self.tables(temperature)[2]
        emissions = []
        prev = None
        while len(emissions) < Z:
            if self.context_order == 0:
                row = 0
            elif prev is None:
                row = self.prompt_bucket(context)
            else:
                row = self.n_buckets + prev
            sym = min(int(np.searchsorted(cdf[row], rng.random(), side="right")), self.stop)
            emissions.append(sym)
            if sym == self.stop:
                break
            prev = sym
        return self.render(emissions), tuple(emissions)

    def greedy(self, context, Z):
        """Argmax decode (the zero-temperature limit of :meth:`sample`)."""
        emissions = []
        prev = None
        while len(emissions) < Z:
            if self.context_order == 0:
                row = 0
            elif prev is None:
                row = self.prompt_bucket(context)
            else:
                row = self.n_buckets + prev
            sym = int(np.argmax(self.logits[row]))
            emissions.append(sym)
            if sym == self.stop:
                break
            prev = sym
        return self.render(emissions), tuple(emissions)

    def sequence_logprob(self, context, emissions, temperature=None):
        emissions = [int(e) for e in emissions]
        self._check(emissions)
        logp = self.tables(temperature)[1]
        rows = self.rows(context, emissions)
        return float(sum(logp[r, e] for r, e in zip(rows, emissions)))

    def logprob_gradient(self, context, emissions, temperature=None):
        """Gradient of :meth:`sequence_logprob` with respect to ``logits``."""
        grad = np.zeros(self.logits.shape)
        self.accumulate_gradient(grad, context, emissions, 1.0, temperature)
        return grad

    def accumulate_gradient(self, out, context, emissions, weight, temperature=None):
        """``out += weight * logprob_gradient(context, emissions)`` in place."""
        emissions = [int(e) for e in emissions]
        self._check(emissions)
        temperature = temperature or self.temperature
        probs = self.tables(temperature)[0]
        scale = weight / temperature
        for row, e in zip(self.rows(context, emissions), emissions):
            out[row] -= scale * probs[row]
            out[row, e] += scale
        return out

    def apply_update(self, gradient, learning_rate):
        """New policy with ``logits + learning_rate * gradient`` (ascent)."""
        gradient = np.asarray(gradient, dtype=float)
        if gradient.shape != self.logits.shape:
            raise DimensionMismatch(
                f"gradient shape {gradient.shape} != logits shape {self.logits.shape}"
            )
        return self.copy(self.logits + learning_rate * gradient)

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "verbs": list(self.vocab.verbs),
            "nouns": list(self.vocab.nouns),
            "context_order": self.context_order,
            "n_buckets": self.n_buckets,
            "temperature": self.temperature,
            "think_text": self.think_text,
            "intention_template": self.intention_template,
            "logits": self.logits.tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise InputError(f"not a toy-policy checkpoint (format={obj.get('format')!r})")
        return cls(
            Vocabulary(obj["verbs"], obj["nouns"]),
            context_order=obj["context_order"],
            n_buckets=obj["n_buckets"],
            temperature=obj["temperature"],
            logits=obj["logits"],
            think_text=obj["think_text"],
            intention_template=obj["intention_template"],
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise InputError(f"checkpoint not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def sample_output(policy, context, Z, temperature, rng):
    return policy.sample(context, Z, rng, temperature)


def sequence_logprob(policy, context, emissions, temperature=None):
    return policy.sequence_logprob(context, emissions, temperature)


def logprob_gradient(policy, context, emissions, temperature=None):
    return policy.logprob_gradient(context, emissions, temperature)


def apply_update(policy, gradient, learning_rate):
    return policy.apply_update(gradient, learning_rate)
