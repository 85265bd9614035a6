"""Parsing of ``<think>/<intention>/<answer>`` generations and prompt rendering."""

import re
import string
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .exceptions import InputError, InvalidTemplate
from .vocab import PAD, ActionPair

TAGS = ("think", "intention", "answer")

_STRICT = re.compile(
    r"\s*<think>(.*?)</think>\s*<intention>(.*?)</intention>\s*<answer>(.*?)</answer>\s*",
    re.DOTALL,
)
_SECTION = {tag: re.compile(rf"<{tag}>(.*?)</{tag}>", re.DOTALL) for tag in TAGS}
_ITEM_SPLIT = re.compile(r"[,\n]")
_NO_LETTER_OK = set(string.punctuation + string.digits)

DEFAULT_TEMPLATE = (
    "You are assisting a person wearing a head-mounted camera. "
    "The actions observed so far, oldest first, are: {observed_actions}.\n"
    "Describe what you perceive inside <think></think>, state the person's goal "
    "inside <intention></intention>, then list the next {Z} actions as "
    "comma-separated \"verb noun\" pairs inside <answer></answer>."
)


@dataclass(frozen=True)
class StructuredOutput:
    think_text: str
    intention_text: str
    answer_text: str
    tags_valid: bool
    token_count: int
    parsed_pairs: tuple = ()
    unparsed_answer_items: int = 0


def count_tokens(raw):
    """Number of maximal whitespace-separated runs in ``raw``."""
    return len(raw.split())


def parse_structured(raw, vocab=None):
    """Parse a generation into its three tagged sections.

    Never raises. ``tags_valid`` is True only for the strict layout: each tag
    pair exactly once, in think/intention/answer order, separated by nothing
    but whitespace. Otherwise each section is extracted best-effort from its
    first complete tag pair (empty string when absent). When ``vocab`` is
    given, the answer section is also converted into action pairs.
    """
    once = all(raw.count(f"<{t}>") == 1 and raw.count(f"</{t}>") == 1 for t in TAGS)
    match = _STRICT.fullmatch(raw) if once else None
    if match:
        sections = [g.strip() for g in match.groups()]
    else:
        sections = []
        for tag in TAGS:
            m = _SECTION[tag].search(raw)
            sections.append(m.group(1).strip() if m else "")
    pairs, unparsed = ((), 0)
    if vocab is not None:
        pairs, unparsed = extract_action_pairs(sections[2], vocab)
    return StructuredOutput(
        think_text=sections[0],
        intention_text=sections[1],
        answer_text=sections[2],
        tags_valid=match is not None,
        token_count=count_tokens(raw),
        parsed_pairs=pairs,
        unparsed_answer_items=unparsed,
    )


def format_structured(think, intention, answer):
    """Canonical tagged layout of three sections."""
    return (
        f"<think>\n{think}\n</think>\n"
        f"<intention>\n{intention}\n</intention>\n"
        f"<answer>\n{answer}\n</answer>"
    )


class _LabelResolver:
    # case-insensitive lookups; labels may themselves contain spaces
    def __init__(self, vocab):
        self.verbs = {" ".join(v.lower().split()): i for i, v in enumerate(vocab.verbs)}
        self.nouns = {" ".join(n.lower().split()): i for i, n in enumerate(vocab.nouns)}

    def resolve(self, tokens):
        for cut in range(1, len(tokens)):
            v = self.verbs.get(" ".join(tokens[:cut]))
            n = self.nouns.get(" ".join(tokens[cut:]))
            if v is not None and n is not None:
                return v, n
        return None


@lru_cache(maxsize=32)
def _resolver(vocab):
    return _LabelResolver(vocab)


def extract_action_pairs(answer_text, vocab):
    """Convert an answer section into action pairs.

    Items are separated by commas or newlines and must read ``verb noun``.
    Returns the resolved pairs in order and the number of non-empty items
    that could not be resolved.
    """
    resolver = _resolver(vocab)
    pairs, unparsed = [], 0
    for item in _ITEM_SPLIT.split(answer_text):
        tokens = item.lower().split()
        if not tokens:
            continue
        hit = resolver.resolve(tokens)
        if hit is None:
            unparsed += 1
        else:
            pairs.append(ActionPair(*hit))
    return tuple(pairs), unparsed


def check_language(raw):
    """True when the text is ASCII and every token is word-like or pure
    punctuation/digits (which covers the tag markup)."""
    if not raw.isascii():
        return False
    for token in raw.split():
        if any(c.isalpha() for c in token):
            continue
        if not set(token) <= _NO_LETTER_OK:
            return False
    return True


@dataclass(frozen=True)
class PromptTemplate:
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        for ph in ("{observed_actions}", "{Z}"):
            n = self.template.count(ph)
            if n != 1:
                raise InvalidTemplate(f"placeholder {ph} must appear exactly once, found {n}")

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise InputError(f"template file not found: {path}")
        return cls(path.read_text(encoding="utf-8"))


def render_prompt(observed, Z, vocab, tpl=None):
    if tpl is None:
        tpl = PromptTemplate()
    elif isinstance(tpl, str):
        tpl = PromptTemplate(tpl)
    actions = ", ".join(vocab.pair_text(p) for p in observed if p != PAD)
    # literal replacement: user templates may contain other braces
    return tpl.template.replace("{observed_actions}", actions).replace("{Z}", str(int(Z)))
