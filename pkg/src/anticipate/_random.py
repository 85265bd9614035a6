import hashlib

import numpy as np


def stable_hash64(text):
    """64-bit hash of ``text`` that does not depend on ``PYTHONHASHSEED``."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_stream(seed, name):
    """Independent generator for the named sub-stream of ``seed``.

    Streams with different names never share state, so e.g. changing how many
    draws synthesis makes does not shift the policy initialisation.
    """
    seq = np.random.SeedSequence([int(seed) & (2**64 - 1), stable_hash64(name)])
    return np.random.default_rng(seq)
