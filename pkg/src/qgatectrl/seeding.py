"""Deterministic random-stream derivation.

Every piece of randomness in the package flows from one 64-bit base seed
through `derive_rng`. Streams are keyed by (base_seed, *tokens), so results
are independent of execution order and of how work is sharded across
processes: a trial's stream depends only on its tokens, never on which
worker ran it.
"""

from __future__ import annotations

import hashlib

import numpy as np

Token = int | float | str


def _token_bytes(token: Token) -> bytes:
    # repr() of a float is shortest-roundtrip, stable across platforms
    if isinstance(token, bool):
        raise TypeError("bool tokens are ambiguous; use int or str")
    if isinstance(token, int):
        return b"i:" + str(token).encode()
    if isinstance(token, float):
        return b"f:" + repr(token).encode()
    if isinstance(token, str):
        return b"s:" + token.encode()
    raise TypeError(f"unsupported seed token type: {type(token)!r}")


def derive_seed_sequence(base_seed: int, *tokens: Token) -> np.random.SeedSequence:
    """Build a SeedSequence for the stream identified by (base_seed, tokens)."""
    digest = hashlib.sha256(b"\x1f".join(_token_bytes(t) for t in tokens)).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    return np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, *words])


def derive_rng(base_seed: int, *tokens: Token) -> np.random.Generator:
    """Independent PCG64 generator for the stream (base_seed, tokens)."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(base_seed, *tokens)))
