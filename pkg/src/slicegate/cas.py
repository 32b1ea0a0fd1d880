"""Local content-addressed store and the locator codecs used by the registry.

Content is addressed by the base-58 encoding of its SHA-256 multihash
(prefix bytes 0x12 0x20 + 32-byte digest), which is always a 46-character
string starting with "Qm".  For compact on-chain storage a locator converts
losslessly to a pair of 32-byte words: word1 is the raw digest, word2 the
two multihash prefix bytes zero-padded.

The backing store is one file per locator under a root directory
(configurable via CLI flag or environment).  Reads re-verify the digest, so
silent corruption surfaces as an error instead of bad data.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import DigestMismatchError, NotFoundError, SliceGateError

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}

MULTIHASH_PREFIX = b"\x12\x20"  # sha2-256, 32-byte digest
LOCATOR_LENGTH = 46


def base58_encode(data: bytes) -> str:
    num = int.from_bytes(data, "big")
    out = []
    while num:
        num, rem = divmod(num, 58)
        out.append(_B58_ALPHABET[rem])
    pad = 0
    for byte in data:
        if byte:
            break
        pad += 1
    return "1" * pad + "".join(reversed(out))


def base58_decode(text: str) -> bytes:
    num = 0
    for char in text:
        try:
            num = num * 58 + _B58_INDEX[char]
        except KeyError:
            raise SliceGateError(f"invalid base-58 character {char!r}") from None
    pad = 0
    for char in text:
        if char != "1":
            break
        pad += 1
    body = num.to_bytes((num.bit_length() + 7) // 8, "big")
    return b"\x00" * pad + body


@dataclass(frozen=True)
class WordPair:
    """On-chain form of a locator: two 32-byte words."""

    word1: bytes  # content digest
    word2: bytes  # multihash prefix, zero-padded

    def __post_init__(self):
        if len(self.word1) != 32 or len(self.word2) != 32:
            raise SliceGateError("words must be exactly 32 bytes")

    def to_locator(self) -> "Locator":
        return from_words(self)


@dataclass(frozen=True)
class Locator:
    """46-character base-58 content address beginning with "Qm"."""

    value: str

    def __post_init__(self):
        if len(self.value) != LOCATOR_LENGTH:
            raise SliceGateError(f"locator must be {LOCATOR_LENGTH} chars, got {len(self.value)}")
        raw = base58_decode(self.value)
        if len(raw) != 34 or not raw.startswith(MULTIHASH_PREFIX):
            raise SliceGateError(f"locator {self.value!r} is not a sha-256 multihash")
        if base58_encode(raw) != self.value:
            raise SliceGateError(f"locator {self.value!r} is not canonical")

    @classmethod
    def from_digest(cls, digest: bytes) -> "Locator":
        if len(digest) != 32:
            raise SliceGateError("digest must be 32 bytes")
        return cls(base58_encode(MULTIHASH_PREFIX + digest))

    @classmethod
    def for_content(cls, content: bytes) -> "Locator":
        return cls.from_digest(hashlib.sha256(content).digest())

    @property
    def digest(self) -> bytes:
        return base58_decode(self.value)[2:]

    def __str__(self) -> str:
        return self.value


def to_words(locator: Locator) -> WordPair:
    return WordPair(word1=locator.digest, word2=MULTIHASH_PREFIX + b"\x00" * 30)


def from_words(pair: WordPair) -> Locator:
    if pair.word2[:2] != MULTIHASH_PREFIX:
        raise SliceGateError("word2 does not carry a sha-256 multihash prefix")
    if any(pair.word2[2:]):
        raise SliceGateError("word2 padding must be zero")
    return Locator.from_digest(pair.word1)


class ContentStore:
    """File-per-locator store; put is idempotent, get re-verifies the digest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, locator: Locator) -> Path:
        return self.root / locator.value

    def put(self, content: bytes) -> Locator:
        locator = Locator.for_content(content)
        path = self._path(locator)
        if path.exists():
            return locator
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".put-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(content)
            os.replace(tmp, path)  # atomic under concurrent identical puts
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return locator

    def get(self, locator: Locator) -> bytes:
        path = self._path(locator)
        try:
            content = path.read_bytes()
        except FileNotFoundError:
            raise NotFoundError(f"no content stored for {locator}") from None
        if hashlib.sha256(content).digest() != locator.digest:
            raise DigestMismatchError(f"stored content for {locator} fails digest check")
        return content

    def __contains__(self, locator: Locator) -> bool:
        return self._path(locator).exists()
