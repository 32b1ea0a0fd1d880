"""Stored message artifact: header, encrypted slices, and the sealed secret.

A message file is canonical JSON (sorted keys, no whitespace, base-64
binary fields) with a header carrying the sender address, the message id,
and the shared secret: the per-message master keys, per-slice salts, and
per-slice algebraic metadata, all sealed to the key manager's public key.
The body is a list of slices, each with a random id, the salted integrity
hash of its plaintext, and its policy-bound ciphertext.

Integrity rule: ``hash = SHA-256(plaintext || salt)`` with a 16-byte salt,
so equal plaintexts in different slices still hash differently and hashes
leak nothing through dictionary lookups.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

from .errors import SliceGateError

SALT_SIZE = 16
HASH_SIZE = 32


def salted_hash(plaintext: bytes, salt: bytes) -> bytes:
    """Integrity digest of a slice: plaintext first, then salt."""
    return hashlib.sha256(plaintext + salt).digest()


@dataclass(frozen=True)
class CipherSlice:
    slice_id: int
    hash: bytes
    ciphertext: bytes

    def __post_init__(self):
        if len(self.hash) != HASH_SIZE:
            raise SliceGateError("slice hash must be 32 bytes")


@dataclass(frozen=True)
class MessageFile:
    sender: str
    message_id: int
    shared_secret: bytes
    slices: tuple[CipherSlice, ...]

    def __post_init__(self):
        if not self.slices:
            raise SliceGateError("a message carries at least one slice")
        ids = [s.slice_id for s in self.slices]
        if len(set(ids)) != len(ids):
            raise SliceGateError("slice ids must be unique within a message")

    def to_bytes(self) -> bytes:
        doc = {
            "header": {
                "sender": self.sender,
                "message_id": str(self.message_id),
                "shared_secret": _b64(self.shared_secret),
            },
            "slices": [
                {
                    "slice_id": str(s.slice_id),
                    "hash": _b64(s.hash),
                    "ciphertext": _b64(s.ciphertext),
                }
                for s in self.slices
            ],
        }
        return _canonical(doc)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MessageFile":
        try:
            doc = json.loads(blob.decode("utf-8"))
            header = doc["header"]
            slices = tuple(
                CipherSlice(
                    slice_id=int(s["slice_id"]),
                    hash=_unb64(s["hash"]),
                    ciphertext=_unb64(s["ciphertext"]),
                )
                for s in doc["slices"]
            )
            return cls(
                sender=header["sender"],
                message_id=int(header["message_id"]),
                shared_secret=_unb64(header["shared_secret"]),
                slices=slices,
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SliceGateError("malformed message file") from exc

    def find_slice(self, slice_id: int) -> CipherSlice:
        for s in self.slices:
            if s.slice_id == slice_id:
                return s
        raise SliceGateError(f"no slice {slice_id} in message {self.message_id}")


@dataclass(frozen=True)
class SliceSecret:
    salt: bytes
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.salt) != SALT_SIZE:
            raise SliceGateError("slice salt must be 16 bytes")


@dataclass(frozen=True)
class SharedSecret:
    """Plaintext form of the envelope sealed to the key manager."""

    mpk: bytes
    mk: bytes
    slices: dict[int, SliceSecret]

    def to_bytes(self) -> bytes:
        doc = {
            "mpk": _b64(self.mpk),
            "mk": _b64(self.mk),
            "slices": {
                str(slice_id): {"salt": _b64(sec.salt), "metadata": sec.metadata}
                for slice_id, sec in self.slices.items()
            },
        }
        return _canonical(doc)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SharedSecret":
        try:
            doc = json.loads(blob.decode("utf-8"))
            return cls(
                mpk=_unb64(doc["mpk"]),
                mk=_unb64(doc["mk"]),
                slices={
                    int(slice_id): SliceSecret(_unb64(sec["salt"]), dict(sec["metadata"]))
                    for slice_id, sec in doc["slices"].items()
                },
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SliceGateError("malformed shared secret") from exc


def verify_integrity(plaintext: bytes, salt: bytes, slice_: CipherSlice) -> bool:
    """True iff the delivered plaintext and salt match the stored slice hash."""
    return salted_hash(plaintext, salt) == slice_.hash


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)
