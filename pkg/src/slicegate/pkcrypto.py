"""Conventional asymmetric primitives: identities, signatures, envelopes.

Every party holds a 2048-bit RSA key pair.  Its account address is derived
from the canonical (DER SubjectPublicKeyInfo) public-key encoding: the last
20 bytes of the SHA-256 digest, rendered as 0x-prefixed hex with
checksum-driven letter casing.  Signatures are RSA-PSS/SHA-256; envelopes
are RSA-OAEP key encapsulation around AES-256-GCM, so blobs of any length
can be sealed to a public key.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import EnvelopeError, SliceGateError

RSA_KEY_BITS = 2048
_OAEP = padding.OAEP(
    mgf=padding.MGF1(algorithm=hashes.SHA256()), algorithm=hashes.SHA256(), label=None
)
_PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=32)
_ENVELOPE_KEY_SIZE = 32
_ENVELOPE_NONCE_SIZE = 12


@dataclass(frozen=True)
class AccountAddress:
    """20-byte account identifier, shown as 42-character 0x-hex."""

    raw: bytes

    def __post_init__(self):
        if len(self.raw) != 20:
            raise SliceGateError(f"address must be 20 bytes, got {len(self.raw)}")

    @classmethod
    def from_public_key(cls, public_key) -> "AccountAddress":
        digest = hashlib.sha256(public_key_bytes(public_key)).digest()
        return cls(digest[-20:])

    @classmethod
    def parse(cls, text: str) -> "AccountAddress":
        if not text.startswith("0x") or len(text) != 42:
            raise SliceGateError(f"malformed address {text!r}")
        try:
            return cls(bytes.fromhex(text[2:]))
        except ValueError as exc:
            raise SliceGateError(f"malformed address {text!r}") from exc

    def checksummed(self) -> str:
        # Letter casing keyed on a digest of the lowercase hex, so addresses
        # are self-checking at a glance without a registry lookup.
        plain = self.raw.hex()
        marks = hashlib.sha256(plain.encode("ascii")).hexdigest()
        chars = [
            c.upper() if c.isalpha() and int(marks[i], 16) >= 8 else c
            for i, c in enumerate(plain)
        ]
        return "0x" + "".join(chars)

    def __str__(self) -> str:
        return self.checksummed()


class KeyPair:
    """RSA key pair bound to its derived account address."""

    def __init__(self, private_key: rsa.RSAPrivateKey):
        self.private_key = private_key
        self.public_key = private_key.public_key()
        self.address = AccountAddress.from_public_key(self.public_key)

    @classmethod
    def generate(cls, bits: int = RSA_KEY_BITS) -> "KeyPair":
        return cls(rsa.generate_private_key(public_exponent=65537, key_size=bits))

    @classmethod
    def load_pem(cls, path) -> "KeyPair":
        with open(path, "rb") as fh:
            return cls(serialization.load_pem_private_key(fh.read(), password=None))

    def save_pem(self, path) -> None:
        pem = self.private_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        with open(path, "wb") as fh:
            fh.write(pem)
        os.chmod(path, 0o600)


def public_key_bytes(public_key) -> bytes:
    """Canonical public-key encoding (DER SubjectPublicKeyInfo)."""
    return public_key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def load_public_key(blob: bytes):
    try:
        return serialization.load_der_public_key(blob)
    except Exception as exc:
        raise SliceGateError("malformed public key encoding") from exc


def derive_address(public_key) -> AccountAddress:
    return AccountAddress.from_public_key(public_key)


def sign(private_key, message: bytes) -> bytes:
    return private_key.sign(message, _PSS, hashes.SHA256())


def verify(public_key, message: bytes, signature: bytes) -> bool:
    try:
        public_key.verify(signature, message, _PSS, hashes.SHA256())
        return True
    except InvalidSignature:
        return False


def seal_to(public_key, blob: bytes) -> bytes:
    """Encrypt a blob of any length so only the private-key holder can open it.

    Layout: ``u16 len || RSA-OAEP(key) || nonce || AES-GCM(blob)``.
    """
    session_key = os.urandom(_ENVELOPE_KEY_SIZE)
    wrapped = public_key.encrypt(session_key, _OAEP)
    nonce = os.urandom(_ENVELOPE_NONCE_SIZE)
    body = AESGCM(session_key).encrypt(nonce, blob, None)
    return struct.pack(">H", len(wrapped)) + wrapped + nonce + body


def open_envelope(private_key, envelope: bytes) -> bytes:
    if len(envelope) < 2:
        raise EnvelopeError("envelope too short")
    (wrapped_len,) = struct.unpack_from(">H", envelope, 0)
    key_end = 2 + wrapped_len
    nonce_end = key_end + _ENVELOPE_NONCE_SIZE
    if len(envelope) < nonce_end + 16:
        raise EnvelopeError("envelope truncated")
    try:
        session_key = private_key.decrypt(envelope[2:key_end], _OAEP)
        return AESGCM(session_key).decrypt(
            envelope[key_end:nonce_end], envelope[nonce_end:], None
        )
    except (ValueError, InvalidTag) as exc:
        raise EnvelopeError("envelope cannot be opened with this key") from exc
