"""Secure Key Manager: issues per-message keys and serves decryption requests.

For a key request the manager authenticates the reader, pulls their
attributes and the message locator from the registry, fetches the message
file, opens the shared secret with its own private key, and derives an
attribute-bound decryption key.  For an access request it attempts every
slice with the presented key and returns exactly the slices whose policy
the key satisfies, each with its decrypted salt so the reader can check
the stored integrity hash themselves.  A request satisfying no slice at
all is denied outright.

Nothing is retained after a response; the challenge table is the only
mutable state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from . import abe, wire
from .cas import ContentStore, Locator, from_words
from .errors import AccessDenied, NoAttributesError, SliceGateError
from .ledger import Registry
from .messagefile import MessageFile, SharedSecret, verify_integrity  # noqa: F401  (re-export)
from .pkcrypto import KeyPair, open_envelope


@dataclass(frozen=True)
class KeyResponse:
    sk: bytes
    locator: Locator


@dataclass(frozen=True)
class AccessSlice:
    slice_id: int
    plaintext: bytes
    salt: bytes


class SecureKeyManager(wire.AuthenticatedService):
    OPERATIONS = {"ping": "_wire_ping", "key": "_wire_key", "access": "_wire_access"}

    def __init__(
        self,
        keypair: KeyPair,
        store: ContentStore,
        registry: Registry,
        rng: Optional[random.Random] = None,
    ):
        super().__init__(keypair, rng)
        self.store = store
        self.registry = registry
        self._rng = rng

    def _load_message(self, message_id: int):
        words = self.registry.get_ipfs_info(message_id)
        locator = from_words(words)
        message = MessageFile.from_bytes(self.store.get(locator))
        secret = SharedSecret.from_bytes(
            open_envelope(self.keypair.private_key, message.shared_secret)
        )
        return locator, message, secret

    # -- protocol steps (7)-(10) -----------------------------------------

    def handle_key_request(
        self, reader: str, pubkey_der: bytes, challenge: bytes, signature: bytes, message_id: int
    ) -> KeyResponse:
        """Issue a decryption key from the reader's on-chain attributes."""
        who = self.authenticate(reader, pubkey_der, challenge, signature)
        attrs = self.registry.get_user_info(who)
        if not attrs:
            raise NoAttributesError(f"no attributes registered for {who}")
        locator, _message, secret = self._load_message(message_id)
        pair = abe.AbeMasterPair(
            abe.MasterPublicKey.from_bytes(secret.mpk),
            abe.MasterSecretKey.from_bytes(secret.mk),
        )
        sk = abe.keygen(pair, attrs, self._rng)
        return KeyResponse(sk=sk.to_bytes(), locator=locator)

    # -- protocol steps (11)-(16) -----------------------------------------------

    def handle_access_request(
        self,
        reader: str,
        pubkey_der: bytes,
        challenge: bytes,
        signature: bytes,
        message_id: int,
        sk_bytes: bytes,
    ) -> list[AccessSlice]:
        """Decrypt and return exactly the slices the presented key satisfies."""
        self.authenticate(reader, pubkey_der, challenge, signature)
        _locator, message, secret = self._load_message(message_id)
        mpk = abe.MasterPublicKey.from_bytes(secret.mpk)
        prepared = abe.PreparedKey(abe.AbeSecretKey.from_bytes(sk_bytes))
        granted: list[AccessSlice] = []
        for cipher_slice in message.slices:
            try:
                ciphertext = abe.AbeCiphertext.from_bytes(cipher_slice.ciphertext)
                plaintext = abe.decrypt(mpk, prepared, ciphertext)
            except (AccessDenied, SliceGateError):
                continue
            granted.append(
                AccessSlice(
                    cipher_slice.slice_id,
                    plaintext,
                    secret.slices[cipher_slice.slice_id].salt,
                )
            )
        if not granted:
            raise AccessDenied("the presented key satisfies no slice of this message")
        return granted

    # -- wire adapters -------------------------------------------------------

    def _auth_tuple(self, request: dict):
        return (
            request["address"],
            wire.unb64(request["pubkey"]),
            wire.unb64(request["challenge"]),
            wire.unb64(request["signature"]),
        )

    def _wire_ping(self, request: dict) -> dict:
        self.authenticate(*self._auth_tuple(request))
        return {}

    def _wire_key(self, request: dict) -> dict:
        body = request.get("body") or {}
        response = self.handle_key_request(
            *self._auth_tuple(request), int(body["message_id"])
        )
        return {"sk": wire.b64(response.sk), "locator": str(response.locator)}

    def _wire_access(self, request: dict) -> dict:
        body = request.get("body") or {}
        granted = self.handle_access_request(
            *self._auth_tuple(request), int(body["message_id"]), wire.unb64(body["sk"])
        )
        return {
            "slices": [
                {
                    "slice_id": str(s.slice_id),
                    "plaintext": wire.b64(s.plaintext),
                    "salt": wire.b64(s.salt),
                }
                for s in granted
            ]
        }
