"""Secure Data Manager: authenticates owners, encrypts slices, stores, registers.

One cipher request runs the full write path: parse every policy, generate a
fresh master pair for the message, encrypt each slice under its own
policy, seal the shared secret (master keys, per-slice salts, algebraic
metadata) to the key manager's public key, store the assembled file in the
content store, and only then bind the locator in the registry.  The write
ordering means a crash can leave an unreferenced file but never a registry
entry pointing at nothing.

The service keeps no state between requests beyond the ephemeral challenge
table; everything durable lives in the store and the registry.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass
from typing import Optional, Sequence

from . import abe, wire
from .cas import ContentStore, to_words
from .errors import DuplicateMessageError, SliceGateError
from .ledger import Registry
from .messagefile import (
    SALT_SIZE,
    CipherSlice,
    MessageFile,
    SharedSecret,
    SliceSecret,
    salted_hash,
)
from .pairing import DEFAULT_PROFILE, get_group
from .pkcrypto import KeyPair, seal_to
from .policy import AttributeDict, PolicyExpr, parse_policy

_BIND_RETRIES = 4


@dataclass(frozen=True)
class SliceRequest:
    plaintext: bytes
    policy: PolicyExpr


class SecureDataManager(wire.AuthenticatedService):
    OPERATIONS = {"ping": "_wire_ping", "cipher": "_wire_cipher"}

    def __init__(
        self,
        keypair: KeyPair,
        skm_public_key,
        store: ContentStore,
        registry: Registry,
        dictionary: Optional[AttributeDict] = None,
        profile: str = DEFAULT_PROFILE,
        rng: Optional[random.Random] = None,
    ):
        super().__init__(keypair, rng)
        self.skm_public_key = skm_public_key
        self.store = store
        self.registry = registry
        self.dictionary = dictionary or AttributeDict()
        self.group = get_group(profile)
        self._rng = rng

    # -- protocol steps (2)-(6) ------------------------------------------

    def handle_cipher_request(
        self,
        owner: str,
        pubkey_der: bytes,
        challenge: bytes,
        signature: bytes,
        slices: Sequence[tuple[bytes, str]],
    ) -> int:
        """Encrypt and publish a message; returns the fresh message id."""
        sender = self.authenticate(owner, pubkey_der, challenge, signature)
        if not slices:
            raise SliceGateError("a message needs at least one slice")
        # Parse everything first so a bad policy fails before any crypto.
        parsed = [
            SliceRequest(plaintext, parse_policy(text, self.dictionary))
            for plaintext, text in slices
        ]

        for _ in range(_BIND_RETRIES):
            message_id = self._random_u64()
            message = self._build_message(str(sender), message_id, parsed)
            locator = self.store.put(message.to_bytes())
            try:
                self.registry.set_ipfs_info(self.address, message_id, to_words(locator))
            except DuplicateMessageError:
                continue  # id collision: rebuild under a new id
            return message_id
        raise SliceGateError("could not allocate a fresh message id")

    def _build_message(
        self, sender: str, message_id: int, parsed: Sequence[SliceRequest]
    ) -> MessageFile:
        pair = abe.setup(self.group, self._rng)
        slice_ids: set[int] = set()
        cipher_slices = []
        slice_secrets = {}
        for request in parsed:
            slice_id = self._random_u64()
            while slice_id in slice_ids:
                slice_id = self._random_u64()
            slice_ids.add(slice_id)
            salt = self._random_bytes(SALT_SIZE)
            ciphertext = abe.encrypt(pair.mpk, request.policy, request.plaintext, self._rng)
            cipher_slices.append(
                CipherSlice(slice_id, salted_hash(request.plaintext, salt), ciphertext.to_bytes())
            )
            slice_secrets[slice_id] = SliceSecret(
                salt, {"curve": self.group.name, "version": 1}
            )
        shared = SharedSecret(pair.mpk.to_bytes(), pair.mk.to_bytes(), slice_secrets)
        envelope = seal_to(self.skm_public_key, shared.to_bytes())
        return MessageFile(sender, message_id, envelope, tuple(cipher_slices))

    # -- wire adapters -------------------------------------------------------

    def _wire_ping(self, request: dict) -> dict:
        self.authenticate(
            request["address"],
            wire.unb64(request["pubkey"]),
            wire.unb64(request["challenge"]),
            wire.unb64(request["signature"]),
        )
        return {}

    def _wire_cipher(self, request: dict) -> dict:
        body = request.get("body") or {}
        slices = [
            (wire.unb64(item["plaintext"]), str(item["policy"]))
            for item in body.get("slices", [])
        ]
        message_id = self.handle_cipher_request(
            request["address"],
            wire.unb64(request["pubkey"]),
            wire.unb64(request["challenge"]),
            wire.unb64(request["signature"]),
            slices,
        )
        return {"message_id": str(message_id)}

    # -- randomness ------------------------------------------------------------

    def _random_u64(self) -> int:
        if self._rng is None:
            return secrets.randbits(64)
        return self._rng.getrandbits(64)

    def _random_bytes(self, n: int) -> bytes:
        if self._rng is None:
            return secrets.token_bytes(n)
        return self._rng.getrandbits(8 * n).to_bytes(n, "big")
