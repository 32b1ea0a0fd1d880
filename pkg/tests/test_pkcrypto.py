import re

import pytest

from slicegate.errors import EnvelopeError, SliceGateError
from slicegate.pkcrypto import (
    AccountAddress,
    KeyPair,
    derive_address,
    load_public_key,
    open_envelope,
    public_key_bytes,
    seal_to,
    sign,
    verify,
)


class TestAddresses:
    def test_deterministic(self, key_pool):
        pair = key_pool[0]
        assert derive_address(pair.public_key) == derive_address(pair.public_key)

    def test_shape_is_42_char_checksummed_hex(self, key_pool):
        text = str(key_pool[0].address)
        assert re.fullmatch(r"0x[0-9a-fA-F]{40}", text)
        assert text.lower() != text or text.upper() != text  # casing carries a checksum

    def test_parse_roundtrip(self, key_pool):
        address = key_pool[1].address
        assert AccountAddress.parse(str(address)) == address
        assert AccountAddress.parse(str(address).lower()) == address

    def test_parse_rejects_malformed(self):
        for bad in ("906d", "0x123", "0x" + "zz" * 20, "0x" + "ab" * 21):
            with pytest.raises(SliceGateError):
                AccountAddress.parse(bad)

    def test_no_collisions_across_thousand_keys(self):
        # Collision sweep over fresh keys; 1024-bit keys keep the sweep fast
        # and exercise the same derivation path.
        addresses = {str(KeyPair.generate(1024).address) for _ in range(1000)}
        assert len(addresses) == 1000

    def test_derived_from_canonical_encoding(self, key_pool):
        pair = key_pool[2]
        reloaded = load_public_key(public_key_bytes(pair.public_key))
        assert derive_address(reloaded) == pair.address

    def test_default_keys_are_2048_bit(self, keypair_2048):
        assert keypair_2048.private_key.key_size == 2048


class TestSignatures:
    def test_roundtrip_on_random_nonce(self, key_pool):
        import os

        pair = key_pool[0]
        nonce = os.urandom(32)
        assert verify(pair.public_key, nonce, sign(pair.private_key, nonce))

    def test_every_flipped_bit_fails(self, key_pool):
        pair = key_pool[0]
        nonce = bytes(range(32))
        signature = sign(pair.private_key, nonce)
        for bit in range(256):
            flipped = bytearray(nonce)
            flipped[bit // 8] ^= 1 << (bit % 8)
            assert not verify(pair.public_key, bytes(flipped), signature)

    def test_wrong_public_key_fails(self, key_pool):
        nonce = b"\x55" * 32
        signature = sign(key_pool[0].private_key, nonce)
        assert not verify(key_pool[1].public_key, nonce, signature)

    def test_garbage_signature_fails(self, key_pool):
        assert not verify(key_pool[0].public_key, b"msg", b"\x00" * 256)


class TestEnvelopes:
    def test_roundtrip_4kib(self, key_pool):
        pair = key_pool[0]
        blob = bytes(i % 251 for i in range(4096))
        assert open_envelope(pair.private_key, seal_to(pair.public_key, blob)) == blob

    def test_empty_blob(self, key_pool):
        pair = key_pool[0]
        assert open_envelope(pair.private_key, seal_to(pair.public_key, b"")) == b""

    def test_wrong_private_key_fails(self, key_pool):
        envelope = seal_to(key_pool[0].public_key, b"secret")
        with pytest.raises(EnvelopeError):
            open_envelope(key_pool[1].private_key, envelope)

    def test_tampered_body_fails(self, key_pool):
        pair = key_pool[0]
        envelope = bytearray(seal_to(pair.public_key, b"secret material"))
        envelope[-1] ^= 1
        with pytest.raises(EnvelopeError):
            open_envelope(pair.private_key, bytes(envelope))

    def test_truncated_fails(self, key_pool):
        pair = key_pool[0]
        envelope = seal_to(pair.public_key, b"secret material")
        with pytest.raises(EnvelopeError):
            open_envelope(pair.private_key, envelope[:10])

    def test_randomized_trials_only_holder_opens(self, key_pool):
        import os

        holder, other = key_pool[3], key_pool[4]
        for _ in range(20):
            blob = os.urandom(64)
            envelope = seal_to(holder.public_key, blob)
            assert open_envelope(holder.private_key, envelope) == blob
            with pytest.raises(EnvelopeError):
                open_envelope(other.private_key, envelope)


class TestKeyPairStorage:
    def test_pem_roundtrip(self, tmp_path, key_pool):
        path = tmp_path / "id.pem"
        key_pool[5].save_pem(path)
        loaded = KeyPair.load_pem(path)
        assert loaded.address == key_pool[5].address

    def test_malformed_public_key_rejected(self):
        with pytest.raises(SliceGateError):
            load_public_key(b"not a key")
