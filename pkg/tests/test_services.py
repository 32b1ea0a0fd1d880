import random

import pytest

from slicegate import abe
from slicegate.cas import ContentStore, from_words
from slicegate.errors import (
    AccessDenied,
    AuthenticationError,
    NoAttributesError,
    PolicySyntaxError,
    SliceGateError,
    UnknownMessageError,
)
from slicegate.ledger import Registry
from slicegate.messagefile import MessageFile, SharedSecret, salted_hash, verify_integrity
from slicegate.pkcrypto import open_envelope, public_key_bytes, sign
from slicegate.policy import AttributeDict, eval_policy, parse_policy
from slicegate.sdm import SecureDataManager
from slicegate.skm import SecureKeyManager

PROFILE = "ss192"

DICT_ENTRIES = [
    ("Manufacturer", 1),
    ("Customer", 2),
    ("Electronics", 3),
    ("Mechanics", 4),
    ("Customs", 5),
    ("Supplier", 16),
]

CASE = 14548487

BOM_POLICIES = [
    f"{CASE} and (Manufacturer or Supplier)",
    f"{CASE} and (Manufacturer or (Supplier and Electronics))",
    f"{CASE} and (Manufacturer or (Supplier and Mechanics))",
]

BOM_PLAINTEXTS = [b"common sheet", b"electronics sheet", b"mechanics sheet"]


class Stack:
    """Content store + registry + both services over one key set."""

    def __init__(self, tmp_path, key_pool, seed=1234):
        self.certifier, self.sdm_keys, self.skm_keys = key_pool[0], key_pool[1], key_pool[2]
        self.store = ContentStore(tmp_path / "cas")
        self.registry = Registry(
            self.certifier.address,
            self.sdm_keys.address,
            self.skm_keys.address,
            journal_path=tmp_path / "ledger.jsonl",
        )
        self.dictionary = AttributeDict(DICT_ENTRIES)
        self.rng = random.Random(seed)
        self.fresh_services()

    def fresh_services(self):
        """New stateless service instances over the same durable state."""
        self.sdm = SecureDataManager(
            self.sdm_keys,
            self.skm_keys.public_key,
            self.store,
            self.registry,
            self.dictionary,
            profile=PROFILE,
            rng=self.rng,
        )
        self.skm = SecureKeyManager(self.skm_keys, self.store, self.registry, rng=self.rng)

    def auth(self, service, identity):
        challenge = service.new_challenge()
        return (
            str(identity.address),
            public_key_bytes(identity.public_key),
            challenge,
            sign(identity.private_key, challenge),
        )

    def send(self, owner, slices):
        return self.sdm.handle_cipher_request(*self.auth(self.sdm, owner), slices)

    def key(self, reader, message_id):
        return self.skm.handle_key_request(*self.auth(self.skm, reader), message_id)

    def access(self, reader, message_id, sk_bytes):
        return self.skm.handle_access_request(
            *self.auth(self.skm, reader), message_id, sk_bytes
        )

    def register(self, reader, attrs):
        self.registry.set_user_info(self.certifier.address, reader.address, attrs)


@pytest.fixture()
def stack(tmp_path, key_pool):
    return Stack(tmp_path, key_pool)


@pytest.fixture()
def owner(key_pool):
    return key_pool[3]


@pytest.fixture()
def reader(key_pool):
    return key_pool[4]


class TestCipherRequest:
    def test_bom_three_slices(self, stack, owner):
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        assert 0 <= message_id < 2**64
        words = stack.registry.get_ipfs_info(message_id)
        stored = MessageFile.from_bytes(stack.store.get(from_words(words)))
        assert len(stored.slices) == 3
        assert stored.sender == str(owner.address)
        assert stored.message_id == message_id

    def test_shared_secret_self_consistency(self, stack, owner):
        """The sealed envelope must decrypt every slice for a satisfying key."""
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        stored = MessageFile.from_bytes(
            stack.store.get(from_words(stack.registry.get_ipfs_info(message_id)))
        )
        secret = SharedSecret.from_bytes(
            open_envelope(stack.skm_keys.private_key, stored.shared_secret)
        )
        pair = abe.AbeMasterPair(
            abe.MasterPublicKey.from_bytes(secret.mpk),
            abe.MasterSecretKey.from_bytes(secret.mk),
        )
        omnipotent = abe.keygen(pair, [CASE, 1, 16, 3, 4])
        for cipher_slice, plaintext in zip(stored.slices, BOM_PLAINTEXTS):
            recovered = abe.decrypt(
                pair.mpk, omnipotent, abe.AbeCiphertext.from_bytes(cipher_slice.ciphertext)
            )
            assert recovered == plaintext
            salt = secret.slices[cipher_slice.slice_id].salt
            assert salted_hash(recovered, salt) == cipher_slice.hash
            assert secret.slices[cipher_slice.slice_id].metadata == {
                "curve": PROFILE,
                "version": 1,
            }

    def test_two_messages_share_nothing(self, stack, owner):
        first = stack.send(owner, [(b"one", "Manufacturer")])
        second = stack.send(owner, [(b"two", "Manufacturer")])
        assert first != second
        secrets = []
        for message_id in (first, second):
            stored = MessageFile.from_bytes(
                stack.store.get(from_words(stack.registry.get_ipfs_info(message_id)))
            )
            secrets.append(
                SharedSecret.from_bytes(
                    open_envelope(stack.skm_keys.private_key, stored.shared_secret)
                )
            )
        assert secrets[0].mpk != secrets[1].mpk
        assert secrets[0].mk != secrets[1].mk

    def test_empty_plaintext_slice(self, stack, owner, reader):
        stack.register(reader, [101])
        message_id = stack.send(owner, [(b"", "101")])
        response = stack.key(reader, message_id)
        granted = stack.access(reader, message_id, response.sk)
        assert granted[0].plaintext == b""

    def test_malformed_policy_fails_before_side_effects(self, stack, owner):
        before = stack.registry.snapshot()
        with pytest.raises(PolicySyntaxError):
            stack.send(owner, [(b"x", "Manufacturer and (")])
        assert stack.registry.snapshot() == before

    def test_no_slices_rejected(self, stack, owner):
        with pytest.raises(SliceGateError):
            stack.send(owner, [])

    def test_bad_signature_rejected(self, stack, owner, reader):
        challenge = stack.sdm.new_challenge()
        with pytest.raises(AuthenticationError):
            stack.sdm.handle_cipher_request(
                str(owner.address),
                public_key_bytes(owner.public_key),
                challenge,
                sign(reader.private_key, challenge),
                [(b"x", "Manufacturer")],
            )


class TestKeyRequest:
    def test_flow(self, stack, owner, reader):
        stack.register(reader, [CASE, 16, 3])
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        response = stack.key(reader, message_id)
        sk = abe.AbeSecretKey.from_bytes(response.sk)
        assert sk.attributes == frozenset({CASE, 16, 3})
        assert str(response.locator) == str(
            from_words(stack.registry.get_ipfs_info(message_id))
        )

    def test_unregistered_reader(self, stack, owner, reader):
        message_id = stack.send(owner, [(b"x", "Manufacturer")])
        with pytest.raises(NoAttributesError):
            stack.key(reader, message_id)

    def test_unknown_message(self, stack, reader):
        stack.register(reader, [1])
        with pytest.raises(UnknownMessageError):
            stack.key(reader, 123456789)

    def test_impersonation_rejected(self, stack, owner, reader, key_pool):
        stack.register(reader, [CASE, 16, 3])
        message_id = stack.send(owner, [(b"x", "Manufacturer")])
        attacker = key_pool[5]
        challenge = stack.skm.new_challenge()
        with pytest.raises(AuthenticationError):
            stack.skm.handle_key_request(
                str(reader.address),
                public_key_bytes(reader.public_key),
                challenge,
                sign(attacker.private_key, challenge),
                message_id,
            )


class TestAccessRequest:
    def test_electronic_supplier_gets_slices_1_and_2(self, stack, owner, reader):
        stack.register(reader, [CASE, 16, 3])
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        response = stack.key(reader, message_id)
        granted = stack.access(reader, message_id, response.sk)
        assert sorted(s.plaintext for s in granted) == [b"common sheet", b"electronics sheet"]
        stored = MessageFile.from_bytes(stack.store.get(from_words(stack.registry.get_ipfs_info(message_id))))
        for item in granted:
            assert verify_integrity(item.plaintext, item.salt, stored.find_slice(item.slice_id))

    def test_matches_policy_oracle(self, stack, owner, reader):
        rosters = {
            "manufacturer": [CASE, 1],
            "electronic": [CASE, 16, 3],
            "mechanical": [CASE, 16, 4],
            "customs": [5],
        }
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        policies = [parse_policy(p, stack.dictionary) for p in BOM_POLICIES]
        stored = MessageFile.from_bytes(
            stack.store.get(from_words(stack.registry.get_ipfs_info(message_id)))
        )
        for attrs in rosters.values():
            stack.register(reader, attrs)
            expected = {
                stored.slices[i].slice_id
                for i, policy in enumerate(policies)
                if eval_policy(policy, attrs)
            }
            try:
                response = stack.key(reader, message_id)
                granted = {s.slice_id for s in stack.access(reader, message_id, response.sk)}
            except AccessDenied:
                granted = set()
            assert granted == expected, attrs

    def test_zero_satisfied_slices_denied(self, stack, owner, reader):
        stack.register(reader, [5])  # customs: no case attribute
        message_id = stack.send(owner, list(zip(BOM_PLAINTEXTS, BOM_POLICIES)))
        response = stack.key(reader, message_id)
        with pytest.raises(AccessDenied):
            stack.access(reader, message_id, response.sk)

    def test_cross_message_key_denied(self, stack, owner, reader):
        stack.register(reader, [101])
        first = stack.send(owner, [(b"first", "101")])
        second = stack.send(owner, [(b"second", "101")])
        key_first = stack.key(reader, first)
        with pytest.raises(AccessDenied):
            stack.access(reader, second, key_first.sk)

    def test_tampered_store_detected(self, stack, owner, reader, tmp_path):
        stack.register(reader, [101])
        message_id = stack.send(owner, [(b"payload", "101")])
        response = stack.key(reader, message_id)
        locator = from_words(stack.registry.get_ipfs_info(message_id))
        path = tmp_path / "cas" / str(locator)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 1
        path.write_bytes(bytes(blob))
        with pytest.raises(SliceGateError):
            stack.access(reader, message_id, response.sk)


class TestStatelessness:
    def test_restart_between_requests(self, stack, owner, reader):
        stack.register(reader, [101])
        first = stack.send(owner, [(b"before restart", "101")])
        stack.fresh_services()  # both managers restarted
        second = stack.send(owner, [(b"after restart", "101")])
        stack.fresh_services()
        for message_id, expected in ((first, b"before restart"), (second, b"after restart")):
            response = stack.key(reader, message_id)
            stack.fresh_services()
            granted = stack.access(reader, message_id, response.sk)
            assert granted[0].plaintext == expected

    def test_sk_survives_manager_restart(self, stack, owner, reader):
        # A key issued before a restart still opens the message afterwards:
        # everything the manager needs is re-derived from store + registry.
        stack.register(reader, [101])
        message_id = stack.send(owner, [(b"durable", "101")])
        response = stack.key(reader, message_id)
        stack.fresh_services()
        granted = stack.access(reader, message_id, response.sk)
        assert granted[0].plaintext == b"durable"
