import random

import pytest

from slicegate import abe
from slicegate.errors import AccessDenied, SliceGateError
from slicegate.policy import AttributeDict, AttributeId, Leaf, parse_policy, eval_policy, lower_to_tree

from util import all_subsets, enumerate_policies

PROFILE = "ss192"  # no security margin; keeps the crypto-heavy tests quick


@pytest.fixture(scope="module")
def dictionary():
    return AttributeDict(
        [("Manufacturer", 1), ("Supplier", 16), ("Electronics", 3), ("Mechanics", 4)]
    )


@pytest.fixture(scope="module")
def pair():
    return abe.setup(PROFILE)


class TestSetup:
    def test_fresh_pairs_differ(self):
        first, second = abe.setup(PROFILE), abe.setup(PROFILE)
        assert first.mk.to_bytes() != second.mk.to_bytes()
        assert first.mpk.to_bytes() != second.mpk.to_bytes()

    def test_mpk_serialization_roundtrip(self, pair):
        loaded = abe.MasterPublicKey.from_bytes(pair.mpk.to_bytes())
        assert loaded.to_bytes() == pair.mpk.to_bytes()
        assert loaded.g_beta == pair.mpk.g_beta
        assert loaded.egg_alpha == pair.mpk.egg_alpha

    def test_cross_pair_keys_useless(self, pair):
        other = abe.setup(PROFILE)
        ct = abe.encrypt(pair.mpk, Leaf(AttributeId(7)), b"isolated")
        sk_other = abe.keygen(other, [7])
        with pytest.raises(AccessDenied):
            abe.decrypt(pair.mpk, sk_other, ct)
        # and the satisfying key from the right pair still works
        assert abe.decrypt(pair.mpk, abe.keygen(pair, [7]), ct) == b"isolated"

    def test_default_profile_is_hardened(self):
        assert abe.setup().mpk.group.name == "ss1536"


class TestKeygen:
    def test_randomized_but_equivalent(self, pair):
        ct = abe.encrypt(pair.mpk, Leaf(AttributeId(5)), b"payload")
        sk1 = abe.keygen(pair, [5, 6])
        sk2 = abe.keygen(pair, [5, 6])
        assert sk1.to_bytes() != sk2.to_bytes()
        assert abe.decrypt(pair.mpk, sk1, ct) == b"payload"
        assert abe.decrypt(pair.mpk, sk2, ct) == b"payload"

    def test_empty_attrs_rejected(self, pair):
        with pytest.raises(ValueError):
            abe.keygen(pair, [])

    def test_accepts_attribute_ids(self, pair):
        sk = abe.keygen(pair, [AttributeId(16, "Supplier"), 3])
        assert sk.attributes == frozenset({16, 3})

    def test_serialized_length_fixed_by_attr_count(self, pair):
        lengths = {
            len(abe.keygen(pair, random.sample(range(1, 100), 3)).to_bytes()) for _ in range(5)
        }
        assert len(lengths) == 1

    def test_sk_serialization_roundtrip(self, pair):
        sk = abe.keygen(pair, [10, 20, 30])
        loaded = abe.AbeSecretKey.from_bytes(sk.to_bytes())
        assert loaded.to_bytes() == sk.to_bytes()
        assert loaded.attributes == sk.attributes


class TestEncryptDecrypt:
    def test_roundtrip_exact(self, pair, dictionary):
        policy = parse_policy("14548487 and (Manufacturer or Supplier)", dictionary)
        plaintext = bytes(range(256)) * 3
        ct = abe.encrypt(pair.mpk, policy, plaintext)
        sk = abe.keygen(pair, [14548487, 16])
        assert abe.decrypt(pair.mpk, sk, ct) == plaintext

    def test_empty_plaintext(self, pair):
        ct = abe.encrypt(pair.mpk, Leaf(AttributeId(1)), b"")
        assert abe.decrypt(pair.mpk, abe.keygen(pair, [1]), ct) == b""

    def test_accepts_pre_lowered_tree(self, pair, dictionary):
        policy = parse_policy("Manufacturer or Electronics", dictionary)
        ct = abe.encrypt(pair.mpk, lower_to_tree(policy), b"tree input")
        assert abe.decrypt(pair.mpk, abe.keygen(pair, [3]), ct) == b"tree input"

    def test_bom_slice2_denied_to_mechanical_supplier(self, pair, dictionary):
        policy = parse_policy(
            "14548487 and (Manufacturer or (Supplier and Electronics))", dictionary
        )
        ct = abe.encrypt(pair.mpk, policy, b"electronics sheet")
        mechanical = abe.keygen(pair, [14548487, 16, 4])
        with pytest.raises(AccessDenied):
            abe.decrypt(pair.mpk, mechanical, ct)

    def test_ciphertext_serialization_roundtrip(self, pair, dictionary):
        policy = parse_policy("Manufacturer and (Supplier or Electronics)", dictionary)
        ct = abe.encrypt(pair.mpk, policy, b"wire format")
        loaded = abe.AbeCiphertext.from_bytes(ct.to_bytes())
        assert loaded.to_bytes() == ct.to_bytes()
        assert abe.decrypt(pair.mpk, abe.keygen(pair, [1, 3]), loaded) == b"wire format"

    def test_payload_tamper_denied(self, pair):
        ct = abe.encrypt(pair.mpk, Leaf(AttributeId(1)), b"authentic")
        sk = abe.keygen(pair, [1])
        blob = bytearray(ct.to_bytes())
        blob[-1] ^= 0x01
        with pytest.raises(AccessDenied):
            abe.decrypt(pair.mpk, sk, abe.AbeCiphertext.from_bytes(bytes(blob)))

    def test_header_tamper_denied(self, pair, dictionary):
        # Flipping an unused leaf element must still break decryption: the
        # header is bound as associated data.
        policy = parse_policy("Manufacturer or Supplier", dictionary)
        ct = abe.encrypt(pair.mpk, policy, b"bound header")
        sk = abe.keygen(pair, [1])
        tampered = abe.AbeCiphertext(
            ct.group, ct.tree, ct.c_bind,
            ct.group.gt_exp(ct.c_blind, 2),  # corrupt the blinded element
            ct.leaf_elements, ct.nonce, ct.payload,
        )
        with pytest.raises(AccessDenied):
            abe.decrypt(pair.mpk, sk, tampered)

    def test_prepared_key_matches_plain(self, pair, dictionary):
        policy = parse_policy("Manufacturer and Supplier", dictionary)
        ct = abe.encrypt(pair.mpk, policy, b"prepared")
        sk = abe.keygen(pair, [1, 16])
        prepared = abe.PreparedKey(sk)
        assert abe.decrypt(pair.mpk, prepared, ct) == abe.decrypt(pair.mpk, sk, ct)

    def test_repeated_attribute_leaves(self, pair):
        a = Leaf(AttributeId(9))
        from slicegate.policy import And, Or

        policy = And(a, Or(a, a))
        ct = abe.encrypt(pair.mpk, policy, b"aliased leaves")
        assert abe.decrypt(pair.mpk, abe.keygen(pair, [9]), ct) == b"aliased leaves"


class TestOracleEquivalence:
    def test_random_policies_up_to_five_attrs(self, pair):
        # decrypt succeeds iff the propositional evaluation does, across all
        # attribute subsets of a 5-attribute universe.
        rng = random.Random(2024)
        attrs = [1, 2, 3, 4, 5]
        policies = enumerate_policies(attrs, 5)
        sample = rng.sample(policies, 30)
        keys = {}
        for subset in all_subsets(attrs):
            keys[subset] = abe.PreparedKey(abe.keygen(pair, subset or [999]))
        for policy in sample:
            ct = abe.encrypt(pair.mpk, policy, b"equiv")
            for subset, key in keys.items():
                expected = eval_policy(policy, subset)
                try:
                    observed = abe.decrypt(pair.mpk, key, ct) == b"equiv"
                except AccessDenied:
                    observed = False
                assert observed == expected, (policy, subset)


class TestSerializationErrors:
    def test_bad_version(self):
        with pytest.raises(SliceGateError):
            abe.MasterPublicKey.from_bytes(b"\x07junk")

    def test_truncated(self, pair):
        blob = pair.mpk.to_bytes()
        with pytest.raises(SliceGateError):
            abe.MasterPublicKey.from_bytes(blob[: len(blob) // 2])

    def test_sk_field_count(self):
        with pytest.raises(SliceGateError):
            abe.AbeSecretKey.from_bytes(b"\x01" + b"\x00\x00\x00\x01a")
