"""Ciphertext-policy attribute-based encryption with hybrid payloads.

Construction: per-message master pair over a symmetric pairing group; the
policy is lowered to a threshold-gate tree whose gates share a random
session exponent through per-gate polynomials (degree k-1 at a k-of-n
gate).  Decryption pairs key components against leaf shares and rebuilds
the gate secrets by Lagrange interpolation in the exponent.  The payload
itself is AES-256-GCM under a key hashed from a random target-group
element; that element travels blinded by the policy-bound encapsulation,
and every public ciphertext field is authenticated as associated data, so
any tampering surfaces as a failed decryption.

Objects serialize to length-prefixed binary fields (version byte, profile
name, then the fields in declaration order); embed as base-64 when placed
inside JSON documents.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AccessDenied, GroupError, SliceGateError
from .pairing import GtElement, PairingGroup, Point, get_group
from .policy import (
    AccessTree,
    AttributeId,
    PolicyExpr,
    ThresholdGate,
    TreeLeaf,
    lower_to_tree,
    satisfies,
    tree_leaves,
)

_KDF_TAG = b"slicegate:abekdf:v1:"
_SER_VERSION = 1
_NONCE_SIZE = 12


def _attr_value(attr) -> int:
    value = attr.value if isinstance(attr, AttributeId) else int(attr)
    if not 0 <= value < 2**64:
        raise ValueError(f"attribute {value} outside u64 range")
    return value


def _attr_point(group: PairingGroup, value: int) -> Point:
    return group.hash_to_point(str(value).encode("ascii"))


# --- serialization helpers ---------------------------------------------------


def _pack(fields: Iterable[bytes]) -> bytes:
    out = [bytes([_SER_VERSION])]
    for field in fields:
        out.append(struct.pack(">I", len(field)))
        out.append(field)
    return b"".join(out)


def _unpack(blob: bytes) -> list[bytes]:
    if not blob or blob[0] != _SER_VERSION:
        raise SliceGateError("unsupported serialization version")
    fields = []
    pos = 1
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise SliceGateError("truncated field header")
        (size,) = struct.unpack_from(">I", blob, pos)
        pos += 4
        if pos + size > len(blob):
            raise SliceGateError("truncated field body")
        fields.append(blob[pos : pos + size])
        pos += size
    return fields


def _tree_to_bytes(tree: AccessTree) -> bytes:
    out = bytearray()

    def walk(node: AccessTree):
        if isinstance(node, TreeLeaf):
            out.append(0)
            out.extend(struct.pack(">Q", node.attribute.value))
        else:
            out.append(1)
            out.extend(struct.pack(">HH", node.threshold, len(node.children)))
            for child in node.children:
                walk(child)

    walk(tree)
    return bytes(out)


def _tree_from_bytes(blob: bytes) -> AccessTree:
    pos = 0

    def walk() -> AccessTree:
        nonlocal pos
        if pos >= len(blob):
            raise SliceGateError("truncated access tree")
        tag = blob[pos]
        pos += 1
        if tag == 0:
            (value,) = struct.unpack_from(">Q", blob, pos)
            pos += 8
            return TreeLeaf(AttributeId(value))
        if tag == 1:
            k, n = struct.unpack_from(">HH", blob, pos)
            pos += 4
            return ThresholdGate(k, tuple(walk() for _ in range(n)))
        raise SliceGateError(f"bad access-tree tag {tag}")

    tree = walk()
    if pos != len(blob):
        raise SliceGateError("trailing bytes after access tree")
    return tree


# --- key material -------------------------------------------------------------


@dataclass(frozen=True)
class MasterPublicKey:
    group: PairingGroup
    g_beta: Point
    egg_alpha: GtElement

    def to_bytes(self) -> bytes:
        g = self.group
        return _pack(
            [g.name.encode(), g.point_to_bytes(self.g_beta), g.gt_to_bytes(self.egg_alpha)]
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MasterPublicKey":
        name, g_beta, egg_alpha = _unpack(blob)
        group = get_group(name.decode())
        return cls(group, group.point_from_bytes(g_beta), group.gt_from_bytes(egg_alpha))


@dataclass(frozen=True)
class MasterSecretKey:
    group: PairingGroup
    beta: int
    g_alpha: Point

    def to_bytes(self) -> bytes:
        g = self.group
        scalar_size = (g.r.bit_length() + 7) // 8
        return _pack(
            [g.name.encode(), self.beta.to_bytes(scalar_size, "big"), g.point_to_bytes(self.g_alpha)]
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MasterSecretKey":
        name, beta, g_alpha = _unpack(blob)
        group = get_group(name.decode())
        return cls(group, int.from_bytes(beta, "big"), group.point_from_bytes(g_alpha))


@dataclass(frozen=True)
class AbeMasterPair:
    mpk: MasterPublicKey
    mk: MasterSecretKey


@dataclass(frozen=True)
class AbeSecretKey:
    """Attribute-bound decryption key: base component plus two points per attribute."""

    group: PairingGroup
    attributes: frozenset[int]
    d: Point
    components: dict[int, tuple[Point, Point]]

    def to_bytes(self) -> bytes:
        g = self.group
        fields = [g.name.encode(), g.point_to_bytes(self.d)]
        for attr in sorted(self.components):
            dj, djp = self.components[attr]
            fields.append(struct.pack(">Q", attr))
            fields.append(g.point_to_bytes(dj))
            fields.append(g.point_to_bytes(djp))
        return _pack(fields)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AbeSecretKey":
        fields = _unpack(blob)
        if len(fields) < 5 or (len(fields) - 2) % 3 != 0:
            raise SliceGateError("malformed secret key encoding")
        group = get_group(fields[0].decode())
        d = group.point_from_bytes(fields[1])
        components = {}
        for idx in range(2, len(fields), 3):
            (attr,) = struct.unpack(">Q", fields[idx])
            components[attr] = (
                group.point_from_bytes(fields[idx + 1]),
                group.point_from_bytes(fields[idx + 2]),
            )
        return cls(group, frozenset(components), d, components)


class PreparedKey:
    """Secret key with lazily cached Miller precomputation per component.

    Worth using whenever one key decrypts more than one ciphertext (the key
    manager decrypting every slice of a message, bulk test harnesses).
    """

    def __init__(self, sk: AbeSecretKey):
        self.sk = sk
        self._d_steps = None
        self._comp_steps: dict[int, tuple[list, list]] = {}

    @property
    def attributes(self) -> frozenset[int]:
        return self.sk.attributes

    def d_steps(self):
        if self._d_steps is None:
            self._d_steps = self.sk.group.miller_precompute(self.sk.d)
        return self._d_steps

    def comp_steps(self, attr: int):
        steps = self._comp_steps.get(attr)
        if steps is None:
            dj, djp = self.sk.components[attr]
            group = self.sk.group
            steps = (group.miller_precompute(dj), group.miller_precompute(djp))
            self._comp_steps[attr] = steps
        return steps


@dataclass(frozen=True)
class AbeCiphertext:
    """Policy-bound ciphertext; decryptable iff the key's attributes satisfy the tree."""

    group: PairingGroup
    tree: AccessTree
    c_bind: Point
    c_blind: GtElement
    leaf_elements: tuple[tuple[Point, Point], ...]
    nonce: bytes
    payload: bytes

    def _header_fields(self) -> list[bytes]:
        g = self.group
        fields = [
            g.name.encode(),
            _tree_to_bytes(self.tree),
            g.point_to_bytes(self.c_bind),
            g.gt_to_bytes(self.c_blind),
        ]
        for cx, cxp in self.leaf_elements:
            fields.append(g.point_to_bytes(cx))
            fields.append(g.point_to_bytes(cxp))
        fields.append(self.nonce)
        return fields

    def aad(self) -> bytes:
        return hashlib.sha256(_pack(self._header_fields())).digest()

    def to_bytes(self) -> bytes:
        return _pack(self._header_fields() + [self.payload])

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AbeCiphertext":
        fields = _unpack(blob)
        if len(fields) < 6:
            raise SliceGateError("malformed ciphertext encoding")
        group = get_group(fields[0].decode())
        tree = _tree_from_bytes(fields[1])
        c_bind = group.point_from_bytes(fields[2])
        c_blind = group.gt_from_bytes(fields[3])
        leaf_count = len(tree_leaves(tree))
        expected = 4 + 2 * leaf_count + 2
        if len(fields) != expected:
            raise SliceGateError("ciphertext field count mismatch")
        leaf_elements = tuple(
            (group.point_from_bytes(fields[4 + 2 * i]), group.point_from_bytes(fields[5 + 2 * i]))
            for i in range(leaf_count)
        )
        nonce = fields[4 + 2 * leaf_count]
        payload = fields[5 + 2 * leaf_count]
        if len(nonce) != _NONCE_SIZE:
            raise SliceGateError("bad nonce length")
        return cls(group, tree, c_bind, c_blind, leaf_elements, nonce, payload)


# --- scheme operations ---------------------------------------------------------


def setup(
    profile_or_group: Optional[Union[str, PairingGroup]] = None,
    rng: Optional[random.Random] = None,
) -> AbeMasterPair:
    """Generate a fresh master pair over the given (or default) group profile."""
    group = (
        profile_or_group
        if isinstance(profile_or_group, PairingGroup)
        else get_group(profile_or_group) if profile_or_group else get_group()
    )
    alpha = group.random_scalar(rng)
    beta = group.random_scalar(rng)
    mpk = MasterPublicKey(
        group,
        g_beta=group.mul(beta, group.g),
        egg_alpha=group.gt_exp(group.gt_generator(), alpha),
    )
    mk = MasterSecretKey(group, beta=beta, g_alpha=group.mul(alpha, group.g))
    return AbeMasterPair(mpk, mk)


def keygen(pair: AbeMasterPair, attrs: Iterable, rng: Optional[random.Random] = None) -> AbeSecretKey:
    """Issue a decryption key bound to the attribute set.

    Key generation is randomised: two keys for the same attributes differ
    but decrypt the same ciphertexts.
    """
    group = pair.mpk.group
    values = sorted({_attr_value(a) for a in attrs})
    if not values:
        raise ValueError("attribute set must be nonempty")
    t = group.random_scalar(rng)
    # D = g^((alpha + t) / beta) = (g^alpha)^(1/beta) * g^(t/beta)
    beta_inv = pow(pair.mk.beta, -1, group.r)
    d = group.add(
        group.mul(t * beta_inv % group.r, group.g),
        group.mul(beta_inv, pair.mk.g_alpha),
    )
    components = {}
    for value in values:
        tj = group.random_scalar(rng)
        dj = group.add(group.mul(t, group.g), group.mul(tj, _attr_point(group, value)))
        djp = group.mul(tj, group.g)
        components[value] = (dj, djp)
    return AbeSecretKey(group, frozenset(values), d, components)


def encrypt(
    mpk: MasterPublicKey,
    policy: Union[PolicyExpr, AccessTree],
    plaintext: bytes,
    rng: Optional[random.Random] = None,
) -> AbeCiphertext:
    """Encrypt under the lowered policy; any length of plaintext, empty included."""
    group = mpk.group
    tree = policy if isinstance(policy, (TreeLeaf, ThresholdGate)) else lower_to_tree(policy)
    leaves = tree_leaves(tree)
    s = group.random_scalar(rng)
    shares = _share_secret(group, tree, s, rng)
    session = group.random_gt(rng)
    c_blind = group.gt_mul(session, group.gt_exp(mpk.egg_alpha, s))
    leaf_elements = []
    for leaf, share in zip(leaves, shares):
        cx = group.mul(share, group.g)
        cxp = group.mul(share, _attr_point(group, leaf.attribute.value))
        leaf_elements.append((cx, cxp))
    nonce = _random_bytes(_NONCE_SIZE, rng)
    ct = AbeCiphertext(
        group,
        tree,
        c_bind=group.mul(s, mpk.g_beta),
        c_blind=c_blind,
        leaf_elements=tuple(leaf_elements),
        nonce=nonce,
        payload=b"",
    )
    key = hashlib.sha256(_KDF_TAG + group.gt_to_bytes(session)).digest()
    payload = AESGCM(key).encrypt(nonce, plaintext, ct.aad())
    return replace(ct, payload=payload)


def decrypt(
    mpk: MasterPublicKey, key: Union[AbeSecretKey, PreparedKey], ct: AbeCiphertext
) -> bytes:
    """Recover the plaintext, or raise :class:`AccessDenied`.

    The failure is uniform: an unsatisfied policy, a key from a different
    master pair, and a tampered ciphertext are indistinguishable.
    """
    prepared = key if isinstance(key, PreparedKey) else PreparedKey(key)
    sk = prepared.sk
    group = mpk.group
    if sk.group.name != group.name or ct.group.name != group.name:
        raise AccessDenied("key and ciphertext do not share a group profile")
    if not satisfies(ct.tree, sk.attributes):
        raise AccessDenied("policy not satisfied")
    try:
        contributions = _select_leaves(ct.tree, sk.attributes, group.r)
        blind = group.gt_identity()
        for leaf_pos, attr, coef in contributions:
            cx, cxp = ct.leaf_elements[leaf_pos]
            dj_steps, djp_steps = prepared.comp_steps(attr)
            f = group.gt_mul(
                group.pair_with(dj_steps, cx),
                group.gt_inv(group.pair_with(djp_steps, cxp)),
            )
            blind = group.gt_mul(blind, group.gt_exp(f, coef))
        # e(C, D) / e(g,g)^(t*s) = e(g,g)^(alpha*s)
        egg_alpha_s = group.gt_mul(
            group.pair_with(prepared.d_steps(), ct.c_bind), group.gt_inv(blind)
        )
        session = group.gt_mul(ct.c_blind, group.gt_inv(egg_alpha_s))
        aes_key = hashlib.sha256(_KDF_TAG + group.gt_to_bytes(session)).digest()
        return AESGCM(aes_key).decrypt(ct.nonce, ct.payload, ct.aad())
    except (InvalidTag, GroupError, KeyError, IndexError) as exc:
        raise AccessDenied("decryption failed") from exc


def _random_bytes(n: int, rng: Optional[random.Random]) -> bytes:
    if rng is None:
        import secrets

        return secrets.token_bytes(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def _share_secret(
    group: PairingGroup, tree: AccessTree, secret: int, rng: Optional[random.Random]
) -> list[int]:
    """Per-leaf shares of the session exponent, depth-first order."""
    r = group.r
    out: list[int] = []

    def walk(node: AccessTree, value: int):
        if isinstance(node, TreeLeaf):
            out.append(value)
            return
        coeffs = [value] + [group.random_scalar(rng) for _ in range(node.threshold - 1)]
        for index, child in enumerate(node.children, start=1):
            acc = 0
            for coef in reversed(coeffs):
                acc = (acc * index + coef) % r
            walk(child, acc)

    walk(tree, secret)
    return out


def _select_leaves(
    tree: AccessTree, held: frozenset[int], r: int
) -> list[tuple[int, int, int]]:
    """Choose a minimal satisfying leaf set with Lagrange coefficients.

    Returns ``(leaf_position, attribute, coefficient)`` triples such that the
    shares at those positions, weighted by the coefficients, reconstruct the
    root secret in the exponent.
    """
    next_pos = 0

    def choose(node: AccessTree):
        nonlocal next_pos
        if isinstance(node, TreeLeaf):
            pos = next_pos
            next_pos += 1
            if node.attribute.value in held:
                return 1, ("leaf", pos, node.attribute.value)
            return None
        options = []
        for index, child in enumerate(node.children, start=1):
            sub = choose(child)
            if sub is not None:
                options.append((sub[0], index, sub[1]))
        if len(options) < node.threshold:
            return None
        options.sort(key=lambda o: o[0])
        picked = options[: node.threshold]
        return sum(o[0] for o in picked), ("gate", [(i, sel) for _, i, sel in picked])

    selection = choose(tree)
    if selection is None:
        raise AccessDenied("policy not satisfied")

    triples: list[tuple[int, int, int]] = []

    def collect(sel, coef: int):
        if sel[0] == "leaf":
            triples.append((sel[1], sel[2], coef))
            return
        indices = [i for i, _ in sel[1]]
        for i, sub in sel[1]:
            collect(sub, coef * _lagrange_at_zero(i, indices, r) % r)

    collect(selection[1], 1)
    return triples


def _lagrange_at_zero(i: int, indices: list[int], r: int) -> int:
    acc = 1
    for j in indices:
        if j != i:
            acc = acc * (-j) % r * pow(i - j, -1, r) % r
    return acc
