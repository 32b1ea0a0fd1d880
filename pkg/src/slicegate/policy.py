"""Boolean attribute policies: parsing, evaluation, and threshold-tree lowering.

A policy is a monotone propositional formula over numeric attribute
identifiers, written as e.g. ``14548487 and (Manufacturer or Supplier)``.
Attributes are canonically unsigned 64-bit integers; human-readable names
are an off-chain aliasing layer provided by an :class:`AttributeDict`.

Grammar (keywords case-insensitive, names case-sensitive)::

    expr   := term ('or' term)*
    term   := factor ('and' factor)*
    factor := ATTR | '(' expr ')'
    ATTR   := NAME | DECIMAL_U64

``and`` binds tighter than ``or``; both are left-associative.  Negation is
rejected at parse time: the encryption layer only supports monotone
policies.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

from .errors import PolicySyntaxError, SliceGateError, UnknownAttributeError

MAX_ATTRIBUTE = 2**64 - 1


@dataclass(frozen=True)
class AttributeId:
    """Numeric attribute identifier with an optional display name.

    Equality and hashing use the numeric value only; the name is a
    presentation alias and never affects semantics.
    """

    value: int
    name: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.value <= MAX_ATTRIBUTE:
            raise ValueError(f"attribute value {self.value} outside u64 range")

    def __str__(self) -> str:
        return self.name if self.name is not None else str(self.value)


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


class AttributeDict:
    """Bijective name <-> u64 mapping, loaded from a two-column text file.

    File format: one ``name<TAB>value`` per line; ``#`` starts a comment;
    blank lines are ignored.
    """

    def __init__(self, entries: Optional[Iterable[tuple[str, int]]] = None):
        self._by_name: dict[str, int] = {}
        self._by_value: dict[int, str] = {}
        for name, value in entries or ():
            self.add(name, value)

    def add(self, name: str, value: int) -> AttributeId:
        if not _NAME_RE.fullmatch(name):
            raise SliceGateError(f"invalid attribute name {name!r}")
        if not 0 <= value <= MAX_ATTRIBUTE:
            raise SliceGateError(f"attribute value {value} outside u64 range")
        if name in self._by_name and self._by_name[name] != value:
            raise SliceGateError(f"attribute name {name!r} already bound")
        if value in self._by_value and self._by_value[value] != name:
            raise SliceGateError(f"attribute value {value} already bound")
        self._by_name[name] = value
        self._by_value[value] = name
        return AttributeId(value, name)

    @classmethod
    def from_file(cls, path) -> "AttributeDict":
        d = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise SliceGateError(
                        f"{path}:{lineno}: expected 'name<TAB>value', got {raw.rstrip()!r}"
                    )
                name, value = parts[0].strip(), parts[1].strip()
                if not value.isdigit():
                    raise SliceGateError(f"{path}:{lineno}: non-numeric value {value!r}")
                d.add(name, int(value))
        return d

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for name, value in sorted(self._by_name.items(), key=lambda kv: kv[1]):
                fh.write(f"{name}\t{value}\n")

    def resolve(self, name: str) -> Optional[AttributeId]:
        value = self._by_name.get(name)
        return None if value is None else AttributeId(value, name)

    def lookup(self, value: int) -> AttributeId:
        return AttributeId(value, self._by_value.get(value))

    def names(self) -> dict[str, int]:
        return dict(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._by_name)


# --- policy AST -------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    attribute: AttributeId


@dataclass(frozen=True)
class And:
    left: "PolicyExpr"
    right: "PolicyExpr"


@dataclass(frozen=True)
class Or:
    left: "PolicyExpr"
    right: "PolicyExpr"


PolicyExpr = Union[Leaf, And, Or]

_TOKEN_RE = re.compile(r"\s*(?:(?P<lparen>\()|(?P<rparen>\))|(?P<number>[0-9]+)|(?P<name>[A-Za-z_][A-Za-z0-9_\-]*))")


def _tokenize(text: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise PolicySyntaxError(f"unexpected character {stripped[0]!r}", at)
        kind = m.lastgroup
        tok = m.group(kind)
        yield kind, tok, m.end() - len(tok)
        pos = m.end()
    yield "end", "", len(text)


class _Parser:
    def __init__(self, text: str, dictionary: Optional[AttributeDict]):
        self._tokens = _tokenize(text)
        self._dict = dictionary
        self._advance()

    def _advance(self):
        self.kind, self.tok, self.pos = next(self._tokens)

    def parse(self) -> PolicyExpr:
        expr = self._expr()
        if self.kind != "end":
            raise PolicySyntaxError(f"unexpected token {self.tok!r}", self.pos)
        return expr

    def _expr(self) -> PolicyExpr:
        node = self._term()
        while self.kind == "name" and self.tok.lower() == "or":
            self._advance()
            node = Or(node, self._term())
        return node

    def _term(self) -> PolicyExpr:
        node = self._factor()
        while self.kind == "name" and self.tok.lower() == "and":
            self._advance()
            node = And(node, self._factor())
        return node

    def _factor(self) -> PolicyExpr:
        if self.kind == "lparen":
            self._advance()
            node = self._expr()
            if self.kind != "rparen":
                raise PolicySyntaxError("expected ')'", self.pos)
            self._advance()
            return node
        if self.kind == "number":
            value, pos = int(self.tok), self.pos
            if value > MAX_ATTRIBUTE:
                raise PolicySyntaxError(f"attribute {value} outside u64 range", pos)
            self._advance()
            name = self._dict.lookup(value).name if self._dict else None
            return Leaf(AttributeId(value, name))
        if self.kind == "name":
            word = self.tok.lower()
            if word == "not":
                raise PolicySyntaxError("negation is not supported in policies", self.pos)
            if word in ("and", "or"):
                raise PolicySyntaxError(f"unexpected keyword {self.tok!r}", self.pos)
            name, pos = self.tok, self.pos
            self._advance()
            attr = self._dict.resolve(name) if self._dict else None
            if attr is None:
                raise UnknownAttributeError(name, pos)
            return Leaf(attr)
        raise PolicySyntaxError(
            "expected attribute or '('" if self.kind == "end" else f"unexpected token {self.tok!r}",
            self.pos,
        )


def parse_policy(text: str, dictionary: Optional[AttributeDict] = None) -> PolicyExpr:
    """Parse policy text into an AST; see the module grammar.

    Raises :class:`PolicySyntaxError` (with a character position) on
    malformed input and :class:`UnknownAttributeError` for names absent
    from the dictionary.
    """
    return _Parser(text, dictionary).parse()


def eval_policy(policy: PolicyExpr, attrs: Iterable) -> bool:
    """Standard propositional semantics; a leaf is true iff its attribute is held."""
    held = {a.value if isinstance(a, AttributeId) else int(a) for a in attrs}

    def walk(node: PolicyExpr) -> bool:
        if isinstance(node, Leaf):
            return node.attribute.value in held
        if isinstance(node, And):
            return walk(node.left) and walk(node.right)
        return walk(node.left) or walk(node.right)

    return walk(policy)


def policy_to_text(policy: PolicyExpr) -> str:
    """Render an AST back to policy text with minimal parentheses.

    Parenthesisation preserves structure under re-parsing (left-associative
    operators, ``and`` over ``or``), so ``parse(render(p))`` equals ``p``.
    """

    def prec(node: PolicyExpr) -> int:
        if isinstance(node, Leaf):
            return 3
        return 2 if isinstance(node, And) else 1

    def render(node: PolicyExpr) -> str:
        if isinstance(node, Leaf):
            return str(node.attribute)
        op = "and" if isinstance(node, And) else "or"
        left = render(node.left)
        if prec(node.left) < prec(node):
            left = f"({left})"
        right = render(node.right)
        if prec(node.right) <= prec(node):
            right = f"({right})"
        return f"{left} {op} {right}"

    return render(policy)


def policy_attributes(policy: PolicyExpr) -> frozenset[AttributeId]:
    """All attributes mentioned by the policy."""
    out = set()

    def walk(node: PolicyExpr):
        if isinstance(node, Leaf):
            out.add(node.attribute)
        else:
            walk(node.left)
            walk(node.right)

    walk(policy)
    return frozenset(out)


# --- threshold access trees ---------------------------------------------------


@dataclass(frozen=True)
class TreeLeaf:
    attribute: AttributeId


@dataclass(frozen=True)
class ThresholdGate:
    """k-of-n gate; children are satisfied left to right with 1-based indices."""

    threshold: int
    children: tuple["AccessTree", ...]

    def __post_init__(self):
        if not 1 <= self.threshold <= len(self.children):
            raise SliceGateError(
                f"threshold {self.threshold} invalid for {len(self.children)} children"
            )


AccessTree = Union[TreeLeaf, ThresholdGate]


def lower_to_tree(policy: PolicyExpr) -> AccessTree:
    """Lower a boolean policy to a threshold-gate tree.

    ``and`` becomes a 2-of-2 gate, ``or`` a 1-of-2 gate; satisfaction is
    preserved for every attribute set.
    """
    if isinstance(policy, Leaf):
        return TreeLeaf(policy.attribute)
    k = 2 if isinstance(policy, And) else 1
    return ThresholdGate(k, (lower_to_tree(policy.left), lower_to_tree(policy.right)))


def satisfies(tree: AccessTree, attrs: Iterable) -> bool:
    """True iff the attribute set meets the tree's threshold structure."""
    held = {a.value if isinstance(a, AttributeId) else int(a) for a in attrs}

    def walk(node: AccessTree) -> bool:
        if isinstance(node, TreeLeaf):
            return node.attribute.value in held
        hits = 0
        for child in node.children:
            if walk(child):
                hits += 1
                if hits >= node.threshold:
                    return True
        return False

    return walk(tree)


def tree_leaves(tree: AccessTree) -> list[TreeLeaf]:
    """Leaves in deterministic (depth-first, left-to-right) order."""
    out: list[TreeLeaf] = []

    def walk(node: AccessTree):
        if isinstance(node, TreeLeaf):
            out.append(node)
        else:
            for child in node.children:
                walk(child)

    walk(tree)
    return out
