"""Shared test machinery: policy enumeration and an independent evaluator.

The evaluator here deliberately takes a different route from the library:
policies are rendered to Python boolean expressions and evaluated with
``eval`` under an attribute binding, so the two implementations can only
agree by computing the same semantics.
"""

from itertools import product

from slicegate.policy import And, AttributeId, Leaf, Or, PolicyExpr


def enumerate_policies(attrs: list[int], max_nodes: int) -> list[PolicyExpr]:
    """Every policy tree over the given attributes with at most max_nodes nodes."""
    leaves = [Leaf(AttributeId(a)) for a in attrs]
    by_size: dict[int, list[PolicyExpr]] = {1: list(leaves)}
    for size in range(3, max_nodes + 1, 2):
        bucket: list[PolicyExpr] = []
        for left_size in range(1, size - 1, 2):
            right_size = size - 1 - left_size
            for left in by_size[left_size]:
                for right in by_size[right_size]:
                    bucket.append(And(left, right))
                    bucket.append(Or(left, right))
        by_size[size] = bucket
    out: list[PolicyExpr] = []
    for size in range(1, max_nodes + 1, 2):
        out.extend(by_size.get(size, ()))
    return out


def all_subsets(attrs: list[int]) -> list[frozenset[int]]:
    return [
        frozenset(a for a, keep in zip(attrs, bits) if keep)
        for bits in product([0, 1], repeat=len(attrs))
    ]


def oracle_eval(policy: PolicyExpr, held) -> bool:
    """Independent truth-table oracle via Python's own boolean operators."""
    held = {a if isinstance(a, int) else a.value for a in held}

    def render(node: PolicyExpr) -> str:
        if isinstance(node, Leaf):
            return f"v{node.attribute.value}"
        op = "and" if isinstance(node, And) else "or"
        return f"({render(node.left)} {op} {render(node.right)})"

    names = {f"v{a.value}": a.value in held for a in _leaves(policy)}
    return bool(eval(render(policy), {"__builtins__": {}}, names))


def _leaves(policy: PolicyExpr):
    if isinstance(policy, Leaf):
        yield policy.attribute
    else:
        yield from _leaves(policy.left)
        yield from _leaves(policy.right)
