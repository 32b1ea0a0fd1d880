import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicegate.errors import PolicySyntaxError, SliceGateError, UnknownAttributeError
from slicegate.policy import (
    And,
    AttributeDict,
    AttributeId,
    Leaf,
    Or,
    eval_policy,
    lower_to_tree,
    parse_policy,
    policy_attributes,
    policy_to_text,
    satisfies,
    tree_leaves,
    ThresholdGate,
)

from util import all_subsets, enumerate_policies, oracle_eval


@pytest.fixture()
def dictionary():
    return AttributeDict(
        [
            ("Manufacturer", 1),
            ("Customer", 2),
            ("Electronics", 3),
            ("Mechanics", 4),
            ("Customs", 5),
            ("Supplier", 16),
            ("A", 101),
            ("B", 102),
            ("C", 103),
            ("D", 104),
        ]
    )


class TestParse:
    def test_running_example_policy(self, dictionary):
        p = parse_policy("14548487 and (Manufacturer or Supplier)", dictionary)
        assert p == And(
            Leaf(AttributeId(14548487)),
            Or(Leaf(AttributeId(1, "Manufacturer")), Leaf(AttributeId(16, "Supplier"))),
        )

    def test_single_leaf(self, dictionary):
        assert parse_policy("Manufacturer", dictionary) == Leaf(AttributeId(1, "Manufacturer"))

    def test_and_binds_tighter_than_or(self, dictionary):
        p = parse_policy("A and B or C", dictionary)
        assert p == Or(And(Leaf(AttributeId(101)), Leaf(AttributeId(102))), Leaf(AttributeId(103)))

    def test_left_associative(self, dictionary):
        p = parse_policy("A or B or C", dictionary)
        assert p == Or(Or(Leaf(AttributeId(101)), Leaf(AttributeId(102))), Leaf(AttributeId(103)))

    def test_keywords_case_insensitive(self, dictionary):
        assert parse_policy("A AND B Or C", dictionary) == parse_policy("A and B or C", dictionary)

    def test_names_case_sensitive(self, dictionary):
        with pytest.raises(UnknownAttributeError):
            parse_policy("manufacturer", dictionary)

    def test_numeric_attribute_without_dictionary(self):
        assert parse_policy("42 and 43") == And(Leaf(AttributeId(42)), Leaf(AttributeId(43)))

    def test_syntax_error_reports_position(self, dictionary):
        with pytest.raises(PolicySyntaxError) as excinfo:
            parse_policy("A and (B or ", dictionary)
        assert excinfo.value.position == 12

    def test_unknown_attribute_reports_name(self, dictionary):
        with pytest.raises(UnknownAttributeError) as excinfo:
            parse_policy("A and Bogus", dictionary)
        assert excinfo.value.name == "Bogus"
        assert excinfo.value.position == 6

    def test_negation_rejected(self, dictionary):
        with pytest.raises(PolicySyntaxError, match="negation"):
            parse_policy("not A", dictionary)

    @pytest.mark.parametrize("text", ["", "()", "A B", "and", "A or", "(A", "A)", "A & B", "18446744073709551616"])
    def test_malformed_inputs(self, text, dictionary):
        with pytest.raises(PolicySyntaxError):
            parse_policy(text, dictionary)

    def test_u64_boundary_accepted(self):
        parse_policy(str(2**64 - 1))


class TestEval:
    def test_running_example_electronics_supplier(self, dictionary):
        p = parse_policy(
            "14548487 and (Manufacturer or (Supplier and Electronics))", dictionary
        )
        assert eval_policy(p, {14548487, 16, 3}) is True

    def test_empty_attribute_set(self, dictionary):
        assert eval_policy(parse_policy("A", dictionary), set()) is False

    def test_accepts_attribute_ids_and_ints(self, dictionary):
        p = parse_policy("A and B", dictionary)
        assert eval_policy(p, {AttributeId(101), 102})

    def test_exhaustive_against_truth_table_oracle(self):
        # Every policy tree with <= 7 nodes over a 4-attribute universe,
        # against the independent eval-string oracle, on all 16 subsets.
        attrs = [1, 2, 3, 4]
        policies = enumerate_policies(attrs, 7)
        assert len(policies) == 10788
        for policy in policies:
            for subset in all_subsets(attrs):
                assert eval_policy(policy, subset) == oracle_eval(policy, subset)


# Random policy ASTs for property tests.
_attr_ids = st.integers(min_value=0, max_value=2**64 - 1).map(AttributeId)
_policies = st.recursive(
    _attr_ids.map(Leaf),
    lambda children: st.tuples(children, children).map(lambda lr: And(*lr))
    | st.tuples(children, children).map(lambda lr: Or(*lr)),
    max_leaves=12,
)


class TestPrintRoundtrip:
    @given(_policies)
    @settings(max_examples=300, deadline=None)
    def test_parse_print_roundtrip(self, policy):
        assert parse_policy(policy_to_text(policy)) == policy

    def test_named_attributes_render_by_name(self, dictionary):
        text = "14548487 and (Manufacturer or Supplier)"
        assert policy_to_text(parse_policy(text, dictionary)) == text


class TestMonotonicity:
    @given(_policies, st.data())
    @settings(max_examples=200, deadline=None)
    def test_supersets_preserve_truth(self, policy, data):
        attrs = sorted({a.value for a in policy_attributes(policy)})
        held = set(data.draw(st.lists(st.sampled_from(attrs), unique=True))) if attrs else set()
        extra = set(data.draw(st.lists(st.sampled_from(attrs), unique=True))) if attrs else set()
        if eval_policy(policy, held):
            assert eval_policy(policy, held | extra)


class TestLowering:
    def test_and_lowers_to_2_of_2(self):
        tree = lower_to_tree(And(Leaf(AttributeId(1)), Leaf(AttributeId(2))))
        assert isinstance(tree, ThresholdGate)
        assert tree.threshold == 2 and len(tree.children) == 2

    def test_or_lowers_to_1_of_2(self):
        tree = lower_to_tree(Or(Leaf(AttributeId(1)), Leaf(AttributeId(2))))
        assert tree.threshold == 1 and len(tree.children) == 2

    def test_bom_slice2_policy_tree_matches_eval_on_all_subsets(self, dictionary):
        policy = parse_policy(
            "14548487 and (Manufacturer or (Supplier and Electronics))", dictionary
        )
        tree = lower_to_tree(policy)
        universe = [14548487, 1, 16, 3]
        for subset in all_subsets(universe):
            assert satisfies(tree, subset) == eval_policy(policy, subset)

    def test_exhaustive_small_universe(self):
        attrs = [1, 2, 3]
        for policy in enumerate_policies(attrs, 5):
            tree = lower_to_tree(policy)
            for subset in all_subsets(attrs):
                assert satisfies(tree, subset) == eval_policy(policy, subset)

    @given(_policies)
    @settings(max_examples=150, deadline=None)
    def test_satisfaction_preserved_up_to_universe_10(self, policy):
        attrs = sorted({a.value for a in policy_attributes(policy)})[:10]
        tree = lower_to_tree(policy)
        for subset in all_subsets(attrs):
            assert satisfies(tree, subset) == eval_policy(policy, subset)

    def test_leaf_order_is_depth_first(self, dictionary):
        policy = parse_policy("(A or B) and (C or D)", dictionary)
        leaves = tree_leaves(lower_to_tree(policy))
        assert [l.attribute.value for l in leaves] == [101, 102, 103, 104]

    def test_gate_threshold_validation(self):
        with pytest.raises(SliceGateError):
            ThresholdGate(3, (lower_to_tree(Leaf(AttributeId(1))),))


class TestAttributeDict:
    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "attrs.tsv"
        path.write_text("# roles\nManufacturer\t1\nSupplier\t16\n\n", "utf-8")
        d = AttributeDict.from_file(path)
        assert d.resolve("Supplier") == AttributeId(16, "Supplier")
        assert d.lookup(1).name == "Manufacturer"
        out = tmp_path / "out.tsv"
        d.to_file(out)
        assert AttributeDict.from_file(out).names() == d.names()

    def test_bijection_enforced(self):
        d = AttributeDict([("A", 1)])
        with pytest.raises(SliceGateError):
            d.add("A", 2)
        with pytest.raises(SliceGateError):
            d.add("B", 1)
        d.add("A", 1)  # re-adding the same pair is fine

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("Manufacturer 1\n", "utf-8")
        with pytest.raises(SliceGateError):
            AttributeDict.from_file(path)

    def test_attribute_value_range(self):
        with pytest.raises(ValueError):
            AttributeId(2**64)
        with pytest.raises(SliceGateError):
            AttributeDict([("A", 2**64)])
