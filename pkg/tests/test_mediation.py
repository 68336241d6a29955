from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govplane.mediation import (
    DomainRule,
    Effect,
    KGEdge,
    KGNode,
    KnowledgeGraph,
    MediationError,
    RuleSet,
    eval_guard,
    ground,
    mediate,
)


def merchant_kg() -> KnowledgeGraph:
    nodes = [
        KGNode("merchant-417", "merchant", {"category": "groceries"}),
        KGNode("legitimate-business", "classification"),
        KGNode("customer-88", "customer"),
    ]
    edges = [
        KGEdge("merchant-417", "classified-as", "legitimate-business"),
        KGEdge("customer-88", "shops-at", "merchant-417"),
    ]
    return KnowledgeGraph(nodes, edges, "1")


def fraud_rules() -> RuleSet:
    return RuleSet((
        DomainRule(
            "fraud-001-new-merchant-scrutiny",
            {"op": "all", "clauses": [
                {"op": "gt", "subject": "output.amount", "value": 5000},
                {"op": "eq", "subject": "context.merchantAgeDays", "value": 0},
            ]},
            Effect("flag-inconsistency"),
            "transactions over $5,000 to new merchants require additional scrutiny",
        ),
        DomainRule(
            "fraud-002-legitimate-profile-downweight",
            {"op": "all", "clauses": [
                {"op": "eq", "subject": "output.prediction", "value": "high-fraud"},
                {"op": "edge-exists", "from": {"path": "output.merchantID"},
                 "relation": "classified-as", "to": {"node": "legitimate-business"}},
            ]},
            Effect("adjust-confidence", multiplier=0.6),
            "prediction conflicts with the merchant's known business profile",
        ),
        DomainRule(
            "fraud-003-velocity-block",
            {"op": "ge", "subject": "context.transactionsLast10Min", "value": 8},
            Effect("block"),
            "repeated rapid transactions within 10 minutes indicate account compromise",
        ),
    ), "1")


class TestGrounding:
    def test_known_merchant_resolves(self):
        report = ground({"entityRefs": ["merchant-417"]}, merchant_kg())
        assert report[0].resolved and report[0].node_id == "merchant-417"

    def test_unknown_entity_listed_unresolved(self):
        report = ground({"entityRefs": ["merchant-unknown"]}, merchant_kg())
        assert not report[0].resolved and report[0].node_id is None

    def test_empty_references_empty_report(self):
        assert ground({}, merchant_kg()) == ()

    def test_no_partial_resolution(self):
        report = ground({"entityRefs": ["merchant-417", "ghost", "customer-88"]}, merchant_kg())
        assert [e.entity for e in report] == ["merchant-417", "ghost", "customer-88"]
        assert [e.resolved for e in report] == [True, False, True]


class TestMediate:
    def test_identity_with_empty_rules_and_full_grounding(self):
        verdict = mediate({"entityRefs": ["merchant-417"]}, 0.73, {}, merchant_kg(),
                          RuleSet((), "0"))
        assert verdict.hybrid_confidence == 0.73
        assert verdict.symbolic_score == 1.0
        assert verdict.disposition == "pass"

    def test_legitimate_profile_downweights_high_fraud_prediction(self):
        verdict = mediate(
            {"prediction": "high-fraud", "merchantID": "merchant-417", "amount": 120,
             "entityRefs": ["merchant-417"]},
            0.90, {"merchantAgeDays": 900, "transactionsLast10Min": 1},
            merchant_kg(), fraud_rules())
        assert verdict.hybrid_confidence < 0.90
        assert verdict.hybrid_confidence == pytest.approx(0.90 * 0.6)
        assert verdict.disposition == "flagged"
        assert [f["ruleID"] for f in verdict.fired_rules] == [
            "fraud-002-legitimate-profile-downweight"]

    def test_large_transaction_to_new_merchant_flags(self):
        verdict = mediate(
            {"prediction": "low-fraud", "merchantID": "merchant-417", "amount": 6000,
             "entityRefs": []},
            0.40, {"merchantAgeDays": 0, "transactionsLast10Min": 1},
            merchant_kg(), fraud_rules())
        fired = [f["ruleID"] for f in verdict.fired_rules]
        assert fired == ["fraud-001-new-merchant-scrutiny"]
        assert verdict.disposition == "flagged"
        assert verdict.hybrid_confidence == 0.40  # flags do not adjust confidence

    def test_block_rule_dominates_even_at_high_confidence(self):
        verdict = mediate(
            {"prediction": "high-fraud", "merchantID": "merchant-417", "amount": 100,
             "entityRefs": []},
            0.99, {"merchantAgeDays": 900, "transactionsLast10Min": 12},
            merchant_kg(), fraud_rules())
        assert verdict.disposition == "blocked"

    def test_unresolved_entities_penalize_confidence(self):
        verdict = mediate({"entityRefs": ["ghost-1", "ghost-2"]}, 1.0, {}, merchant_kg(),
                          RuleSet((), "0"))
        assert verdict.symbolic_score == pytest.approx(0.8 * 0.8)
        assert verdict.hybrid_confidence == pytest.approx(0.64)
        assert verdict.disposition == "flagged"

    def test_missing_output_yields_flagged_not_error(self):
        verdict = mediate(None, None, None, merchant_kg(), fraud_rules())
        assert verdict.disposition == "flagged"
        assert verdict.hybrid_confidence == 0.0

    def test_rules_fire_in_rule_id_order(self):
        verdict = mediate(
            {"prediction": "high-fraud", "merchantID": "merchant-417", "amount": 9000,
             "entityRefs": []},
            0.9, {"merchantAgeDays": 0, "transactionsLast10Min": 12},
            merchant_kg(), fraud_rules())
        assert [f["ruleID"] for f in verdict.fired_rules] == [
            "fraud-001-new-merchant-scrutiny",
            "fraud-002-legitimate-profile-downweight",
            "fraud-003-velocity-block",
        ]


class TestGuardLanguage:
    NAMESPACE = {"output": {"x": 5, "tag": "a"}, "context": {"y": [1, 2]}}

    @pytest.mark.parametrize("guard,expected", [
        ({"op": "gt", "subject": "output.x", "value": 4}, True),
        ({"op": "le", "subject": "output.x", "value": 4}, False),
        ({"op": "eq", "subject": "output.tag", "value": "a"}, True),
        ({"op": "in", "subject": "output.tag", "values": ["a", "b"]}, True),
        ({"op": "not-in", "subject": "output.tag", "values": ["a"]}, False),
        ({"op": "present", "subject": "output.x"}, True),
        ({"op": "absent", "subject": "output.missing"}, True),
        ({"op": "gt", "subject": "output.missing", "value": 1}, False),
        ({"op": "gt", "subject": "output.tag", "value": 1}, False),  # type mismatch
        ({"op": "not", "clause": {"op": "eq", "subject": "output.x", "value": 5}}, False),
        ({"op": "any", "clauses": [{"op": "eq", "subject": "output.x", "value": 0},
                                   {"op": "eq", "subject": "output.x", "value": 5}]}, True),
    ])
    def test_guard_ops(self, guard, expected):
        assert eval_guard(guard, self.NAMESPACE, merchant_kg()) is expected

    def test_edge_queries(self):
        ns = {"output": {"m": "merchant-417"}, "context": {}}
        assert eval_guard({"op": "edge-exists", "from": {"path": "output.m"},
                           "relation": "classified-as",
                           "to": {"node": "legitimate-business"}}, ns, merchant_kg())
        assert eval_guard({"op": "edge-absent", "from": {"node": "customer-88"},
                           "relation": "classified-as",
                           "to": {"node": "legitimate-business"}}, ns, merchant_kg())

    def test_unknown_op_raises(self):
        with pytest.raises(MediationError):
            eval_guard({"op": "xor"}, self.NAMESPACE, merchant_kg())


class TestKnowledgeGraph:
    def test_edge_referencing_missing_node_rejected(self):
        with pytest.raises(MediationError):
            KnowledgeGraph([KGNode("a")], [KGEdge("a", "r", "b")])

    def test_json_round_trip(self):
        kg = merchant_kg()
        clone = KnowledgeGraph.from_json(kg.to_json())
        assert clone.edge_exists("merchant-417", "classified-as", "legitimate-business")
        assert clone.version == kg.version

    def test_edge_list_loading(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("a\trel\tb\nb\trel\tc\n", encoding="utf-8")
        kg = KnowledgeGraph.load_edge_list(path, version="7")
        assert kg.edge_exists("a", "rel", "b") and kg.has_node("c")
        assert kg.version == "7"


# Generator used by both hypothesis and the large seeded sweep in acceptance.
def random_case(rng) -> tuple[dict, float, dict, KnowledgeGraph, RuleSet]:
    raw = rng.random()
    n_entities = rng.randint(0, 4)
    known = [f"node-{i}" for i in range(3)]
    entities = [rng.choice(known + [f"ghost-{i}" for i in range(3)])
                for _ in range(n_entities)]
    output = {"entityRefs": entities, "score": rng.random(), "tag": rng.choice("abc")}
    kg = KnowledgeGraph([KGNode(n) for n in known], [], "1")
    rules = []
    for i in range(rng.randint(0, 6)):
        kind = rng.choice(["block", "flag-inconsistency", "adjust-confidence"])
        effect = Effect(kind, multiplier=rng.uniform(0.05, 1.0)) \
            if kind == "adjust-confidence" else Effect(kind)
        guard = rng.choice([
            {"op": "gt", "subject": "output.score", "value": rng.random()},
            {"op": "in", "subject": "output.tag", "values": ["a", "b"]},
            {"op": "absent", "subject": "output.nothing"},
        ])
        rules.append(DomainRule(f"r-{i:02d}", guard, effect))
    return output, raw, {}, kg, RuleSet(tuple(rules), "1")


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_hybrid_confidence_always_in_unit_interval(seed):
    import random as _random
    output, raw, ctx, kg, rules = random_case(_random.Random(seed))
    verdict = mediate(output, raw, ctx, kg, rules)
    assert 0.0 <= verdict.hybrid_confidence <= 1.0
    assert 0.0 <= verdict.symbolic_score <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9),
       st.floats(min_value=0.05, max_value=1.0))
def test_one_more_fired_down_rule_never_increases_confidence(seed, multiplier):
    import random as _random
    output, raw, ctx, kg, rules = random_case(_random.Random(seed))
    before = mediate(output, raw, ctx, kg, rules)
    always_fires = DomainRule("zz-extra", {"op": "absent", "subject": "output.__nope__"},
                              Effect("adjust-confidence", multiplier=multiplier))
    after = mediate(output, raw, ctx, kg, RuleSet(rules.rules + (always_fires,), "1"))
    assert after.hybrid_confidence <= before.hybrid_confidence


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_block_effect_always_dominates(seed):
    import random as _random
    output, raw, ctx, kg, rules = random_case(_random.Random(seed))
    blocker = DomainRule("zz-block", {"op": "absent", "subject": "output.__nope__"},
                         Effect("block"))
    verdict = mediate(output, raw, ctx, kg, RuleSet(rules.rules + (blocker,), "1"))
    assert verdict.disposition == "blocked"


def test_effect_validation():
    with pytest.raises(MediationError):
        Effect("adjust-confidence", multiplier=0.0)
    with pytest.raises(MediationError):
        Effect("adjust-confidence", multiplier=1.2)
    with pytest.raises(MediationError):
        Effect("adjust-confidence", direction="up")
    with pytest.raises(MediationError):
        Effect("explode")
