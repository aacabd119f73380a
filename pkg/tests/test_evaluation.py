import numpy as np
import pytest

from conftest import make_toy5
from ontoevent.build import remove_redundant
from ontoevent.evaluation import (
    EvalSample,
    EvaluationError,
    cs,
    evaluate,
    jsc,
    ranked_leaves,
    read_predictions,
    topk_accuracy,
    write_predictions,
)


def sample(pred, truth, sid=""):
    return EvalSample(np.asarray(pred, dtype=float), frozenset(truth), sid)


class TestTopK:
    def test_peaked_correct(self, toy5):
        s = sample([0.9, 0.05, 0.05], {"L1"})
        assert topk_accuracy(toy5, [s], 1) == 1.0

    def test_third_ranked_needs_top3(self, toy5):
        s = sample([0.5, 0.4, 0.3], {"L3"})
        assert topk_accuracy(toy5, [s], 1) == 0.0
        assert topk_accuracy(toy5, [s], 3) == 1.0

    def test_multi_hot_any_overlap(self, toy5):
        # truth {L1, L3}, top-1 is L3: correct under the any-overlap rule
        s = sample([0.1, 0.2, 0.9], {"L1", "L3"})
        assert topk_accuracy(toy5, [s], 1) == 1.0

    def test_ties_break_by_node_order(self, toy5):
        assert ranked_leaves(toy5, np.array([0.5, 0.5, 0.5])) == ["L1", "L2", "L3"]

    def test_k_too_large(self, toy5):
        with pytest.raises(EvaluationError):
            topk_accuracy(toy5, [sample([1, 0, 0], {"L1"})], 4)


class TestSubgraphSimilarity:
    def test_identical_subgraphs(self, toy5):
        assert jsc(toy5, "L1", {"L1"}) == 1.0
        assert cs(toy5, "L1", {"L1"}) == 1.0

    def test_sibling_leaves(self, toy5):
        # S(L2)={L2,B1,R}, S(L1)={L1,B1,R}: overlap {B1,R}
        assert jsc(toy5, "L2", {"L1"}) == 0.5
        assert cs(toy5, "L2", {"L1"}) == pytest.approx(2 / 3, abs=1e-15)

    def test_cross_branch_leaves(self, toy5):
        # S(L3)={L3,B2,R} vs S(L1)={L1,B1,R}: overlap {R}
        assert jsc(toy5, "L3", {"L1"}) == pytest.approx(0.2, abs=1e-15)
        assert cs(toy5, "L3", {"L1"}) == pytest.approx(1 / 3, abs=1e-15)

    def test_both_reach_one_only_at_identity(self, toy5):
        for predicted in toy5.leaf_order:
            for truth in toy5.leaf_order:
                j = jsc(toy5, predicted, {truth})
                c = cs(toy5, predicted, {truth})
                if predicted == truth:
                    assert j == c == 1.0
                else:
                    assert j < 1.0 and c < 1.0


class TestEvaluate:
    def test_all_correct(self, toy5):
        samples = [
            sample([1, 0, 0], {"L1"}),
            sample([0, 1, 0], {"L2"}),
            sample([0, 0, 1], {"L3"}),
        ]
        report = evaluate(samples, toy5)
        assert report.top1 == report.top3 == 1.0
        assert report.jsc == report.cs == 1.0

    def test_handcrafted_four_samples(self, toy5):
        samples = [
            sample([0.9, 0.05, 0.05], {"L1"}, "a"),  # correct
            sample([0.8, 0.1, 0.1], {"L2"}, "b"),    # predicts L1, truth L2
            sample([0.1, 0.1, 0.8], {"L3"}, "c"),    # correct
            sample([0.7, 0.2, 0.1], {"L3"}, "d"),    # predicts L1, truth L3
        ]
        report = evaluate(samples, toy5)
        assert report.top1 == pytest.approx(2 / 4)
        # by hand: 1.0 + jsc(L1,L2)=0.5 + 1.0 + jsc(L1,L3)=0.2 over 4
        assert report.jsc == pytest.approx((1.0 + 0.5 + 1.0 + 0.2) / 4)
        assert report.cs == pytest.approx((1.0 + 2 / 3 + 1.0 + 1 / 3) / 4)
        assert report.per_leaf_top1["L1"] == (1.0, 1)
        assert report.per_leaf_top1["L2"] == (0.0, 1)
        assert report.per_leaf_top1["L3"] == (0.5, 2)

    def test_branch_rollup_unweighted_mean(self, toy5):
        samples = [
            sample([0.9, 0.05, 0.05], {"L1"}),
            sample([0.9, 0.05, 0.05], {"L2"}),
            sample([0.05, 0.9, 0.05], {"L2"}),
        ]
        report = evaluate(samples, toy5)
        # L1 accuracy 1.0, L2 accuracy 0.5 -> B1 rollup (1.0 + 0.5) / 2
        assert report.branch_top1["B1"] == pytest.approx(0.75)

    def test_per_leaf_support_average_matches_aggregate(self, toy5):
        rng = np.random.default_rng(4)
        samples = [
            sample(rng.random(3), {rng.choice(["L1", "L2", "L3"])}) for _ in range(50)
        ]
        report = evaluate(samples, toy5)
        weighted = sum(acc * n for acc, n in report.per_leaf_top1.values())
        total = sum(n for _, n in report.per_leaf_top1.values())
        assert report.top1 == pytest.approx(weighted / total)

    def test_topk_monotone_random(self, toy5):
        rng = np.random.default_rng(8)
        samples = [
            sample(rng.random(3), {rng.choice(["L1", "L2", "L3"])}) for _ in range(200)
        ]
        t1 = topk_accuracy(toy5, samples, 1)
        t3 = topk_accuracy(toy5, samples, 3)
        assert t1 <= t3 == 1.0

    def test_reduced_model_evaluates_in_full_dimension(self, toy5):
        reduced, _ = remove_redundant(toy5)  # B2 spliced out
        assert reduced.leaf_order == toy5.leaf_order
        pred = [0.2, 0.1, 0.9]
        full_sample = sample(pred, {"L1"})
        report_full = evaluate([full_sample], toy5, ont_model=toy5)
        report_reduced = evaluate([full_sample], toy5, ont_model=reduced)
        # same predicted leaf -> identical similarity values
        assert report_reduced.jsc == report_full.jsc
        assert report_reduced.cs == report_full.cs

    def test_empty_samples_rejected(self, toy5):
        with pytest.raises(EvaluationError):
            evaluate([], toy5)


def test_prediction_file_round_trip(tmp_path, toy5):
    rows = np.array([[0.1, 0.2, 0.7], [0.5, 0.25, 0.25]])
    path = tmp_path / "pred.txt"
    write_predictions(path, ["a", "b"], rows, toy5.content_hash())
    ids, again, ont_hash = read_predictions(path)
    assert ids == ["a", "b"]
    np.testing.assert_array_equal(again, rows)
    assert ont_hash == toy5.content_hash()


def test_report_formats(toy5):
    samples = [sample([0.9, 0.05, 0.05], {"L1"})]
    report = evaluate(samples, toy5)
    text = report.to_text()
    assert "top-1" in text and "L1" in text
    csv_text = report.to_csv()
    assert "aggregate,top1,1.000000" in csv_text
