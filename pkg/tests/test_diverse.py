import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactscan.diverse import (
    EvalTable,
    MatchResult,
    PredictionSet,
    RoutingParams,
    diversenet_assign,
    evaluate_table,
    match_to_closest,
    prediction_error,
    smcl_weights,
)


class TestPredictionError:
    def test_perfect(self):
        y = np.array([0, 1, 1, 0])
        p = np.array([0.1, 0.9, 0.8, 0.2])
        assert prediction_error(y, p) == 0.0

    def test_inverted(self):
        y = np.array([0, 1, 1, 0])
        assert prediction_error(y, 1.0 - y.astype(float)) == 100.0

    def test_matches_brute_force_count(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 1000)
        p = rng.random(1000)
        wrong = sum(1 for yy, pp in zip(y, p) if (pp > 0.5) != bool(yy))
        assert prediction_error(y, p) == pytest.approx(100.0 * wrong / 1000)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            prediction_error(np.zeros(3), np.zeros(4))


class TestMatchToClosest:
    def test_exact_member_wins(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 50).astype(float)
        maps = rng.random((5, 50)) * 0.4  # all near-empty but nonzero? keep low
        maps[3] = y * 0.9 + 0.05
        preds = PredictionSet(maps=np.clip(maps, 0, 1))
        result = match_to_closest(y, preds)
        assert result.index == 3
        assert result.error == 0.0

    def test_all_empty_gives_sentinel(self):
        y = np.ones(20)
        preds = PredictionSet(maps=np.full((4, 20), 0.1))
        result = match_to_closest(y, preds)
        assert result.no_contact
        assert result.index is None
        assert math.isnan(result.error)

    def test_agrees_with_exhaustive_scan(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            y = rng.integers(0, 2, 40)
            preds = PredictionSet(rng.random((10, 40)))
            result = match_to_closest(y, preds)
            errors = [prediction_error(y, m) if np.any(m > 0.5) else math.inf
                      for m in preds.maps]
            assert result.index == int(np.argmin(errors))
            assert result.error == min(errors)

    def test_matched_error_lower_bound_property(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 2, 30)
        preds = PredictionSet(rng.random((6, 30)))
        result = match_to_closest(y, preds)
        for i in range(preds.k):
            if np.any(preds.maps[i] > 0.5):
                assert result.error <= prediction_error(y, preds.maps[i])

    def test_duplicate_best_does_not_change_error(self):
        rng = np.random.default_rng(4)
        y = rng.integers(0, 2, 30)
        preds = PredictionSet(rng.random((5, 30)))
        base = match_to_closest(y, preds)
        stacked = PredictionSet(np.vstack([preds.maps,
                                           preds.maps[base.index][None]]))
        assert match_to_closest(y, stacked).error == base.error


class TestSmclWeights:
    def test_no_drops_canonical_split(self):
        params = RoutingParams(drop_prob=0.0)
        errors = np.arange(10, dtype=float) + 1.0
        w = smcl_weights(errors, params)
        assert w[0] == pytest.approx(0.95)
        assert np.allclose(w[1:], 0.05 / 9.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_k1_full_weight(self):
        assert smcl_weights([3.0], RoutingParams()) == pytest.approx([1.0])

    def test_tie_breaks_to_lower_index(self):
        params = RoutingParams(drop_prob=0.0)
        w = smcl_weights([2.0, 2.0, 5.0], params)
        assert w[0] == pytest.approx(0.95)

    def test_always_sums_to_one_with_drops(self):
        rng = np.random.default_rng(5)
        params = RoutingParams(drop_prob=0.5, seed=1)
        for trial in range(200):
            errors = rng.random(6)
            w = smcl_weights(errors, params, rng=rng)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)
            winner = int(np.argmax(w))
            assert np.all(w[winner] >= w)  # winner weight dominates
            live = w > 0
            assert errors[winner] == errors[live].min()

    def test_all_dropped_falls_back_to_no_drop(self):
        params = RoutingParams(drop_prob=0.999, seed=3)
        rng = np.random.default_rng(0)
        w = smcl_weights([1.0, 2.0], params, rng=rng)
        assert w.sum() == pytest.approx(1.0)
        assert w[0] > 0.0  # fallback kept everyone

    def test_empty_errors_rejected(self):
        with pytest.raises(ValueError):
            smcl_weights([], RoutingParams())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 12), st.integers(0, 2 ** 31 - 1))
    def test_sum_one_property(self, k, seed):
        rng = np.random.default_rng(seed)
        w = smcl_weights(rng.random(k), RoutingParams(seed=seed), rng=rng)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


class TestDiversenetAssign:
    def test_exact_control_wins(self):
        rng = np.random.default_rng(6)
        y = rng.integers(0, 2, 25).astype(float)
        maps = rng.random((5, 25))
        maps[3] = y
        assert diversenet_assign(y, PredictionSet(np.clip(maps, 0, 1))) == 3

    def test_identical_predictions_pick_zero(self):
        y = np.ones(10)
        preds = PredictionSet(np.full((4, 10), 0.7))
        assert diversenet_assign(y, preds) == 0

    def test_matches_exhaustive(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            y = rng.integers(0, 2, 20)
            preds = PredictionSet(rng.random((8, 20)))
            errors = [prediction_error(y, m) for m in preds.maps]
            assert diversenet_assign(y, preds) == int(np.argmin(errors))


class TestEvaluateTable:
    def test_perfect_predictor_zero_table(self):
        rng = np.random.default_rng(8)
        gt_sets = {}
        predictions = {"model": {}}
        for obj in ("pan", "wine_glass", "mug"):
            labels = [rng.integers(0, 2, 30) for _ in range(3)]
            # ensure at least one positive element per gt
            for lab in labels:
                lab[0] = 1
            gt_sets[obj] = labels
            maps = np.stack([lab.astype(float) for lab in labels])
            predictions["model"][obj] = PredictionSet(maps)
        table = evaluate_table(gt_sets, predictions)
        assert np.allclose(table.cells, 0.0)

    def test_layout_matches_published_table(self):
        rng = np.random.default_rng(9)
        objects = ["pan", "wine_glass", "mug"]
        models = ["smcl_k1_voxnet", "smcl_k10_voxnet", "diversenet_k10_voxnet"]
        gt_sets = {o: [rng.integers(0, 2, 20) for _ in range(2)]
                   for o in objects}
        predictions = {m: {o: PredictionSet(rng.random((10, 20)))
                           for o in objects} for m in models}
        table = evaluate_table(gt_sets, predictions)
        text = table.format()
        lines = text.splitlines()
        assert lines[0].split("\t") == ["object"] + models
        assert [ln.split("\t")[0] for ln in lines[1:]] == objects + ["average"]
        for ln in lines[1:]:
            for cell in ln.split("\t")[1:]:
                assert cell == "-" or float(cell) >= 0.0

    def test_no_contact_renders_dash(self):
        gt_sets = {"mug": [np.ones(10, dtype=int)]}
        predictions = {"weak": {"mug": PredictionSet(np.full((5, 10), 0.2))}}
        table = evaluate_table(gt_sets, predictions)
        assert "-" in table.format()
        assert math.isnan(table.cells[0, 0])
        assert math.isnan(table.cells[1, 0])  # average row inherits the dash

    def test_average_is_unweighted_mean(self):
        rng = np.random.default_rng(10)
        gt_sets = {"a": [rng.integers(0, 2, 10) for _ in range(5)],
                   "b": [rng.integers(0, 2, 10)]}
        predictions = {"m": {o: PredictionSet(rng.random((3, 10)))
                             for o in gt_sets}}
        table = evaluate_table(gt_sets, predictions)
        assert table.cells[2, 0] == pytest.approx(
            (table.cells[0, 0] + table.cells[1, 0]) / 2.0)

    def test_missing_object_rejected(self):
        gt_sets = {"a": [np.ones(5, dtype=int)]}
        with pytest.raises(KeyError):
            evaluate_table(gt_sets, {"m": {}})


class TestDiversityBenefit:
    def test_k10_beats_k1_on_bimodal_family(self):
        # bimodal ground truth family: half the maps hot on the left,
        # half hot on the right; a single prediction cannot cover both
        rng = np.random.default_rng(11)
        n = 40
        left = np.zeros(n)
        left[: n // 2] = 1.0
        right = np.zeros(n)
        right[n // 2:] = 1.0
        gts = [left if i % 2 == 0 else right for i in range(10)]

        single = PredictionSet((0.5 * (left + right) + 0.1)[None, :].clip(0, 1))
        diverse = PredictionSet(np.stack(
            [np.clip(left * 0.9 + 0.05, 0, 1),
             np.clip(right * 0.9 + 0.05, 0, 1)]
            + [rng.random(n) for _ in range(8)]))
        err_single = np.mean([match_to_closest(g, single).error for g in gts])
        err_diverse = np.mean([match_to_closest(g, diverse).error for g in gts])
        assert err_diverse < err_single
