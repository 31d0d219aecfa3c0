import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from changeflow import evaluation
from changeflow.errors import InvalidArgumentError, ShapeError
from oracles import count_components as oracle_count_components
from oracles import count_holes as oracle_count_holes
from oracles import pairwise_auroc as oracle_auroc


# ---------------------------------------------------------------------------
# precision / recall / F1
# ---------------------------------------------------------------------------

def test_perfect_prediction_scores_one():
    gt = np.zeros((8, 8), dtype=np.uint8)
    gt[2:5, 2:5] = 1
    report = evaluation.binary_prf([gt.copy()], [gt])
    assert report.precision == report.recall == report.f1 == 1.0
    assert report.mae == 0.0


def test_all_changed_prediction_closed_form():
    gt = np.zeros((10, 10), dtype=np.uint8)
    gt[:2] = 1  # changed fraction p = 0.2
    pred = np.ones_like(gt)
    report = evaluation.binary_prf([pred], [gt])
    p = 0.2
    assert report.precision == pytest.approx(p)
    assert report.recall == 1.0
    assert report.f1 == pytest.approx(2 * p / (1 + p))


def test_swapping_pred_and_gt_swaps_precision_and_recall():
    rng = np.random.default_rng(0)
    pred = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    gt = (rng.random((16, 16)) < 0.2).astype(np.uint8)
    fwd = evaluation.binary_prf([pred], [gt])
    rev = evaluation.binary_prf([gt], [pred])
    assert fwd.precision == pytest.approx(rev.recall)
    assert fwd.recall == pytest.approx(rev.precision)
    assert fwd.f1 == pytest.approx(rev.f1)


def test_zero_denominators_yield_zero():
    empty = np.zeros((4, 4), dtype=np.uint8)
    full = np.ones((4, 4), dtype=np.uint8)
    assert evaluation.binary_prf([empty], [empty]).f1 == 0.0
    assert evaluation.binary_prf([empty], [full]).precision == 0.0
    assert evaluation.binary_prf([full], [empty]).recall == 0.0


def test_mae_zero_iff_soft_equals_gt():
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[1, 1] = 1
    exact = evaluation.binary_prf([gt], [gt], soft_preds=[gt.astype(np.float64)])
    assert exact.mae == 0.0
    off = evaluation.binary_prf([gt], [gt], soft_preds=[gt.astype(np.float64) * 0.9])
    assert off.mae > 0.0


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        evaluation.binary_prf([np.zeros((4, 4))], [np.zeros((5, 4))])
    with pytest.raises(ShapeError):
        evaluation.binary_prf([], [])


# ---------------------------------------------------------------------------
# coherence: components and holes
# ---------------------------------------------------------------------------

def test_two_disjoint_squares_counted():
    mask = np.zeros((20, 20), dtype=np.uint8)
    mask[2:7, 2:7] = 1
    mask[10:15, 10:15] = 1
    assert evaluation.count_components(mask, min_area=10) == 2


def test_small_component_discarded_by_area_filter():
    mask = np.zeros((10, 10), dtype=np.uint8)
    mask[2:5, 2:5] = 1  # area 9 <= 10
    assert evaluation.count_components(mask, min_area=10) == 0


def test_area_filter_boundary_exactly_ten_discarded_eleven_kept():
    ten = np.zeros((10, 10), dtype=np.uint8)
    ten[0:2, 0:5] = 1  # area 10: NOT exceeding the threshold
    eleven = np.zeros((10, 10), dtype=np.uint8)
    eleven[0:2, 0:5] = 1
    eleven[2, 0] = 1  # area 11
    assert evaluation.count_components(ten, min_area=10) == 0
    assert evaluation.count_components(eleven, min_area=10) == 1


def test_annulus_has_one_hole():
    mask = np.ones((20, 20), dtype=np.uint8)
    mask[6:14, 6:14] = 0  # 8x8 enclosed background, area 64
    assert evaluation.count_holes(mask, min_area=10) == 1


def test_border_touching_background_is_not_a_hole():
    mask = np.ones((20, 20), dtype=np.uint8)
    mask[0:14, 6:14] = 0  # reaches the top border
    assert evaluation.count_holes(mask, min_area=10) == 0


def test_all_changed_mask_has_no_holes():
    assert evaluation.count_holes(np.ones((16, 16), dtype=np.uint8), min_area=10) == 0


def test_connectivity_switch_changes_diagonal_topology():
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[1, 1] = mask[2, 2] = 1  # diagonal pair
    assert evaluation.count_components(mask, min_area=0, connectivity=4) == 2
    assert evaluation.count_components(mask, min_area=0, connectivity=8) == 1


@pytest.mark.parametrize("connectivity", [4, 8])
def test_component_counts_match_flood_fill_oracle(connectivity):
    rng = np.random.default_rng(42 + connectivity)
    for _ in range(200):
        mask = (rng.random((32, 32)) < rng.uniform(0.2, 0.7)).astype(np.uint8)
        assert evaluation.count_components(mask, 10, connectivity) == oracle_count_components(
            mask, 10, connectivity
        )


@pytest.mark.parametrize("connectivity", [4, 8])
def test_hole_counts_match_flood_fill_oracle(connectivity):
    rng = np.random.default_rng(99 + connectivity)
    for _ in range(200):
        mask = (rng.random((32, 32)) < rng.uniform(0.3, 0.8)).astype(np.uint8)
        assert evaluation.count_holes(mask, 10, connectivity) == oracle_count_holes(
            mask, 10, connectivity
        )


def test_coherence_report_zero_for_equal_masks():
    rng = np.random.default_rng(1)
    masks = [(rng.random((16, 16)) < 0.4).astype(np.uint8) for _ in range(5)]
    report = evaluation.coherence_report(masks, [m.copy() for m in masks])
    assert report.cc_deviation == 0.0
    assert report.hole_deviation == 0.0


def test_coherence_report_counts_spurious_blob():
    gt = np.zeros((32, 32), dtype=np.uint8)
    gt[4:12, 4:12] = 1
    pred = gt.copy()
    pred[20:24, 20:24] = 1  # extra 4x4 blob, area 16 > 10
    report = evaluation.coherence_report([pred], [gt])
    assert report.cc_deviation == 1.0


# ---------------------------------------------------------------------------
# error-AUROC
# ---------------------------------------------------------------------------

def test_auroc_perfect_separation():
    gt = np.zeros((4, 4), dtype=np.uint8)
    pred = gt.copy()
    pred[0, 0] = 1  # one error
    conf = np.zeros((4, 4))  # change-confidence 0 -> decision confidence 1 everywhere
    conf[0, 0] = 0.5        # the error pixel: decision confidence 0.5 (lowest)
    assert evaluation.error_auroc([conf], [pred], [gt]) == pytest.approx(1.0)


def test_auroc_constant_confidence_is_half():
    gt = np.zeros((4, 4), dtype=np.uint8)
    pred = gt.copy()
    pred[0, :2] = 1
    conf = np.full((4, 4), 0.25)
    assert evaluation.error_auroc([conf], [pred], [gt]) == pytest.approx(0.5)


def test_auroc_not_computable_without_both_classes():
    gt = np.zeros((4, 4), dtype=np.uint8)
    conf = np.full((4, 4), 0.8)
    assert evaluation.error_auroc([conf], [gt.copy()], [gt]) is None          # no errors
    assert evaluation.error_auroc([conf], [1 - gt], [gt]) is None             # all errors


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auroc_matches_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    gt = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    pred = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    conf = np.round(rng.random((6, 6)), 1)  # coarse values force ties
    result = evaluation.error_auroc([conf], [pred], [gt])
    errors = pred.astype(bool) != gt.astype(bool)
    if errors.all() or not errors.any():
        assert result is None
        return
    score = (1.0 - np.maximum(conf, 1 - conf)).ravel()
    assert result == pytest.approx(oracle_auroc(score, errors.ravel()))


def test_auroc_invariant_under_monotone_transform_of_score():
    rng = np.random.default_rng(7)
    gt = (rng.random((8, 8)) < 0.4).astype(np.uint8)
    pred = (rng.random((8, 8)) < 0.4).astype(np.uint8)
    conf = rng.random((8, 8))
    base = evaluation.error_auroc([conf], [pred], [gt])
    # squaring the error score s = 1 - max(c, 1-c) is strictly monotone on [0, 0.5];
    # push it back through the confidence parametrization branch by branch
    transformed_conf = np.where(conf >= 0.5, 1.0 - (1.0 - conf) ** 2, conf**2)
    transformed = evaluation.error_auroc([transformed_conf], [pred], [gt])
    assert transformed == pytest.approx(base)


# ---------------------------------------------------------------------------
# threshold sweep
# ---------------------------------------------------------------------------

def test_sweep_recall_weakly_decreasing():
    rng = np.random.default_rng(5)
    stacks = [(rng.random((5, 16, 16)) < 0.4).astype(np.float64) for _ in range(4)]
    gts = [(rng.random((16, 16)) < 0.3).astype(np.uint8) for _ in range(4)]
    rows = evaluation.threshold_sweep(stacks, gts, [0.1, 0.3, 0.5, 0.7, 0.9])
    recalls = [r["recall"] for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(recalls, recalls[1:]))


def test_sweep_degenerate_identical_stack_gives_identical_rows():
    member = (np.arange(64).reshape(8, 8) % 3 == 0).astype(np.float64)
    stack = np.stack([member] * 5)
    gt = member.astype(np.uint8)
    rows = evaluation.threshold_sweep([stack], [gt], [0.1, 0.3, 0.5, 0.7, 0.9])
    first = rows[0]
    for row in rows[1:]:
        assert row["precision"] == first["precision"]
        assert row["recall"] == first["recall"]
        assert row["f1"] == first["f1"]


def test_sweep_rejects_bad_thresholds():
    with pytest.raises(InvalidArgumentError):
        evaluation.threshold_sweep([np.zeros((2, 4, 4))], [np.zeros((4, 4))], [0.0, 0.5])
