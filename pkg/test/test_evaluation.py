import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ensemble_fusion.errors import ConfigError, NoGroundTruthError
from ensemble_fusion.evaluation import (
    COCO_IOU_THRESHOLDS,
    PRPoint,
    ap_at_iou,
    ar_at_iou,
    evaluate,
    precision_recall_curve,
)
from ensemble_fusion.geom import Box, iou
from ensemble_fusion.model import Detection, GroundTruth, GroundTruthBox, ImageInfo
from ensemble_fusion.strategies import boxes, detection_lists, ground_truths

BIG = Box(0, 0, 100, 100)


def truth(*boxes, image_id=0, category=1):
    return GroundTruth(
        boxes={image_id: tuple(GroundTruthBox(box, category, idx) for idx, box in enumerate(boxes))},
        images={image_id: ImageInfo(200, 200)},
        categories={category: "object"},
    )


def detections(*pairs, image_id=0, category=1):
    return {image_id: [Detection(box, category, score, image_id=image_id) for box, score in pairs]}


def reference_ap(dets, ground_truth, threshold):
    """Brute-force PR curve per category, 101-point interpolation, mean over ground-truth categories."""
    values = []
    for category in ground_truth.category_ids():
        ranked = []
        n_truth = 0
        for image_id in sorted(set(dets) | set(ground_truth.boxes)):
            targets = [item.box for item in ground_truth.for_image(image_id) if item.category == category]
            n_truth += len(targets)
            candidates = sorted(
                (item for item in dets.get(image_id, ()) if item.category == category), key=lambda item: -item.score
            )
            taken = [False] * len(targets)
            for item in candidates:
                best, best_iou = None, -1.0
                for idx, target in enumerate(targets):
                    if not taken[idx] and iou(item.box, target) > best_iou:
                        best, best_iou = idx, iou(item.box, target)
                hit = best is not None and best_iou >= threshold
                if hit:
                    taken[best] = True
                ranked.append((item.score, hit))
        ranked.sort(key=lambda pair: -pair[0])
        points = []
        hits = 0
        for rank, (_, hit) in enumerate(ranked, start=1):
            hits += hit
            points.append((hits / rank, hits / n_truth))
        sampled = []
        for step in range(101):
            level = step / 100
            sampled.append(max((p for p, r in points if r >= level), default=0.0))
        values.append(sum(sampled) / 101)
    return sum(values) / len(values)


@settings(max_examples=500)
@given(data=st.data(), threshold=st.sampled_from((0.5, 0.75, 0.95)))
def test_ap_matches_reference(data, threshold):
    ground_truth = data.draw(ground_truths(image_ids=(0, 1), categories=(1, 2), max_boxes=4, max_coordinate=20.0))
    assume(len(ground_truth) > 0)
    dets = {
        image_id: data.draw(
            detection_lists(max_size=6, image_id=image_id, categories=(1, 2, 3), max_coordinate=20.0)
        )
        for image_id in (0, 1)
    }
    assert ap_at_iou(dets, ground_truth, threshold) == pytest.approx(
        reference_ap(dets, ground_truth, threshold), abs=1e-9
    )


@pytest.mark.parametrize("threshold", (0.5, 0.95))
def test_perfect_detector(threshold):
    ground_truth = truth(Box(0, 0, 10, 10), Box(50, 50, 80, 90))
    dets = detections((Box(0, 0, 10, 10), 1.0), (Box(50, 50, 80, 90), 1.0))
    assert ap_at_iou(dets, ground_truth, threshold) == 1.0
    assert ar_at_iou(dets, ground_truth, threshold) == 1.0


def test_no_detections():
    ground_truth = truth(Box(0, 0, 10, 10))
    assert ap_at_iou({}, ground_truth, 0.5) == 0.0
    assert ar_at_iou({}, ground_truth, 0.5) == 0.0


def test_false_positive_ranked_first():
    # When a false positive (IoU 0.2) outranks the true positive (IoU 0.9)
    ground_truth = truth(Box(0, 0, 10, 10))
    dets = detections((Box(0, 0, 10, 2), 0.9), (Box(0, 0, 10, 9), 0.8))
    # Then the precision envelope is 0.5 at every recall level, including recall 0
    assert ap_at_iou(dets, ground_truth, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert precision_recall_curve(dets, ground_truth, 1, 0.5) == [PRPoint(0.9, 0.0, 0.0), PRPoint(0.8, 0.5, 1.0)]


def test_partial_recall():
    ground_truth = truth(Box(0, 0, 10, 10), Box(50, 50, 60, 60))
    dets = detections((Box(0, 0, 10, 10), 0.9))
    assert ar_at_iou(dets, ground_truth, 0.5) == 0.5


def test_max_dets_truncates_per_image():
    ground_truth = truth(Box(0, 0, 10, 10), Box(50, 50, 60, 60))
    dets = detections((Box(0, 0, 10, 10), 0.9), (Box(50, 50, 60, 60), 0.8))
    assert ar_at_iou(dets, ground_truth, 0.5, max_dets=1) == 0.5
    assert ar_at_iou(dets, ground_truth, 0.5) == 1.0


def test_undefined_without_ground_truth():
    with pytest.raises(NoGroundTruthError):
        ap_at_iou(detections((BIG, 0.9)), GroundTruth(), 0.5)
    with pytest.raises(NoGroundTruthError):
        evaluate({}, GroundTruth())


def test_categories_are_averaged():
    ground_truth = GroundTruth(
        boxes={0: (GroundTruthBox(BIG, 1, 1), GroundTruthBox(Box(200, 200, 250, 250), 2, 2))},
        categories={1: "person", 2: "car"},
    )
    # Only category 1 is found
    dets = detections((BIG, 0.9))
    assert ap_at_iou(dets, ground_truth, 0.5) == 0.5


def test_evaluate_perfect():
    ground_truth = truth(BIG)
    report = evaluate(detections((BIG, 1.0)), ground_truth)
    assert (report.ap_50, report.ap_95, report.ar_50, report.ar_95) == (1.0, 1.0, 1.0, 1.0)
    assert report.ap_50_95 == 1.0
    assert report.n_detections == 1
    assert report.n_ground_truth == 1
    assert report.categories[0].name == "object"


def test_evaluate_jittered():
    # Shifting a 100px box by 2px gives IoU 9604 / 10396, between 0.5 and 0.95
    shifted = Box(2, 2, 102, 102)
    assert 0.5 < iou(shifted, BIG) < 0.95
    report = evaluate(detections((shifted, 0.9)), truth(BIG))
    assert report.ap_50 == 1.0
    assert report.ap_95 == 0.0
    assert 0.0 < report.ap_50_95 < 1.0


def test_evaluate_empty():
    report = evaluate({}, truth(BIG))
    assert (report.ap_50, report.ap_95, report.ar_50, report.ar_95) == (0.0, 0.0, 0.0, 0.0)
    assert report.as_dict()["categories"][0]["n_detections"] == 0


def test_coco_thresholds():
    assert COCO_IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


@pytest.mark.parametrize("max_dets", (-1, 1.5, True))
def test_max_dets_must_be_non_negative_integer(max_dets):
    with pytest.raises(ConfigError, match="max_dets"):
        ar_at_iou(detections((BIG, 0.9)), truth(BIG), 0.5, max_dets=max_dets)


def test_max_dets_zero():
    assert ar_at_iou(detections((BIG, 0.9)), truth(BIG), 0.5, max_dets=0) == 0.0


def draw_instance(data):
    ground_truth = data.draw(ground_truths(image_ids=(0, 1), categories=(1, 2), max_boxes=4, max_coordinate=20.0))
    assume(len(ground_truth) > 0)
    dets = {
        image_id: data.draw(detection_lists(max_size=6, image_id=image_id, categories=(1, 2), max_coordinate=20.0))
        for image_id in (0, 1)
    }
    return ground_truth, dets


@settings(max_examples=300)
@given(data=st.data())
def test_stricter_threshold_never_helps(data):
    ground_truth, dets = draw_instance(data)
    thresholds = (0.3, 0.5, 0.75, 0.95)
    ap = [ap_at_iou(dets, ground_truth, threshold) for threshold in thresholds]
    ar = [ar_at_iou(dets, ground_truth, threshold) for threshold in thresholds]
    assert all(high <= low + 1e-12 for low, high in zip(ap, ap[1:]))
    assert all(high <= low + 1e-12 for low, high in zip(ar, ar[1:]))


@settings(max_examples=300)
@given(data=st.data(), box=boxes(max_coordinate=20.0))
def test_lowest_ranked_detection_keeps_earlier_points(data, box):
    ground_truth, dets = draw_instance(data)
    scores = [item.score for items in dets.values() for item in items]
    assume(scores and min(scores) > 0.0)
    before = precision_recall_curve(dets, ground_truth, 1, 0.5)
    extended = {**dets, 0: [*dets[0], Detection(box, 1, min(scores) / 2, image_id=0)]}
    after = precision_recall_curve(extended, ground_truth, 1, 0.5)
    assert after[: len(before)] == before
