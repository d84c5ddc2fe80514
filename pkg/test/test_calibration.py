import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemble_fusion.calibration import (
    CalibratedSample,
    CalibrationBin,
    assign_bins,
    bin_accuracy,
    bin_confidence,
    ece,
    match_detections,
    reliability_data,
)
from ensemble_fusion.errors import ConfigError, EmptyBinError, NoSamplesError
from ensemble_fusion.geom import Box
from ensemble_fusion.model import FusedDetection, GroundTruth, GroundTruthBox
from ensemble_fusion.strategies import calibrated_samples, detection_lists, ground_truths


def samples(*pairs):
    return [CalibratedSample(confidence, correct) for confidence, correct in pairs]


def reference_ece(items, n_bins):
    """Direct evaluation of the bin-weighted confidence/accuracy gap."""
    bins = {}
    for item in items:
        index = 1
        while item.confidence > index / n_bins:
            index += 1
        bins.setdefault(index, []).append(item)
    total = 0.0
    for members in bins.values():
        confidence = sum(member.confidence for member in members) / len(members)
        accuracy = sum(member.correct for member in members) / len(members)
        total += len(members) / len(items) * abs(accuracy - confidence)
    return total


def ground_truth(*boxes):
    return GroundTruth(boxes={0: tuple(GroundTruthBox(box, 1, idx) for idx, box in enumerate(boxes))} if boxes else {})


def fused(box, score):
    return FusedDetection(box, 1, score)


def test_perfect_calibration():
    assert ece(samples((1.0, True), (1.0, True), (1.0, True))).ece == 0.0


def test_single_bin():
    report = ece(samples((0.8, True), (0.8, True)), 10)
    assert report.ece == pytest.approx(0.2, abs=1e-12)
    assert report.n_samples == 2


def test_two_bins():
    items = samples(*([(0.95, True)] * 5 + [(0.15, False)] * 5))
    report = ece(items, 10)
    assert report.ece == pytest.approx(0.1, abs=1e-12)
    assert report.mce == pytest.approx(0.15, abs=1e-12)


def test_no_samples():
    with pytest.raises(NoSamplesError):
        ece([])


@settings(max_examples=1000)
@given(items=calibrated_samples(min_size=1), n_bins=st.sampled_from((5, 10, 15)))
def test_ece_matches_reference(items, n_bins):
    report = ece(items, n_bins)
    assert report.ece == pytest.approx(reference_ece(items, n_bins), abs=1e-12)
    assert 0.0 <= report.ece <= 1.0
    assert report.ece <= report.mce + 1e-12
    assert sum(item.count for item in report.bins) == len(items)


@given(data=st.data(), items=calibrated_samples(min_size=1), n_bins=st.sampled_from((5, 10, 15)))
def test_ece_ignores_sample_order(data, items, n_bins):
    shuffled = data.draw(st.permutations(items))
    original, permuted = ece(items, n_bins), ece(shuffled, n_bins)
    assert permuted.ece == pytest.approx(original.ece, abs=1e-12)
    assert [item.count for item in permuted.bins] == [item.count for item in original.bins]


@given(items=calibrated_samples(), n_bins=st.integers(min_value=1, max_value=20))
def test_bin_membership(items, n_bins):
    for bin_ in assign_bins(items, n_bins):
        for member in bin_.members:
            assert bin_.low < member.confidence <= bin_.high or (bin_.index == 1 and member.confidence == 0.0)


@pytest.mark.parametrize("confidence, index", ((0.0, 1), (0.1, 1), (0.1000001, 2), (1.0, 10), (0.3, 3)))
def test_bin_edges(confidence, index):
    bins = assign_bins(samples((confidence, True)), 10)
    assert [bin_.index for bin_ in bins if bin_.members] == [index]


def test_invalid_bin_count():
    with pytest.raises(ConfigError):
        assign_bins([], 0)


@pytest.mark.parametrize(
    "confidences, expected",
    (((0.8, 0.6), 0.7), ((0.93,), 0.93), ((0.71, 0.74, 0.80), 0.75)),
)
def test_bin_confidence(confidences, expected):
    bin_ = CalibrationBin(8, 10, tuple(CalibratedSample(value, True) for value in confidences))
    assert bin_confidence(bin_) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("flags, expected", (((True,) * 4, 1.0), ((False,) * 3, 0.0), ((True, True, False, False, False), 0.4)))
def test_bin_accuracy(flags, expected):
    bin_ = CalibrationBin(5, 10, tuple(CalibratedSample(0.5, flag) for flag in flags))
    assert bin_accuracy(bin_) == pytest.approx(expected)


@pytest.mark.parametrize("function", (bin_confidence, bin_accuracy))
def test_empty_bin(function):
    with pytest.raises(EmptyBinError):
        function(CalibrationBin(3, 10))


def test_reliability_rows():
    report = ece(samples((0.7, True), (0.7, True), (0.7, False)), 10)
    rows = reliability_data(report)
    assert len(rows) == 10
    assert rows[0].count == 0
    assert rows[0].confidence is None
    assert rows[0].accuracy is None
    assert rows[6].count == 3
    assert rows[6].bin_low == pytest.approx(0.6)
    assert rows[6].bin_high == pytest.approx(0.7)


def test_match_exact_box():
    box = Box(0, 0, 10, 10)
    result = match_detections({0: [fused(box, 0.9)]}, ground_truth(box))
    assert result == [CalibratedSample(0.9, True)]


def test_match_without_ground_truth():
    result = match_detections({0: [fused(Box(0, 0, 10, 10), 0.9)]}, ground_truth())
    assert result == [CalibratedSample(0.9, False)]


def test_match_is_one_to_one():
    # When two detections overlap the only ground-truth box
    box = Box(0, 0, 10, 10)
    result = match_detections({0: [fused(Box(0, 0, 10, 9), 0.8), fused(box, 0.9)]}, ground_truth(box))
    # Then only the higher-scoring one is correct
    assert sorted(result, key=lambda item: -item.confidence) == [
        CalibratedSample(0.9, True),
        CalibratedSample(0.8, False),
    ]


def test_match_respects_categories():
    box = Box(0, 0, 10, 10)
    detection = FusedDetection(box, 2, 0.9)
    assert match_detections({0: [detection]}, ground_truth(box)) == [CalibratedSample(0.9, False)]


@given(data=st.data())
def test_match_uses_each_ground_truth_box_once(data):
    truth = data.draw(ground_truths(image_ids=(0, 1), categories=(1, 2), max_boxes=4, max_coordinate=20.0))
    detections = {
        image_id: data.draw(detection_lists(max_size=8, image_id=image_id, categories=(1, 2), max_coordinate=20.0))
        for image_id in (0, 1)
    }
    result = match_detections(detections, truth)
    assert len(result) == sum(len(items) for items in detections.values())
    assert sum(item.correct for item in result) <= len(truth)
    for image_id, items in detections.items():
        for category in (1, 2):
            subset = {image_id: [item for item in items if item.category == category]}
            targets = [item for item in truth.for_image(image_id) if item.category == category]
            assert sum(item.correct for item in match_detections(subset, truth)) <= len(targets)
