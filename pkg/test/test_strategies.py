import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.errors import InvalidArgument

from ensemble_fusion.strategies import (
    boxes,
    calibrated_samples,
    detection_lists,
    ensembles,
    ground_truths,
)


@given(box=boxes(max_coordinate=50.0, min_size=2.0, max_size=10.0))
def test_boxes_respect_bounds(box):
    assert 0.0 <= box.x1 <= box.x2
    assert 0.0 <= box.y1 <= box.y2
    assert 2.0 - 1e-9 <= box.width <= 10.0 + 1e-9
    assert 2.0 - 1e-9 <= box.height <= 10.0 + 1e-9


@given(items=detection_lists(max_size=10, image_id=3, n_models=2, categories=(4, 5)))
def test_detection_lists(items):
    assert len(items) <= 10
    for item in items:
        assert item.image_id == 3
        assert item.model_id in (0, 1)
        assert item.category in (4, 5)
        assert 0.0 <= item.score <= 1.0


@given(ensemble=ensembles(min_models=2, max_models=3, image_ids=(1, 2)))
def test_ensembles(ensemble):
    assert 2 <= ensemble.n_models <= 3
    assert [stream.model_id for stream in ensemble.streams] == list(range(ensemble.n_models))
    assert set(ensemble.image_ids()) <= {1, 2}


@given(items=calibrated_samples(min_size=1, max_size=5))
def test_calibrated_samples(items):
    assert 1 <= len(items) <= 5
    assert all(0.0 <= item.confidence <= 1.0 for item in items)


@given(ground_truth=ground_truths(image_ids=(0, 1), categories=(1, 2), max_boxes=3))
def test_ground_truths(ground_truth):
    assert sorted(ground_truth.images) == [0, 1]
    annotation_ids = [item.annotation_id for image_id in (0, 1) for item in ground_truth.for_image(image_id)]
    assert len(set(annotation_ids)) == len(annotation_ids)
    assert all(item.box.width >= 1.0 - 1e-9 for image_id in (0, 1) for item in ground_truth.for_image(image_id))


@pytest.mark.parametrize(
    "strategy",
    (
        lambda: boxes(max_coordinate=0.0),
        lambda: boxes(max_coordinate=10.0, min_size=20.0),
        lambda: boxes(min_size=5.0, max_size=1.0),
        lambda: detection_lists(n_models=0),
        lambda: detection_lists(categories=()),
        lambda: detection_lists(max_size=-1),
        lambda: ensembles(min_models=3, max_models=2),
        lambda: ground_truths(min_size=0.0),
        lambda: ground_truths(image_ids=("a",)),
    ),
)
def test_invalid_arguments(strategy):
    with pytest.raises(InvalidArgument):
        strategy()


def test_draws_with_data():
    @given(data=st.data())
    def inner(data):
        box = data.draw(boxes(max_coordinate=5.0))
        assert box.x2 <= 5.0 + 1e-9

    inner()
