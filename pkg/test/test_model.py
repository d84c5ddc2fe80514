import pytest

from ensemble_fusion.errors import ConfigError, InvalidRecordError
from ensemble_fusion.geom import Box
from ensemble_fusion.model import Detection, DetectionStream, EnsembleOutputs, FusedDetection, pool, ranked

BOX = Box(0, 0, 10, 10)


def make_ensemble(*per_model):
    streams = [
        DetectionStream.from_detections(
            model_id, [Detection(BOX, 1, score, model_id=model_id, image_id=0) for score in scores]
        )
        for model_id, scores in enumerate(per_model)
    ]
    return EnsembleOutputs.from_streams(streams)


@pytest.mark.parametrize("score", (-0.1, 1.5, float("nan")))
def test_detection_score_range(score):
    with pytest.raises(InvalidRecordError, match="Score must be in"):
        Detection(BOX, 1, score)


def test_fused_variance_non_negative():
    with pytest.raises(InvalidRecordError):
        FusedDetection(BOX, 1, 0.5, variance=(0.0, -1.0, 0.0, 0.0), cluster_size=2)


def test_singleton_has_zero_variance():
    with pytest.raises(InvalidRecordError, match="single-member"):
        FusedDetection(BOX, 1, 0.5, variance=(1.0, 0.0, 0.0, 0.0))
    assert FusedDetection(BOX, 1, 0.5, variance=(1.0, 0.0, 0.0, 0.0), cluster_size=2).cluster_size == 2


def test_stream_rejects_foreign_detection():
    with pytest.raises(InvalidRecordError):
        DetectionStream(0, {0: (Detection(BOX, 1, 0.5, model_id=1),)})


@pytest.mark.parametrize("model_ids", ((1, 2), (0, 0), (0, 2)))
def test_ensemble_model_ids_are_contiguous(model_ids):
    with pytest.raises(ConfigError):
        EnsembleOutputs(len(model_ids), tuple(DetectionStream(model_id) for model_id in model_ids))


def test_pool_concatenates_and_sorts():
    ensemble = make_ensemble((0.5, 0.9), (), (0.7,))
    pooled = pool(ensemble, 0)
    assert [item.score for item in pooled] == [0.9, 0.7, 0.5]
    assert [item.model_id for item in pooled] == [0, 2, 0]


def test_pool_empty():
    assert pool(make_ensemble((), ()), 0) == []
    # Unknown images are simply empty
    assert pool(make_ensemble((0.5,)), 42) == []


def test_pool_tie_break_by_model_id():
    # When two detections have equal scores
    ensemble = make_ensemble((), (), (0.7,), (0.7,))
    streams = list(ensemble.streams)
    # And the streams are given in reverse order
    reversed_ensemble = EnsembleOutputs(ensemble.n_models, tuple(reversed(streams)))
    # Then the lower model id comes first either way
    assert [item.model_id for item in pool(ensemble, 0)] == [2, 3]
    assert pool(reversed_ensemble, 0) == pool(ensemble, 0)


def test_ranked_keeps_input_order_on_ties():
    first = Detection(Box(0, 0, 1, 1), 1, 0.5)
    second = Detection(Box(5, 5, 6, 6), 1, 0.5)
    assert ranked([first, second]) == [first, second]
    assert ranked([second, first]) == [second, first]
