import json
import logging
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", suppress_health_check=[HealthCheck.too_slow], deadline=None)
settings.load_profile("default")

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", default=False, help="rewrite the files under test/golden")


@pytest.fixture
def golden(request):
    """Compare text against a file in `test/golden`; a missing file is recorded and the test is skipped."""
    update = request.config.getoption("--update-golden")

    def check(name, content):
        path = GOLDEN_DIR / name
        if update or not path.exists():
            GOLDEN_DIR.mkdir(exist_ok=True)
            path.write_text(content, encoding="utf-8")
            if not update:
                pytest.skip(f"Recorded {name}; commit it to freeze the value")
            return
        assert content == path.read_text(encoding="utf-8")

    return check


@pytest.fixture(autouse=True)
def reset_package_logger():
    yield
    logger = logging.getLogger("ensemble_fusion")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)


# Three well-separated objects over two images
GROUND_TRUTH = {
    "images": [{"id": 1, "width": 200, "height": 200}, {"id": 2, "width": 200, "height": 200}],
    "annotations": [
        {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 40, 40]},
        {"id": 2, "image_id": 1, "category_id": 2, "bbox": [100, 100, 50, 30]},
        {"id": 3, "image_id": 2, "category_id": 1, "bbox": [20, 60, 60, 60]},
    ],
    "categories": [{"id": 1, "name": "person"}, {"id": 2, "name": "car"}],
}


def perfect_results(score):
    return [
        {
            "image_id": annotation["image_id"],
            "category_id": annotation["category_id"],
            "bbox": annotation["bbox"],
            "score": score,
        }
        for annotation in GROUND_TRUTH["annotations"]
    ]


@pytest.fixture
def write_json_file(tmp_path):
    def inner(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return inner


@pytest.fixture
def ground_truth_file(write_json_file):
    return write_json_file("ground_truth.json", GROUND_TRUTH)


@pytest.fixture
def ensemble_dir(tmp_path, ground_truth_file, write_json_file):
    """Manifest of three models that all find every object, plus one low-score false positive in model 0."""
    models = []
    for model_id, score in enumerate((0.9, 0.8, 0.7)):
        results = perfect_results(score)
        if model_id == 0:
            results.append({"image_id": 2, "category_id": 2, "bbox": [150, 10, 20, 20], "score": 0.3})
        write_json_file(f"model_{model_id}.json", results)
        models.append({"id": model_id, "path": f"model_{model_id}.json"})
    write_json_file("manifest.json", {"ground_truth": ground_truth_file.name, "models": models, "fusion": {}})
    return tmp_path
