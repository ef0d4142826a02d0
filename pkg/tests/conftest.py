import shutil
from pathlib import Path

import pytest

from canvascheck.dataset import load_manifest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def manifest_path() -> Path:
    return FIXTURES / "dataset" / "manifest.json"


@pytest.fixture(scope="session")
def mock_script_path() -> Path:
    return FIXTURES / "mock_script.json"


@pytest.fixture(scope="session")
def verdicts_import_path() -> Path:
    return FIXTURES / "verdicts_import.ndjson"


@pytest.fixture()
def fixture_dataset(manifest_path):
    return load_manifest(manifest_path)


@pytest.fixture()
def scratch_dataset_dir(tmp_path, manifest_path) -> Path:
    """A private copy of the fixture dataset safe to mutate."""
    target = tmp_path / "dataset"
    shutil.copytree(manifest_path.parent, target)
    return target
