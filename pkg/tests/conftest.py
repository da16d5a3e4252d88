import shutil
from pathlib import Path

import numpy as np
import pytest

from config import settings
from models.hog_models import GrayImage
from utils.energy import measurement_set_from_file, tradeoff_from_file
from utils.pgm import read_pgm
from utils.workload import get_architecture, get_workload

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def alexnet():
    return get_architecture("alexnet")


@pytest.fixture(scope="session")
def vgg16():
    return get_architecture("vgg16")


@pytest.fixture(scope="session")
def hog_config():
    return get_workload("hog")


@pytest.fixture(scope="session")
def scene_image() -> GrayImage:
    return read_pgm(FIXTURES / "scene64.pgm")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def measurements():
    return measurement_set_from_file()


@pytest.fixture
def tradeoff_points():
    return tradeoff_from_file()


@pytest.fixture
def data_copy(tmp_path, monkeypatch) -> Path:
    """Copie modifiable des données embarquées, branchée sur settings.DATA_DIR"""
    target = tmp_path / "data"
    shutil.copytree(settings.data_path, target)
    monkeypatch.setattr(settings, "DATA_DIR", str(target))
    return target


@pytest.fixture
def make_image(rng):
    def make(height: int, width: int, high: int = 256) -> GrayImage:
        return GrayImage(samples=rng.integers(0, high, size=(height, width)).astype(np.uint8))
    return make
