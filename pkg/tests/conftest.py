from pathlib import Path

import numpy as np
import pytest

from carpetq.models.carpet import CarpetSpec
from carpetq.services.carpet_service import validate_spec
from carpetq.utils.config_loader import load_config
from carpetq.utils.generate_configs import random_spec

CONFIG_DIR = Path(__file__).resolve().parent.parent / "data" / "configs"


def _bundled(name):
    carpet, _ = load_config(CONFIG_DIR / name)
    return carpet


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def worked_carpet():
    return _bundled("worked_example.json")


@pytest.fixture(scope="session")
def uniform_carpet():
    return _bundled("uniform_full.json")


@pytest.fixture(scope="session")
def twomap_carpet():
    return _bundled("twomap.json")


@pytest.fixture(scope="session")
def unequal_carpet():
    return _bundled("unequal_rows.json")


@pytest.fixture(scope="session")
def permutation_carpet():
    return _bundled("permutation.json")


@pytest.fixture(scope="session")
def random_carpets():
    rng = np.random.default_rng(20240611)
    return [validate_spec(CarpetSpec.model_validate(random_spec(rng))) for _ in range(100)]


def make_carpet(n, m, digits):
    """Carpet from (i, j, p) triples."""
    raw = {"n": n, "m": m, "digits": [{"i": i, "j": j, "p": p} for i, j, p in digits]}
    return validate_spec(CarpetSpec.model_validate(raw))


@pytest.fixture(scope="session")
def carpet_factory():
    return make_carpet
