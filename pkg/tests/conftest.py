import numpy as np
import pytest

from rtmcloud.blobstore import BlobStore
from rtmcloud.msgqueue import FileQueue
from rtmcloud.survey import make_layered_model


@pytest.fixture
def store(tmp_path):
    return BlobStore(tmp_path / "store")


@pytest.fixture
def queue(tmp_path):
    return FileQueue(tmp_path / "queue")


@pytest.fixture(scope="session")
def uniform_model_61():
    return make_layered_model(61, 61, 10.0, 10.0, [1500.0])


def rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise difference relative to the larger field's scale."""
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale == 0:
        return 0.0
    return float(np.abs(a - b).max() / scale)
