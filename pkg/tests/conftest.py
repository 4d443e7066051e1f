import numpy as np
import pytest

from crossmodal.batch import LabeledBatch
from crossmodal.core import RngStream


def make_pk_batch(rng: RngStream, p: int, k: int, dim: int, pair=("vis", "ir")):
    """Random-feature batch with the P x K x 2-modality block structure."""
    feats = rng.normal(size=(2 * p * k, dim))
    labels = np.repeat(np.arange(p), 2 * k)
    mods = np.tile(np.repeat(list(pair), k), p)
    return LabeledBatch(feats, labels, mods)


@pytest.fixture
def rng():
    return RngStream(1234)
