import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from obsimpact.geograph import GeoPoint, MetNode, NodeKind  # noqa: E402


def make_node(node_id, lat, lon, kind=NodeKind.NWP, t=0, attrs=None):
    if attrs is None:
        attrs = np.zeros(len(kind.variables))
    return MetNode(node_id, kind, GeoPoint(lat, lon), t, attrs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY_SPEC_KW = dict(seed=3, region=(30.0, 33.0, 120.0, 124.0), width_range=(1.5, 3.0))


@pytest.fixture(scope="session")
def tiny_data():
    from obsimpact.synthdata import FieldSpec, make_dataset

    spec = FieldSpec(**TINY_SPEC_KW)
    counts = {k: 6 for k in NodeKind if k.is_observation}
    return make_dataset(spec, range(1, 4), "train", counts), make_dataset(spec, range(4, 6), "test", counts)


@pytest.fixture(scope="session")
def tiny_samples(tiny_data):
    from obsimpact.neuralcore import SampleSet, Standardizer

    st = Standardizer.fit(tiny_data[0])
    return SampleSet(tiny_data[0], st), SampleSet(tiny_data[1], st)
