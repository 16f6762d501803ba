from __future__ import annotations

import pytest
from hypothesis import settings

from helpers import path_graph
from tsboost.graph import validate_instance

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def p3():
    return validate_instance(path_graph(3), [1.0, 0.0, -1.0])
