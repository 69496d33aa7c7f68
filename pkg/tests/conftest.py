import numpy as np
import pytest

from cpsurv.event_data import EventRecord, build_panel, survival_records


@pytest.fixture
def d1_records():
    """Five survival records: (2, event), (3, event), (3, censored), (5, event), (6, censored)."""
    return survival_records([2, 3, 3, 5, 6], [1, 1, 0, 1, 0])


@pytest.fixture
def d1(d1_records):
    return build_panel(d1_records)


@pytest.fixture
def d2():
    """Group A: (1, event), (3, censored); group B: (2, event), (4, event)."""
    return build_panel(survival_records([1, 3, 2, 4], [1, 0, 1, 1], groups=["A", "A", "B", "B"]))


@pytest.fixture
def d3():
    """Three subjects in state 1 leaving at 1 (to 2), 2 (to 3) and censored at 3."""
    recs = [
        EventRecord(1, 0.0, 1.0, "1", "2"),
        EventRecord(2, 0.0, 2.0, "1", "3"),
        EventRecord(3, 0.0, 3.0, "1", "CENSORED"),
    ]
    return build_panel(recs, state_space=("1", "2", "3"))


@pytest.fixture
def d4():
    """Four subjects (exit, status, z): (1,1,0), (2,1,1), (3,1,0), (4,0,1)."""
    return survival_records([1, 2, 3, 4], [1, 1, 1, 0], covariates=[0, 1, 0, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
