import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from klrisk.data import (
    Dataset,
    GroupedDataset,
    Observation,
    parse_dataset,
    parse_grouped,
    serialize_dataset,
    serialize_grouped,
)
from klrisk.errors import EmptyDataError, FormatError


def test_parse_basic():
    d = parse_dataset("time,status\n1.0,1\n3.0,0")
    assert d.observations == (Observation.exact(1.0), Observation.censored(3.0))
    assert d.n == 2 and d.n_events == 1


def test_parse_from_stream_and_covariates():
    d = parse_dataset(io.StringIO("time,status,z1,z2\n1,1,0.5,-1\n2,0,1.5,2\n"))
    assert d.n_covariates == 2
    assert d.covariates.tolist() == [[0.5, -1.0], [1.5, 2.0]]


@pytest.mark.parametrize(
    "text,exc,needle",
    [
        ("time,status\n1.0,2", FormatError, "row 1"),
        ("time,status\n1.0,1\nabc,1", FormatError, "row 2"),
        ("time,status\n", EmptyDataError, None),
        ("", EmptyDataError, None),
        ("t,s\n1,1", FormatError, "header"),
        ("time,status\n1,1,3", FormatError, "row 1"),
        ("time,status\n-1,1", FormatError, "row 1"),
        ("time,status\nnan,1", FormatError, "row 1"),
    ],
)
def test_parse_errors(text, exc, needle):
    with pytest.raises(exc, match=needle):
        parse_dataset(text)


def test_parse_grouped_basic():
    g = parse_grouped("subject,y\n1,0.5\n1,0.7\n2,1.1")
    assert g.subjects == (("1", (0.5, 0.7)), ("2", (1.1,)))
    assert g.sizes.tolist() == [2, 1]


@pytest.mark.parametrize("text", ["subject,y\n1,0.5\n2,1.1\n1,0.7", "subject,y\n1,abc", "id,y\n1,2"])
def test_parse_grouped_errors(text):
    with pytest.raises(FormatError):
        parse_grouped(text)


def test_parse_grouped_empty():
    with pytest.raises(EmptyDataError):
        parse_grouped("subject,y\n")


times = st.floats(0, 1e6, allow_nan=False).map(lambda v: float(f"{v:.12g}"))


@given(st.lists(st.tuples(times, st.booleans(), st.floats(-1e3, 1e3)), min_size=1, max_size=30))
def test_round_trip_dataset(rows):
    d = Dataset(tuple(Observation(t, e, (z,)) for t, e, z in rows))
    back = parse_dataset(serialize_dataset(d))
    assert back == d
    assert back.n == len(rows)


@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5), min_size=1, max_size=10))
def test_round_trip_grouped(ys):
    g = GroupedDataset.from_lists(ys)
    assert parse_grouped(serialize_grouped(g)) == g


def test_censor_at():
    d = Dataset.censor_at(np.array([0.5, 1.5, 1.0]), 1.0)
    assert d.times.tolist() == [0.5, 1.0, 1.0]
    assert d.events.tolist() == [True, False, True]


def test_dataset_n_equals_rows():
    text = "time,status\n" + "".join(f"{i + 1},1\n" for i in range(17))
    assert parse_dataset(text).n == 17
