import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tearlearn.io import (
    DataError,
    matrix_from_dict,
    matrix_to_dict,
    read_csv,
    read_json,
    read_matrix,
    read_prior,
    write_csv,
    write_json,
    write_matrix,
    write_prior,
)
from tearlearn.milp import PriorSpec

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite))
def test_csv_roundtrip_is_exact(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    write_csv(path, X)
    Y, names = read_csv(path)
    assert names == [f"x{j}" for j in range(X.shape[1])]
    assert np.array_equal(X, Y)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5).flatmap(lambda d: arrays(np.float64, (d, d), elements=finite)))
def test_matrix_json_roundtrip(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("m") / "a.json"
    write_matrix(path, A)
    assert np.array_equal(read_matrix(path), A)
    assert np.array_equal(matrix_from_dict(json.loads(json.dumps(matrix_to_dict(A)))), A)


def test_prior_roundtrip(tmp_path):
    entries = np.full((3, 3), "U")
    entries[0, 2] = "O"
    entries[2, 1] = "F"
    write_prior(tmp_path / "p.json", PriorSpec(entries))
    assert read_prior(tmp_path / "p.json").entries.tolist() == PriorSpec(entries).entries.tolist()
    assert read_json(tmp_path / "p.json")["entries"][0] == "FUO"


@pytest.mark.parametrize(
    "body, line, what",
    [
        ("a,b\n1,2\n3\n", 3, "expected 2 fields"),
        ("a,b\n1,2\n3,x\n", 3, "non-numeric"),
        ("a,b\n1,2\n3,4\nnan,1\n", 4, "non-finite"),
    ],
)
def test_malformed_csv_reports_line(tmp_path, body, line, what):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataError, match=f":{line}: {what}"):
        read_csv(path)


def test_empty_inputs(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(DataError):
        read_csv(tmp_path / "e.csv")
    (tmp_path / "h.csv").write_text("a,b\n")
    with pytest.raises(DataError):
        read_csv(tmp_path / "h.csv")


def test_bad_json(tmp_path):
    (tmp_path / "m.json").write_text('{"dim": 2,\n "values": [1, 2, 3]}')
    with pytest.raises(DataError, match="expected 4"):
        read_matrix(tmp_path / "m.json")
    (tmp_path / "x.json").write_text("{\n oops")
    with pytest.raises(DataError, match="line 2"):
        read_json(tmp_path / "x.json")


def test_json_is_canonical(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [0.1, 2.0]})
    write_json(tmp_path / "b.json", {"a": [0.1, 2.0], "b": 1})
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    with pytest.raises(ValueError):
        write_json(tmp_path / "c.json", {"x": float("nan")})
