import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nnsparse import formats
from nnsparse.conditions import GroundTruth
from nnsparse.formats import ParseError


@given(arrays(np.float64, (3, 2), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_exact(M):
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.csv")
        formats.write_matrix_csv(path, M)
        back, names = formats.read_matrix_csv(path)
    assert names is None
    assert np.array_equal(back, M)


def test_header_names(tmp_path):
    path = tmp_path / "d.csv"
    formats.write_matrix_csv(path, np.eye(2), names=["soil", "grass"])
    A, names = formats.read_dictionary(path, header=True)
    assert names == ["soil", "grass"]
    np.testing.assert_array_equal(A, np.eye(2))


@pytest.mark.parametrize(
    "text, line",
    [("1,2\n3,x\n", 2), ("1,2\n3\n", 2), ("1,2\n\n3,4\nnan,1\n", 4)],
)
def test_parse_errors_name_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError, match=f"line {line}"):
        formats.read_matrix_csv(path)


def test_empty_file(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("\n")
    with pytest.raises(ParseError):
        formats.read_matrix_csv(path)


def test_dumps_is_valid_json_with_exact_floats():
    obj = {"a": [0.1, 1 / 3, float("inf")], "b": {"c": None, "d": True}, "e": np.int64(3), "f": []}
    back = json.loads(formats.dumps(obj))
    assert back["a"][:2] == [0.1, 1 / 3]
    assert back["a"][2] == "inf"
    assert back["b"] == {"c": None, "d": True} and back["e"] == 3 and back["f"] == []


def test_truth_round_trip(tmp_path):
    t = GroundTruth([0.0, 0.5, 0.25], [0.1, -0.2])
    path = tmp_path / "t.json"
    formats.write_json(path, formats.truth_to_dict(t))
    back, support = formats.read_truth(path)
    assert np.array_equal(back.coefficients, t.coefficients)
    assert np.array_equal(back.distortion, t.distortion)
    assert support == [1, 2]


def test_truth_missing_keys(tmp_path):
    path = tmp_path / "t.json"
    path.write_text('{"coefficients": [1]}')
    with pytest.raises(ParseError, match="distortion"):
        formats.read_truth(path)


def test_bad_json(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("{\n  oops\n}")
    with pytest.raises(ParseError, match="line 2"):
        formats.read_json(path)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    formats.atomic_write(tmp_path / "x.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]
