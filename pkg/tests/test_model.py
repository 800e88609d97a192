import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from instab.errors import DimensionError, ParseError
from instab.model import (
    PowerConstraint, SystemModel, bundled_config, bundled_names, load_model, loads,
    satellite, save_model, table1_setting, validate, van_der_pol,
)


def test_example1_config_dimensions():
    m = van_der_pol(1.5, 2.0, 2.0, 1.0)
    assert (m.n, m.m, m.ell1, m.ell2) == (2, 1, 2, 1)
    assert validate(m) == []


def test_bundled_setting2_loads():
    m = load_model(bundled_config("table1_setting2"))
    assert (m.n, m.m, m.ell1, m.ell2) == (2, 1, 2, 1)
    assert m.digest() == table1_setting(2).digest()


def test_bundled_names_cover_examples():
    names = set(bundled_names())
    assert {f"table1_setting{k}" for k in range(1, 7)} <= names
    assert {"satellite_zeta1", "satellite_zeta0.1"} <= names


def test_shape_mismatch_rejected():
    doc = {"A": [[0, 1], [-1, 1]], "B": [[0], [1], [2]], "C": [], "D": [[1], [1]]}
    with pytest.raises(DimensionError):
        loads(json.dumps(doc))


def test_zero_noise_column_is_legal():
    doc = {"A": [[0, 1], [-1, 1]], "B": [[0], [1]], "C": [], "D": [[0], [0]]}
    m = loads(json.dumps(doc))
    assert m.ell2 == 1 and validate(m) == []


def test_empty_additive_channel_rejected():
    doc = {"A": [[1.0]], "B": [[1.0]], "C": [], "D": [[]]}
    with pytest.raises((ValueError, DimensionError)):
        loads(json.dumps(doc))


def test_satellite_validates():
    assert validate(satellite(1.0)) == []
    assert satellite(0.1).n == 4


def test_nan_diagnostic():
    m = van_der_pol(1.5)
    A = np.array(m.A)
    A[0, 0] = np.nan
    bad = SystemModel.__new__(SystemModel)
    object.__setattr__(bad, "A", A)
    for f in ("B", "C", "D", "F", "u_hat", "label"):
        object.__setattr__(bad, f, getattr(m, f))
    diags = validate(bad)
    assert len(diags) == 1 and "finite" in diags[0]


def test_wrong_F_rows_diagnostic():
    m = van_der_pol(1.5)
    bad = SystemModel.__new__(SystemModel)
    for f in ("A", "B", "C", "D", "u_hat", "label"):
        object.__setattr__(bad, f, getattr(m, f))
    object.__setattr__(bad, "F", np.ones((3, 1)))
    diags = validate(bad)
    assert diags and any("F" in d for d in diags)


def test_malformed_json():
    with pytest.raises(ParseError):
        loads('{"A": [[1')


def test_u_hat_values():
    assert PowerConstraint.parse("unbounded").unbounded
    assert PowerConstraint.parse(2).u_hat == 2.0
    with pytest.raises(ValueError):
        PowerConstraint(-1.0)
    with pytest.raises(ValueError):
        PowerConstraint(math.nan)
    m = loads(json.dumps({"A": [[1.0]], "B": [[1.0]], "C": [], "D": [[1.0]], "u_hat": "unbounded"}))
    assert m.u_hat.unbounded


def test_digest_ignores_label():
    a = van_der_pol(1.5, 2, 2, 1)
    assert a.digest() == a.replace(label="other").digest()
    assert a.digest() != van_der_pol(1.5, 2, 0, 1).digest()


def test_stdin(monkeypatch):
    doc = json.dumps({"A": [[1.0]], "B": [[1.0]], "C": [], "D": [[1.0]]})
    monkeypatch.setattr("sys.stdin", io.StringIO(doc))
    assert load_model("-").n == 1


mats = st.integers(1, 4).flatmap(lambda n: st.tuples(
    arrays(float, (n, n), elements=st.floats(-1e6, 1e6)),
    arrays(float, (n, 2), elements=st.floats(-1e6, 1e6)),
    st.lists(arrays(float, (n, n), elements=st.floats(-1e6, 1e6)), max_size=2),
    arrays(float, (n, 1), elements=st.floats(-1e6, 1e6)),
))


@given(mats)
def test_save_load_roundtrip(tmp_path_factory, data):
    A, B, C, D = data
    m = SystemModel(A, B, tuple(C), D, label="rt")
    path = tmp_path_factory.mktemp("m") / "model.json"
    save_model(m, path)
    back = load_model(path)
    assert validate(back) == []
    assert back.digest() == m.digest()
    np.testing.assert_array_equal(back.A, m.A)
    assert len(back.C) == len(m.C)
