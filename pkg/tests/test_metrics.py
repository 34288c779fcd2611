import math

import numpy as np
import pytest
from conftest import random_state
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chj.carleman import lift
from chj.grid import GridSpec, flatten
from chj.metrics import (
    ERROR_THRESHOLD,
    ErrorSeries,
    UndefinedError,
    decay_reference,
    global_rel_error,
    local_rel_error,
    local_rel_error_or_nan,
    psi_norm,
    resolve_probe,
    write_series_csv,
)
from chj.tn import tn_lift


def test_threshold():
    assert ERROR_THRESHOLD == 1e-3


def test_global_error_basic(rng):
    f = rng.standard_normal((8, 8))
    assert global_rel_error(f, f) == 0.0
    assert global_rel_error(2 * f, f) == pytest.approx(1.0)
    assert global_rel_error(np.zeros_like(f), f) == pytest.approx(1.0)
    with pytest.raises(UndefinedError):
        global_rel_error(f, np.zeros_like(f))
    with pytest.raises(ValueError):
        global_rel_error(f, f[:4])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(a=arrays(float, (4, 4), elements=finite), b=arrays(float, (4, 4), elements=finite),
       c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_global_error_invariances(a, b, c, seed):
    if np.linalg.norm(b) < 1e-6:
        return
    e = global_rel_error(a, b)
    assert e >= 0
    assert global_rel_error(c * a, c * b) == pytest.approx(e, rel=1e-9, abs=1e-12)
    perm = np.random.default_rng(seed).permutation(16)
    assert global_rel_error(a.ravel()[perm], b.ravel()[perm]) == pytest.approx(e, rel=1e-12, abs=1e-15)


def test_probe_resolution():
    g = GridSpec(32, 32)
    p = resolve_probe(5.5, 2.0, g)
    assert (p.ix, p.iy) == (28, 10)
    assert p.node == 10 * 32 + 28
    assert (resolve_probe(0.0, 0.0, g).ix, resolve_probe(0.0, 0.0, g).iy) == (0, 0)
    # a coordinate just below 2 pi wraps to node 0
    assert resolve_probe(2 * math.pi - 1e-3, 0, g).ix == 0


def test_probe_tie_goes_low():
    g = GridSpec(8, 8, box_length=8.0)
    assert resolve_probe(2.5, 3.5, g).ix == 2
    assert resolve_probe(2.5, 3.5, g).iy == 3
    assert resolve_probe(2.51, 3.49, g).ix == 3


def test_local_error_and_undefined(rng):
    g = GridSpec(8, 8)
    p = resolve_probe(0, 0, g)
    ref = np.ones(g.shape)
    assert local_rel_error(1.5 * ref, ref, p) == pytest.approx(0.5)
    ref[0, 0] = 1e-16
    with pytest.raises(UndefinedError):
        local_rel_error(ref, ref, p)
    assert math.isnan(local_rel_error_or_nan(ref, ref, p))


def test_decay_reference():
    r = decay_reference(1.0, 1 / 6, [0.0, 6.0])
    assert r.values[0] == 1.0
    assert r.values[1] == pytest.approx(math.exp(-1))
    assert decay_reference(4.0, 1 / 18, [18 / 16]).values[0] == pytest.approx(math.exp(-1))
    with pytest.raises(ValueError):
        decay_reference(1.0, -1.0, [0.0])


def test_error_series_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        ErrorSeries([0, 1], [1.0])
    with pytest.raises(ValueError):
        ErrorSeries([0, 0], [1.0, 2.0])
    a = ErrorSeries([0.01, 0.02], [1e-4, 2e-4], label="a")
    b = ErrorSeries([0.01], [3e-4], label="b")
    path = tmp_path / "s.csv"
    write_series_csv([a, b], path)
    lines = path.read_text().splitlines()
    assert lines == ["time,value,label", "0.01,0.0001,a", "0.02,0.0002,a", "0.01,0.0003,b"]
    a.write_csv(path)
    assert len(path.read_text().splitlines()) == 3


@pytest.mark.parametrize("order", [2, 3])
def test_psi_norm_of_exact_lift(order, rng):
    g = GridSpec(4, 4)
    s = random_state(g, rng)
    x = np.linalg.norm(flatten(s))
    assert psi_norm(lift(s, order)) == pytest.approx(x**3, rel=1e-13)
    assert psi_norm(tn_lift(s, order)) == pytest.approx(x**3, rel=1e-13)
