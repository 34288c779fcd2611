import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chj.grid import (
    STENCILS,
    FluidState,
    GridSpec,
    apply_stencil,
    dx_c,
    dxx_c,
    dxy_c,
    dy_c,
    flatten,
    laplacian,
    unflatten,
)


def mode(g, kx, ky):
    x, y = g.coords()
    return np.exp(1j * (kx * x + ky * y))


@pytest.mark.parametrize("kx,ky", [(1, 0), (0, 1), (2, 3), (5, 1)])
def test_stencil_symbols(kx, ky):
    g = GridSpec(16, 12)
    f = mode(g, kx, ky)
    sx, sy = math.sin(kx * g.dx) / g.dx, math.sin(ky * g.dy) / g.dy
    cx = -(2 - 2 * math.cos(kx * g.dx)) / g.dx**2
    cy = -(2 - 2 * math.cos(ky * g.dy)) / g.dy**2
    np.testing.assert_allclose(dx_c(f, g), 1j * sx * f, atol=1e-12)
    np.testing.assert_allclose(dy_c(f, g), 1j * sy * f, atol=1e-12)
    np.testing.assert_allclose(dxx_c(f, g), cx * f, atol=1e-12)
    np.testing.assert_allclose(laplacian(f, g), (cx + cy) * f, atol=1e-12)
    np.testing.assert_allclose(dxy_c(f, g), -sx * sy * f, atol=1e-12)


def test_sin_derivative_and_second_difference():
    g = GridSpec(32, 32)
    x, _ = g.coords()
    np.testing.assert_allclose(dx_c(np.sin(x), g), np.cos(x) * math.sin(g.dx) / g.dx, atol=1e-14)
    # second difference of a linear-in-index periodic-safe field: constant field -> 0
    np.testing.assert_allclose(dxx_c(np.full(g.shape, 3.0), g), 0.0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(STENCILS))
def test_matrices_match_stencils(name, rng):
    g = GridSpec(6, 5)
    f = rng.standard_normal(g.shape)
    np.testing.assert_allclose(
        (g.operators[name] @ f.reshape(-1)).reshape(g.shape), apply_stencil(name, f, g), atol=1e-12
    )


def test_stencils_act_on_batches(rng):
    g = GridSpec(5, 7)
    f = rng.standard_normal((3, 2) + g.shape)
    for name in STENCILS:
        batched = apply_stencil(name, f, g)
        np.testing.assert_allclose(batched[1, 0], apply_stencil(name, f[1, 0], g))


def test_flatten_layout_and_roundtrip(rng):
    g = GridSpec(4, 4)
    s = FluidState.rest(g)
    v = flatten(s)
    assert v.shape == (64,)
    np.testing.assert_array_equal(v[:16], 1.0)
    np.testing.assert_array_equal(v[16:], 0.0)
    f = rng.standard_normal((4,) + g.shape)
    s = FluidState(g, *f)
    v = flatten(s)
    # node index i = y * nx + x inside each block
    assert v[1 * 16 + 2 * 4 + 3] == f[1, 2, 3]
    back = unflatten(v, g)
    for a, b in zip(back.fields(), f):
        np.testing.assert_array_equal(a, b)


def test_validation_errors():
    with pytest.raises(ValueError):
        GridSpec(3, 8)
    with pytest.raises(ValueError):
        GridSpec(8, 8, box_length=0)
    g = GridSpec(4, 4)
    with pytest.raises(ValueError):
        FluidState(g, np.ones((4, 5)), np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        FluidState(g, np.full((4, 4), np.nan), np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        unflatten(np.zeros(10), g)


@settings(max_examples=30, deadline=None)
@given(
    nx=st.integers(4, 9),
    ny=st.integers(4, 9),
    seed=st.integers(0, 2**32 - 1),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
)
def test_stencils_linear_and_annihilate_constants(nx, ny, seed, a, b):
    g = GridSpec(nx, ny)
    r = np.random.default_rng(seed)
    f, h = r.standard_normal(g.shape), r.standard_normal(g.shape)
    for name, op in STENCILS.items():
        np.testing.assert_allclose(op(a * f + b * h, g), a * op(f, g) + b * op(h, g), atol=1e-9)
        if name != "I":
            np.testing.assert_allclose(op(np.full(g.shape, a), g), 0.0, atol=1e-10)
