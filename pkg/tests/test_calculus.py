import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattwave.calculus import (
    conv_partial,
    difference,
    inner,
    kernel_closed_form,
    kernel_periodized,
    kernel_raw,
    skew_defect,
    stencil_laplacian,
)
from lattwave.lattice import delta_field, make_box
from lattwave.spectral import laplacian, partial, partial_symbol

from conftest import random_field


def test_raw_kernel_values():
    assert kernel_raw(0) == pytest.approx(4j / np.pi)
    assert kernel_raw(1) == pytest.approx(-4j / (3 * np.pi))
    a = np.arange(-5, 6)
    np.testing.assert_allclose(kernel_raw(a), kernel_raw(-a))  # even in a


def test_raw_kernel_sums_to_zero():
    # sum_a 1/(4a^2 - 1) = 0 over Z; partial sums converge like 1/N
    a = np.arange(-200000, 200001)
    assert abs(np.sum(kernel_raw(a))) < 1e-5


@pytest.mark.parametrize("L", [4, 8, 16, 32, 128])
def test_periodized_matches_cot_closed_form(L):
    ker = kernel_periodized(make_box(1, L))
    np.testing.assert_allclose(ker.values, kernel_closed_form(L, ker.offsets), atol=1e-14)
    assert ker.tail_bound <= 1e-13


@pytest.mark.parametrize("L", [8, 16, 64])
def test_kernel_transform_is_the_symbol(L):
    box = make_box(1, L)
    ker = kernel_periodized(box)
    np.testing.assert_allclose(np.fft.fft(ker.storage()), partial_symbol(box, 1), atol=1e-13)


def test_kernel_zero_sum_and_row_a0():
    ker = kernel_periodized(make_box(1, 8))
    assert abs(ker.values.sum()) < 1e-14
    # the a = 0 entry is the raw value plus the periodization correction
    assert ker.value(0).imag == pytest.approx(1.2568348730314624, abs=1e-13)
    assert ker.value(0).imag < kernel_raw(0).imag


def test_kernel_tail_is_independent_of_cutoff():
    box = make_box(1, 16)
    a = kernel_periodized(box, tail_terms=1).values
    b = kernel_periodized(box, tail_terms=500).values
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_kernel_argument_checks():
    with pytest.raises(ValueError):
        kernel_periodized(make_box(1, 8), j=2)
    with pytest.raises(ValueError):
        kernel_periodized(make_box(1, 8), tail_terms=0)


@pytest.mark.parametrize("d,L", [(1, 8), (2, 8), (3, 4)])
def test_convolution_equals_multiplier(rng, d, L):
    box = make_box(d, L)
    f = random_field(box, rng)
    for j in range(1, d + 1):
        assert conv_partial(f, j).allclose(partial(f, j), atol=1e-12)


def test_conv_partial_rejects_mismatched_kernel(rng):
    box = make_box(2, 8)
    f = random_field(box, rng)
    with pytest.raises(ValueError):
        conv_partial(f, 2, kernel_periodized(box, 1))
    with pytest.raises(ValueError):
        conv_partial(f, 1, kernel_periodized(make_box(2, 16), 1))


def test_difference_and_stencil():
    box = make_box(1, 8)
    Dd = difference(delta_field(box), 1)
    assert Dd.at(0) == -1 and Dd.at(-1) == 1
    lap = stencil_laplacian(delta_field(box))
    assert lap.at(0) == -2 and lap.at(1) == 1 and lap.at(-1) == 1
    with pytest.raises(ValueError):
        difference(delta_field(box), 2)


def test_stencil_equals_spectral_laplacian(rng):
    box = make_box(3, 8)
    f = random_field(box, rng)
    assert stencil_laplacian(f).allclose(laplacian(f), atol=1e-11)


def test_inner_is_sesquilinear(rng):
    box = make_box(1, 8)
    f, g = random_field(box, rng), random_field(box, rng)
    assert inner(f * 2j, g) == pytest.approx(2j * inner(f, g))
    assert inner(f, g * 2j) == pytest.approx(-2j * inner(f, g))
    assert inner(f, f).real == pytest.approx(np.sum(np.abs(f.values) ** 2))


def test_skew_defect_detects_non_skew_operator(rng):
    box = make_box(1, 16)
    u, v = random_field(box, rng), random_field(box, rng)
    assert skew_defect(u, v, 1) < 1e-12
    assert skew_defect(u, v, 1, derivative=difference) > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 16), (2, 8), (3, 4)]))
def test_skew_adjoint_property(seed, dl):
    rng = np.random.default_rng(seed)
    box = make_box(*dl)
    u, v = random_field(box, rng), random_field(box, rng)
    for j in range(1, box.d + 1):
        assert skew_defect(u, v, j) <= 1e-11 * np.linalg.norm(u.values) * np.linalg.norm(v.values)
