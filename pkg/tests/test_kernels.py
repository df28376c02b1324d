import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ltk import kernels as kn
from ltk.errors import DegenerateLengthscaleError, ValidationError
from oracles import gram as naive_gram, k_gauss

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_eval_self_is_one():
    k = kn.KernelSpec.gaussian([0.7, 2.0])
    assert kn.eval_kernel(k, [1.0, -3.0], [1.0, -3.0]) == 1.0


def test_eval_unit_distance():
    k = kn.KernelSpec.gaussian([1.0])
    assert kn.eval_kernel(k, [0.0], [1.0]) == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_eval_dirac():
    k = kn.KernelSpec.dirac()
    assert kn.eval_kernel(k, [1.0], [0.0]) == 0.0
    assert kn.eval_kernel(k, [1.0], [1.0]) == 1.0


def test_eval_dimension_mismatch():
    with pytest.raises(ValidationError):
        kn.eval_kernel(kn.KernelSpec.gaussian([1.0, 1.0]), [0.0], [1.0])


@pytest.mark.parametrize("bad", [[0.0], [-1.0], [np.inf], [np.nan], []])
def test_lengthscales_validated(bad):
    with pytest.raises(ValidationError):
        kn.KernelSpec.gaussian(bad)


def test_dirac_takes_no_lengthscale():
    with pytest.raises(ValidationError):
        kn.KernelSpec("dirac", (1.0,))


def test_median_three_points():
    assert kn.median_heuristic([0.0, 1.0, 3.0])[0] == 2.0


def test_median_two_points():
    assert kn.median_heuristic([0.0, 1.0])[0] == 1.0


def test_median_two_dims():
    np.testing.assert_array_equal(kn.median_heuristic([[0, 0], [1, 2], [3, 4]]), [2.0, 2.0])


def test_median_lower_convention():
    # distances {1, 2, 3, 1, 2, 1}: sorted 1,1,1,2,2,3 -> lower median 1
    assert kn.median_heuristic([0.0, 1.0, 2.0, 3.0])[0] == 1.0


def test_median_degenerate_dimension():
    with pytest.raises(DegenerateLengthscaleError):
        kn.median_heuristic([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])


def test_median_subsample_is_deterministic(rng):
    pts = rng.normal(size=(60, 2))
    a = kn.median_heuristic(pts, max_points=20)
    b = kn.median_heuristic(pts, max_points=20)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, kn.median_heuristic(pts))


def test_gram_dirac_groups():
    K = kn.gram(kn.KernelSpec.dirac(), [0, 1, 1])
    np.testing.assert_array_equal(K, [[1, 0, 0], [0, 1, 1], [0, 1, 1]])


def test_gram_single_point():
    np.testing.assert_array_equal(kn.gram(kn.KernelSpec.gaussian([1.3]), [[0.4]]), [[1.0]])


def test_gram_column():
    K = kn.gram(kn.KernelSpec.gaussian([1.0]), [0.0, 2.0], [0.0])
    np.testing.assert_allclose(K[:, 0], [1.0, math.exp(-2.0)], rtol=1e-15)


def test_gram_matches_double_loop(rng):
    A, B = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
    ls = [0.5, 1.0, 2.0]
    K = kn.gram(kn.KernelSpec.gaussian(ls), A, B)
    np.testing.assert_allclose(K, naive_gram(A, B, lambda a, b: k_gauss(a, b, ls)), atol=1e-14)


def test_fit_kernels_uses_group_rows(rng):
    from conftest import random_fused
    ds = random_fused(rng, 30)
    ks = kn.fit_kernels(ds)
    np.testing.assert_array_equal(ks.d.lengthscales, kn.median_heuristic(ds.d[ds.g == 0]))
    np.testing.assert_array_equal(ks.y.lengthscales, kn.median_heuristic(ds.y[ds.g == 1]))
    assert kn.fit_kernels(random_fused(rng, 30, binary=True)).d.family == "dirac"


def test_kernel_set_round_trip(rng):
    from conftest import random_kernels
    ks = random_kernels(rng)
    assert kn.KernelSet.from_dict(ks.to_dict()) == ks


# -- properties ------------------------------------------------------------

points = st.integers(1, 20).flatmap(
    lambda n: st.integers(1, 3).flatmap(lambda p: arrays(np.float64, (n, p), elements=finite)))
scales = st.lists(st.floats(0.05, 20.0), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(points, scales)
def test_gram_symmetric_psd_bounded(A, ls):
    K = kn.gram(kn.KernelSpec.gaussian(ls[: A.shape[1]]), A)
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    assert K.min() >= 0.0 and K.max() <= 1.0
    assert np.linalg.eigvalsh(K).min() >= -1e-8


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (12, 1), elements=st.integers(0, 3).map(float)))
def test_dirac_gram_psd(A):
    K = kn.gram(kn.KernelSpec.dirac(), A)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite),
       scales)
def test_product_structure(A, B, ls):
    full = kn.gram(kn.KernelSpec.gaussian(ls), A, B)
    prod = np.ones_like(full)
    for j in range(3):
        prod *= kn.gram(kn.KernelSpec.gaussian([ls[j]]), A[:, j], B[:, j])
    np.testing.assert_allclose(full, prod, rtol=1e-12, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (15, 2), elements=st.floats(-100, 100)),
       st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]))
def test_median_scale_covariance(W, c):
    try:
        base = kn.median_heuristic(W)
    except DegenerateLengthscaleError:
        return
    scaled = W.copy()
    scaled[:, 0] *= c
    out = kn.median_heuristic(scaled)
    # powers of two keep the scaling exact in floating point
    assert out[0] == c * base[0]
    assert out[1] == base[1]
