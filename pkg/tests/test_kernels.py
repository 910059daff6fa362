import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relmod.diffcore import kernels

needs_ext = pytest.mark.skipif(kernels.ext_pair_relu_sum is None,
                               reason="compiled kernel not built")


def brute_force(left, right, bias, include_self):
    t, k, h = left.shape
    out = np.zeros((t, h))
    cl, cr = np.zeros_like(left), np.zeros_like(left)
    for b in range(t):
        for i in range(k):
            for j in range(i if include_self else i + 1, k):
                v = left[b, i] + right[b, j] + bias
                out[b] += np.maximum(v, 0)
                cl[b, i] += v > 0
                cr[b, j] += v > 0
    return out, cl, cr


def random_inputs(seed, t, k, h):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(t, k, h)), rng.normal(size=(t, k, h)), rng.normal(size=h)


shapes = st.tuples(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 9),
                   st.integers(1, 7), st.booleans())


@given(shapes)
def test_numpy_kernel_matches_brute_force(args):
    seed, t, k, h, include_self = args
    inputs = random_inputs(seed, t, k, h)
    got = kernels.py_pair_relu_sum(*inputs, include_self)
    want = brute_force(*inputs, include_self)
    np.testing.assert_allclose(got[0], want[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(got[1], want[1])
    np.testing.assert_array_equal(got[2], want[2])


@needs_ext
@given(shapes)
def test_compiled_kernel_matches_numpy(args):
    seed, t, k, h, include_self = args
    inputs = random_inputs(seed, t, k, h)
    ref = kernels.py_pair_relu_sum(*inputs, include_self)
    got = kernels.ext_pair_relu_sum(*inputs, include_self)
    np.testing.assert_allclose(got[0], ref[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(got[1], ref[1])
    np.testing.assert_array_equal(got[2], ref[2])


@needs_ext
def test_compiled_kernel_at_default_size():
    inputs = random_inputs(0, 4, 64, 128)
    ref = kernels.py_pair_relu_sum(*inputs, True)
    got = kernels.ext_pair_relu_sum(*inputs, True)
    np.testing.assert_allclose(got[0], ref[0], rtol=1e-12)
    np.testing.assert_array_equal(got[1], ref[1])


@needs_ext
def test_compiled_kernel_accepts_non_contiguous_input():
    left, right, bias = random_inputs(1, 2, 5, 6)
    strided = np.asfortranarray(left)
    np.testing.assert_allclose(kernels.ext_pair_relu_sum(strided, right, bias, True)[0],
                               kernels.py_pair_relu_sum(left, right, bias, True)[0], rtol=1e-12)


def test_single_cell_without_self_pairs_is_empty():
    out, cl, cr = kernels.pair_relu_sum(*random_inputs(2, 1, 1, 3), False)
    assert not out.any() and not cl.any() and not cr.any()


def test_env_var_forces_python_fallback():
    code = "from relmod.diffcore import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "RELMOD_KERNELS": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"


def test_default_backend_reflects_build():
    expected = "python" if kernels.ext_pair_relu_sum is None else "cython"
    if os.environ.get("RELMOD_KERNELS", "").lower() == "python":
        expected = "python"
    assert kernels.BACKEND == expected
