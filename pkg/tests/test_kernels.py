import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from vardyn.kernels import ExpKernel, g, h, l


def g_oracle(x):
    # defining integral (1/x) int_0^x e^-u du
    val, _ = quad(lambda u: np.exp(-u), 0.0, x)
    return val / x


def h_oracle(x):
    # (1/x^2) int_0^x u*g(u) du with u*g(u) = 1 - e^-u
    val, _ = quad(lambda u: -np.expm1(-u), 0.0, x)
    return val / x**2


def l_oracle(x, y, z):
    # defining integral of the mark-to-market overlap
    val, _ = quad(lambda s: np.expm1(-x * s) * np.expm1(-y * s), 0.0, z,
                  epsabs=0.0, epsrel=1e-13, limit=200)
    return val / (x * y * z**3)


class TestG:
    def test_limit_at_zero(self):
        assert g(0.0) == 1.0
        assert g(1e-12) == pytest.approx(1.0, abs=1e-9)

    def test_reference_values(self):
        assert g(1.0) == pytest.approx(1.0 - np.exp(-1.0), rel=1e-14)
        assert g(20.0) == pytest.approx(g_oracle(20.0), rel=1e-12)
        assert g(20.0) == pytest.approx(1.0 / 20.0, rel=1e-6)

    def test_oracle_grid(self):
        for x in np.logspace(-8, 3, 45):
            assert g(x) == pytest.approx(g_oracle(x), rel=1e-10)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            g(-0.1)

    def test_vectorized(self):
        xs = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(g(xs), [g(v) for v in xs], rtol=1e-15)


class TestH:
    def test_limit_at_zero(self):
        assert h(0.0) == 0.5
        assert h(1e-10) == pytest.approx(0.5, abs=1e-10)

    def test_reference_values(self):
        # h(1) = e^-1
        assert h(1.0) == pytest.approx(np.exp(-1.0), rel=1e-14)
        assert h(1.0) == pytest.approx(h_oracle(1.0), rel=1e-12)
        # large-x asymptote 1/x
        assert h(50.0) == pytest.approx(1.0 / 50.0, rel=0.03)

    def test_oracle_grid(self):
        for x in np.logspace(-8, 3, 45):
            assert h(x) == pytest.approx(h_oracle(x), rel=1e-10)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            h(-1.0)


class TestL:
    def test_small_z_limit(self):
        assert l(1.0, 2.0, 1e-9) == pytest.approx(1.0 / 3.0, abs=1e-6)

    def test_large_z_asymptote(self):
        x, y, z = 2.0, 3.0, 500.0
        assert l(x, y, z) == pytest.approx(1.0 / (x * y * z**2), rel=1e-2)

    def test_unit_point_oracle(self):
        assert l(1.0, 1.0, 1.0) == pytest.approx(l_oracle(1.0, 1.0, 1.0), rel=1e-12)

    def test_oracle_grid(self):
        for x in [1e-2, 0.3, 1.05, 10.25, 300.0]:
            for y in [1e-2, 1.05, 40.0]:
                for z in [1e-6, 1e-3, 30 / 365, 0.25, 2.0, 50.0]:
                    assert l(x, y, z) == pytest.approx(
                        l_oracle(x, y, z), rel=1e-10), (x, y, z)

    def test_symmetry(self):
        assert l(0.7, 9.0, 0.3) == l(9.0, 0.7, 0.3)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            l(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            l(1.0, 1.0, -2.0)


@given(st.floats(min_value=1e-6, max_value=100.0),
       st.floats(min_value=1e-6, max_value=100.0))
@settings(max_examples=200, deadline=None)
def test_g_h_strictly_decreasing(x1, x2):
    lo, hi = sorted((x1, x2))
    if hi - lo < 1e-9:
        return
    assert g(hi) < g(lo)
    assert h(hi) < h(lo)


@given(st.floats(min_value=1e-3, max_value=50.0))
@settings(max_examples=100, deadline=None)
def test_asymptotic_normalizations(x):
    # x*g(x) -> 1 and x*h(x) -> 1 as x -> inf; both bounded by 1
    assert x * g(x) <= 1.0 + 1e-12
    assert x * h(x) <= 1.0 + 1e-12


def test_exp_kernel():
    w = ExpKernel(k=10.25)
    assert w(0.0) == 1.0
    assert w(0.1) == pytest.approx(np.exp(-1.025), rel=1e-14)
    np.testing.assert_allclose(w(np.array([0.0, 1.0])), [1.0, np.exp(-10.25)])
    with pytest.raises(ValueError):
        ExpKernel(k=-1.0)
