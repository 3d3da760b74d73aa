import numpy as np
import pytest
from hypothesis import given, strategies as st

from secsi.metrics import empirical_rmsfe, empirical_rmsfe_bruteforce, match_columns, resolve_ambiguity
from conftest import crandn


def test_identity_and_monomial(rng):
    F = crandn(rng, 6, 4)
    assert empirical_rmsfe(F, F) == 0.0
    P = np.eye(4)[:, [2, 0, 3, 1]] * (rng.standard_normal(4) + 1j * rng.standard_normal(4))
    assert empirical_rmsfe(F, F @ P) <= 1e-24
    np.testing.assert_allclose(resolve_ambiguity(F, F @ P), F, atol=1e-12)


def test_assignment_matches_bruteforce_200():
    rng = np.random.default_rng(7)
    for _ in range(200):
        F = rng.standard_normal((5, 4))
        Fh = F[:, rng.permutation(4)] * rng.uniform(0.5, 2, 4) + 0.5 * rng.standard_normal((5, 4))
        a, b = empirical_rmsfe(F, Fh), empirical_rmsfe_bruteforce(F, Fh)
        assert abs(a - b) <= 1e-12 * max(b, 1.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_monomial_invariance(seed, d):
    r = np.random.default_rng(seed)
    F = r.standard_normal((6, d))
    Fh = F + 0.3 * r.standard_normal((6, d))
    P = np.eye(d)[:, r.permutation(d)] * r.uniform(0.2, 5.0, d) * r.choice([-1, 1], d)
    assert abs(empirical_rmsfe(F, Fh @ P) - empirical_rmsfe(F, Fh)) <= 1e-12


def test_errors():
    with pytest.raises(ValueError):
        empirical_rmsfe(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        empirical_rmsfe(np.ones((3, 2)), np.zeros((3, 2)))


def test_match_columns_is_permutation(rng):
    F = rng.standard_normal((5, 4))
    assert sorted(match_columns(F, F[:, [3, 1, 0, 2]])) == [0, 1, 2, 3]
    np.testing.assert_array_equal(match_columns(F, F[:, [3, 1, 0, 2]]), [2, 1, 3, 0])
