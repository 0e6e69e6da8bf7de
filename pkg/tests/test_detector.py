import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import gammaln

from bellsim.detector import (
    DetectorId,
    InternalDistribution,
    decoherence_factor,
    haar_unitary,
    make_array,
    make_detector,
    overlap,
    parse_dist,
    sample_internal,
)
from bellsim.rng import CounterRNG


def haar_f2_samples(M, weights, n, seed):
    rng = np.random.default_rng(seed)
    w = np.asarray(weights)
    return np.array([abs(np.dot(w, np.diagonal(haar_unitary(M, rng)))) ** 2 for _ in range(n)])


def test_detector_id_layout():
    assert [d.name for d in DetectorId] == ["LV", "LH", "RV", "RH"]
    assert DetectorId.RH.station == "R" and DetectorId.RH.port == "H"


def test_uniform_weights():
    d = make_detector("LV", 4, "uniform", seed=1)
    np.testing.assert_array_equal(d.dist.weights, [0.25] * 4)


def test_gibbs_limits():
    np.testing.assert_allclose(make_detector("LV", 2, "gibbs:0", 1).dist.weights, [0.5, 0.5])
    np.testing.assert_allclose(make_detector("LV", 2, "gibbs:1e4", 1).dist.weights, [1, 0], atol=1e-300)
    np.testing.assert_array_equal(InternalDistribution.gibbs(3, math.inf).weights, [1, 0, 0])


def test_gibbs_energy_ladder():
    w = InternalDistribution.gibbs(4, 2.0).weights
    raw = np.exp(-2.0 * np.arange(4) / 4)
    np.testing.assert_allclose(w, raw / raw.sum(), rtol=1e-14)


@pytest.mark.parametrize("bad", [lambda: make_detector("LV", 0), lambda: parse_dist("gibbs:-1", 3),
                                 lambda: parse_dist("thermal", 3), lambda: parse_dist("gibbs", 3)])
def test_bad_detector_arguments(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("M", [1, 2, 5, 16])
def test_haar_unitary_is_unitary(M):
    u = haar_unitary(M, np.random.default_rng(M))
    np.testing.assert_allclose(u.conj().T @ u, np.eye(M), atol=1e-12)


def test_factor_identity_is_one():
    for dist in ["uniform", "gibbs:3"]:
        d = make_detector("RH", 6, dist, 0, absorption="identity")
        assert abs(decoherence_factor(d) - 1) < 1e-12


@given(phi=st.floats(-10, 10, allow_nan=False))
def test_factor_single_state_has_unit_modulus(phi):
    d = make_detector("LV", 1, "uniform", 0, absorption=np.array([[np.exp(1j * phi)]]))
    assert abs(abs(decoherence_factor(d)) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(M=st.integers(1, 12), seed=st.integers(0, 2**32), beta=st.floats(0, 50))
def test_factor_bounded_and_one_only_for_identity(M, seed, beta):
    d = make_detector("LH", M, f"gibbs:{beta}", seed)
    f = decoherence_factor(d)
    assert abs(f) <= 1 + 1e-12
    if M > 1:
        # a Haar unitary is never the identity, and then f != 1
        assert abs(f - 1) > 1e-12


def test_factor_is_weighted_diagonal():
    d = make_detector("RV", 3, "gibbs:1.5", 9)
    expected = sum(d.dist.weights[m] * overlap(d, m) for m in range(3))
    assert abs(decoherence_factor(d) - expected) < 1e-15


@pytest.mark.parametrize("M", [2, 4, 8, 16, 32])
def test_uniform_factor_scaling(M):
    f2 = haar_f2_samples(M, np.full(M, 1 / M), 10_000, seed=100 + M)
    assert abs(f2.mean() * M**2 - 1) < 0.10


@pytest.mark.parametrize("M,beta", [(4, 3.0), (8, 10.0), (16, 40.0)])
def test_general_factor_scaling(M, beta):
    dist = InternalDistribution.gibbs(M, beta)
    f2 = haar_f2_samples(M, dist.weights, 10_000, seed=7 * M)
    expected = dist.purity / M
    assert abs(f2.mean() - expected) / expected < 0.10


def test_overlap_examples():
    d = make_detector("LV", 5, absorption="identity")
    assert all(overlap(d, m) == 1 for m in range(5))
    with pytest.raises(IndexError):
        overlap(d, 5)


def test_overlap_haar_statistics():
    # |U_ii|^2 is Beta(1, M - 1) for Haar U, so E|U_ii| = Gamma(3/2) Gamma(M) / Gamma(M + 1/2)
    M = 16
    mags = np.array([[abs(overlap(d, m)) for m in range(M)]
                     for d in (make_detector("LV", M, seed=s) for s in range(2000))])
    assert np.all(mags <= 1)
    first = mags[:, 0]  # independent across matrices
    expected_mean = math.exp(gammaln(1.5) + gammaln(M) - gammaln(M + 0.5))
    assert abs(first.mean() - expected_mean) < 4 * first.std() / math.sqrt(len(first))
    assert abs((mags**2).mean() - 1 / M) < 0.05 / M
    assert stats.kstest(first**2, stats.beta(1, M - 1).cdf).pvalue > 1e-3


def test_sample_internal_uniform_frequencies():
    d = make_detector("LV", 4)
    rng = CounterRNG(12345)
    n = 100_000
    draws = np.array([sample_internal(d, rng) for _ in range(n)])
    freq = np.bincount(draws, minlength=4) / n
    assert np.all(np.abs(freq - 0.25) < 3 * math.sqrt(0.25 * 0.75 / n))


def test_sample_internal_ground_state_limit():
    d = make_detector("LV", 8, "gibbs:1e6")
    rng = np.random.default_rng(0)
    assert all(sample_internal(d, rng) == 0 for _ in range(1000))


def test_sample_internal_reproducible():
    d = make_detector("LV", 7, "gibbs:2")
    r1, r2 = CounterRNG(99), CounterRNG(99)
    assert [sample_internal(d, r1) for _ in range(50)] == [sample_internal(d, r2) for _ in range(50)]


def test_make_array_is_seeded_and_independent():
    a, b = make_array(5, 4), make_array(5, 4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.absorption, y.absorption)
    seeds = {d.seed for d in a}
    assert len(seeds) == 4
    assert [d.id for d in a] == list(DetectorId)
    mixed = make_array(1, (1, 2, 3, 4))
    assert [d.M for d in mixed] == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        make_array(1, (1, 2))


def test_rejects_non_unitary_absorption():
    with pytest.raises(ValueError, match="unitary"):
        make_detector("LV", 2, absorption=np.ones((2, 2)))
