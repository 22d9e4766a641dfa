import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aoi_edge.amc import (
    StateIndex,
    aoi_distribution,
    aoi_mean,
    build_amc,
    build_rmc,
    initial_vector,
    prepare_amc,
    solve_tagged_aoi,
)
from aoi_edge.interference import METHODS
from aoi_edge.mmpp import MarkovArrivalModel, dedicated_server_departure_map, dedicated_server_model, superpose
from aoi_edge.numerics import ctmc_stationary
from aoi_edge.scenario import Scenario

import oracles

seeds = st.integers(0, 2**32 - 1)
rates = st.floats(0.1, 10.0)


def random_interference(rng, M, as_map):
    q = oracles.random_generator(rng, M, density=rng.uniform(0.3, 1.0))
    if not as_map:
        return MarkovArrivalModel.from_mmpp(q, rng.uniform(0.0, 3.0, M))
    # split every transition and a diagonal rate between D0 and D1
    d1 = np.where(q > 0, q * rng.uniform(0, 1, q.shape), 0.0) + np.diag(rng.uniform(0, 2, M))
    d0 = q - np.where(q > 0, d1, 0.0)
    np.fill_diagonal(d0, np.diag(q) - np.diag(d1))
    return MarkovArrivalModel(d0, d1)


def solved(lam, mu, sigma, intf):
    amc = build_amc(lam, mu, sigma, intf)
    return initial_vector(amc, ctmc_stationary(build_rmc(lam, mu, sigma, intf).generator))


def production_order(amc, states):
    idx = amc.index
    out = []
    for st_ in states:
        if st_[0] == "T":
            out.append(idx.transmitter(st_[1], st_[2]))
        elif st_[0] == "E":
            out.append(idx.edge(st_[1], st_[2]))
        else:
            out.append(idx.post(st_[1], st_[2], st_[3]))
    return np.array(out)


class TestLayout:
    @pytest.mark.parametrize("M", [1, 2, 5])
    def test_bijective(self, M):
        idx = StateIndex(M)
        labels = [idx.label(k) for k in range(idx.size)]
        assert len(set(labels)) == 8 * M
        for k, (cls, m, i, j) in enumerate(labels):
            back = {"TransmitterHolding": lambda: idx.transmitter(m, j),
                    "EdgeHolding": lambda: idx.edge(m, i),
                    "PostDelivery": lambda: idx.post(m, i, j)}[cls]()
            assert back == k
        with pytest.raises(IndexError):
            idx.label(8 * M)

    def test_single_state_interference(self):
        amc = build_amc(1.0, 1.5, 5.0, MarkovArrivalModel.poisson(0.7))
        assert amc.S.shape == (8, 8)
        assert amc.S[amc.index.transmitter(0, 0), amc.index.edge(0, 0)] == 1.5

    def test_rmc_edge_clearing_rate(self):
        r, sigma = 0.7, 5.0
        rmc = build_rmc(1.0, 1.5, sigma, MarkovArrivalModel.poisson(r))
        assert rmc.generator.shape == (4, 4)
        for i in (0, 1):
            assert rmc.generator[rmc.index(0, i, 1), rmc.index(0, i, 0)] == pytest.approx(r + sigma)

    @given(rates, rates, rates)
    def test_rmc_transmitter_marginal(self, lam, mu, sigma):
        rmc = build_rmc(lam, mu, sigma, MarkovArrivalModel.poisson(0.0))
        pi = ctmc_stationary(rmc.generator)
        assert pi[2] + pi[3] == pytest.approx(lam / (lam + mu), rel=1e-12)

    def test_initial_vector_by_hand(self):
        amc = solved(1.0, 1.0, 1.0, MarkovArrivalModel.poisson(0.0))
        np.testing.assert_allclose(amc.alpha[:2], [5 / 8, 3 / 8], atol=1e-15)
        assert amc.alpha[2:].sum() == 0.0

    def test_pdf_requires_alpha(self):
        with pytest.raises(ValueError, match="initial vector"):
            aoi_mean(build_amc(1.0, 1.0, 1.0, MarkovArrivalModel.poisson(0.0)))

    def test_invalid_rates(self):
        with pytest.raises(ValueError):
            build_amc(0.0, 1.0, 1.0, MarkovArrivalModel.poisson(0.0))


class TestAgainstBruteForce:
    @given(seeds, st.sampled_from([1, 2, 4, 8]), st.booleans(), rates, rates, rates)
    def test_chain_entries(self, seed, M, as_map, lam, mu, sigma):
        intf = random_interference(np.random.default_rng(seed), M, as_map)
        amc = solved(lam, mu, sigma, intf)
        bf = oracles.brute_force_chains(lam, mu, sigma, intf.d0, intf.d1)
        p = production_order(amc, bf["states"])
        np.testing.assert_allclose(amc.S[np.ix_(p, p)], bf["S"], rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(amc.s[p], bf["s"], rtol=1e-14)
        np.testing.assert_allclose(amc.u[p], bf["u"], rtol=1e-14)
        np.testing.assert_array_equal(amc.h[p], bf["h"])
        np.testing.assert_allclose(amc.alpha[p], bf["alpha"], atol=1e-10)
        rmc = build_rmc(lam, mu, sigma, intf)
        np.testing.assert_allclose(rmc.generator, bf["rmc"], rtol=1e-14, atol=1e-14)

    @given(seeds, st.sampled_from([1, 2, 4, 8]), st.booleans(), rates, rates, rates)
    def test_generator_closure_and_absorption(self, seed, M, as_map, lam, mu, sigma):
        intf = random_interference(np.random.default_rng(seed), M, as_map)
        amc = solved(lam, mu, sigma, intf)
        rows = amc.S.sum(axis=1) + amc.s + amc.u
        assert np.abs(rows).max() <= 1e-10 * max(1.0, np.abs(amc.S).max())
        assert np.abs(build_rmc(lam, mu, sigma, intf).generator.sum(axis=1)).max() <= 1e-10
        absorb = -np.linalg.solve(amc.S, amc.s + amc.u)
        np.testing.assert_allclose(absorb, 1.0, atol=1e-9)

    @given(seeds, st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.0, 3.0))
    def test_mean_two_paths_single_state(self, seed, lam, mu, sigma, r):
        intf = MarkovArrivalModel.poisson(r)
        amc = solved(lam, mu, sigma, intf)
        bf = oracles.brute_force_chains(lam, mu, sigma, intf.d0, intf.d1)
        ref = oracles.explicit_inverse_mean(bf["S"], bf["alpha"], bf["h"])
        assert aoi_mean(amc) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("M,as_map", [(2, False), (4, True), (8, False)])
    def test_mean_and_pdf_two_paths(self, M, as_map):
        intf = random_interference(np.random.default_rng(M), M, as_map)
        amc = solved(1.0, 1.3, 4.0, intf)
        bf = oracles.brute_force_chains(1.0, 1.3, 4.0, intf.d0, intf.d1)
        assert aoi_mean(amc) == pytest.approx(oracles.explicit_inverse_mean(bf["S"], bf["alpha"], bf["h"]), rel=1e-10)
        grid = np.array([0.0, 0.3, 1.0, 2.5, 7.0, 20.0])
        res = aoi_distribution(amc, grid)
        ref = [oracles.explicit_pdf(bf["S"], bf["alpha"], bf["h"], x) for x in grid]
        np.testing.assert_allclose(res.pdf, ref, rtol=1e-8, atol=1e-13)


class TestDistribution:
    def test_line_network_mean(self):
        # no interference: the tagged source sees two preemptive servers in tandem
        for lam, mu, sigma in [(1.0, 1.0, 5.0), (1.0, 1.0, 1.0), (2.0, 0.5, 3.0)]:
            amc = solved(lam, mu, sigma, MarkovArrivalModel.poisson(0.0))
            assert aoi_mean(amc) == pytest.approx(1 / lam + 1 / mu + 1 / sigma, rel=1e-12)

    def test_fast_edge_limit(self):
        mean = solve_tagged_aoi(Scenario(1, 1.0, 1.0, 1e4), with_pdf=False).mean
        assert 1.998 <= mean <= 2.002

    @given(seeds, st.sampled_from([1, 2, 4]), st.booleans())
    def test_identities(self, seed, M, as_map):
        rng = np.random.default_rng(seed)
        lam, mu, sigma = rng.uniform(0.3, 4.0, 3)
        res = aoi_distribution(solved(lam, mu, sigma, random_interference(rng, M, as_map)))
        assert res.pdf[0] == 0.0 and res.grid[0] == 0.0
        assert res.pdf.min() >= -1e-12
        assert np.all(np.diff(res.cdf) >= -1e-12)
        assert res.normalization_residual <= 1e-6
        assert res.quadrature_mean == pytest.approx(res.mean, rel=1e-3)

    def test_explicit_grid(self):
        amc = solved(1.0, 1.0, 5.0, dedicated_server_model(1.0, 1.2))
        res = aoi_distribution(amc, np.linspace(0.0, 40.0, 4001))
        assert res.normalization_residual < 1e-6
        assert res.cdf[-1] == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("grid", [[], [-1.0, 1.0], [0.0, 2.0, 1.0], [0.0, np.inf]])
    def test_bad_grid(self, grid):
        amc = solved(1.0, 1.0, 5.0, MarkovArrivalModel.poisson(1.0))
        with pytest.raises(ValueError):
            aoi_distribution(amc, grid)

    def test_debug_dump(self):
        amc = solved(1.0, 1.0, 5.0, dedicated_server_departure_map(1.0, 1.2))
        dump = json.loads(amc.to_json())
        assert dump["transient_states"] == 16 and len(dump["labels"]) == 16
        S = np.zeros((16, 16))
        for r, c, v in dump["S"]:
            S[r, c] = v
        np.testing.assert_array_equal(S, amc.S)
        assert sum(v for _, v in dump["alpha"]) == pytest.approx(1.0)


class TestTaggedSolve:
    @pytest.mark.parametrize("method", METHODS)
    def test_exchangeable(self, method):
        scen = Scenario(3, 1.0, 1.3, 5.0)
        a = solve_tagged_aoi(scen, method, with_pdf=False).mean
        b = solve_tagged_aoi(scen.with_tagged(2), method, with_pdf=False).mean
        c = solve_tagged_aoi(scen.with_tagged(3), method, with_pdf=False).mean
        assert b == pytest.approx(a, rel=1e-9) and c == pytest.approx(a, rel=1e-9)

    @given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.5, 10.0))
    def test_two_sources_reduction_is_exact(self, l1, l2, m1, m2, sigma):
        scen = Scenario(2, (l1, l2), (m1, m2), sigma)
        exact = solve_tagged_aoi(scen, "exact", with_pdf=False).mean
        assert solve_tagged_aoi(scen, "mmpp2", with_pdf=False).mean == pytest.approx(exact, rel=1e-9)

    @pytest.mark.parametrize("n,delta", [(3, 0.2), (4, 0.2), (5, 1.0), (6, 1.0)])
    def test_poisson_worse_than_two_state(self, n, delta):
        scen = Scenario.heterogeneous(n, delta)
        exact, mmpp2, poisson = (solve_tagged_aoi(scen, m, with_pdf=False).mean for m in ("exact", "mmpp2", "poisson"))
        assert abs(poisson - exact) > abs(mmpp2 - exact)

    def test_tagged_relabelling(self):
        # tagging source 3 equals tagging source 1 after swapping their rates
        a = Scenario(3, (1.0, 0.8, 1.2), (1.0, 1.2, 1.4), 5.0, tagged=3)
        b = Scenario(3, (1.2, 0.8, 1.0), (1.4, 1.2, 1.0), 5.0, tagged=1)
        for method in METHODS:
            ra = solve_tagged_aoi(a, method, with_pdf=False).mean
            rb = solve_tagged_aoi(b, method, with_pdf=False).mean
            assert ra == pytest.approx(rb, rel=1e-9)

    def test_result_metadata(self):
        res = solve_tagged_aoi(Scenario.heterogeneous(4, 0.2), "exact")
        assert res.interference_order == 8 and res.fallback is None
        assert res.grid.size == res.pdf.size == res.cdf.size

    def test_single_source(self):
        amc, intf = prepare_amc(Scenario(1, 1.0, 1.0, 5.0), "exact")
        assert intf.order == 1 and amc.index.size == 8
        assert aoi_mean(amc) == pytest.approx(2.2, rel=1e-12)
