import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import binomial_ci, random_graph
from grouprr.graph import Graph
from grouprr.primitives import (
    DUMMY,
    HashScheme,
    amplified_epsilon,
    debias_params,
    omega,
    rr_keep_probability,
    smallest_prime_above,
)
from grouprr.protocol import (
    CssView,
    ObfuscatedList,
    Publication,
    central_server_sampling,
    css_view,
    degree_sharing,
    edge_estimate,
    expected_upload,
    group_rr_step,
    ledger,
    publish_one,
)
from grouprr.streams import TrialStreams


def triangle_graph():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


class TestDegreeSharing:
    def test_vanishing_noise(self):
        g = random_graph(30, 0.3, np.random.default_rng(0))
        reports = degree_sharing(g, 1e6, TrialStreams(1))
        assert all(abs(r.d_tilde - g.low_degrees[r.user]) < 1e-3 for r in reports)

    def test_low_degree_of_last_triangle_node(self):
        reports = degree_sharing(triangle_graph(), 1e9, TrialStreams(0))
        assert round(reports[2].d_tilde) == 2 and round(reports[0].d_tilde) == 0

    def test_empty_graph_is_pure_noise(self):
        g = Graph.from_edges(4000, np.zeros((0, 2)))
        d = np.array([r.d_tilde for r in degree_sharing(g, 1.0, TrialStreams(2))])
        assert abs(d.mean()) < 4 * math.sqrt(2 / len(d))

    def test_full_degree(self):
        g = triangle_graph()
        reports = degree_sharing(g, 1e9, TrialStreams(0), kind="full")
        assert [round(r.d_tilde) for r in reports] == [2, 2, 2]

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            degree_sharing(triangle_graph(), 0.0, TrialStreams(0))


class TestGroupRR:
    def test_no_sampling_no_flips(self):
        g = random_graph(40, 0.3, np.random.default_rng(3))
        sch = HashScheme.draw(g.n, 1, np.random.default_rng(4))
        pub = group_rr_step(g, sch, 60.0, TrialStreams(5)).publication
        for i in range(g.n):
            expected = sorted({int(sch.bins(i, j)) for j in g.lower_neighbors(i)})
            assert pub.list_of(i).one_bins.tolist() == expected

    def test_zero_out_convention(self):
        # with negligible flipping the published bins are exactly the valid lower-neighbor representatives
        g = random_graph(60, 0.4, np.random.default_rng(6))
        sch = HashScheme.draw(g.n, 4, np.random.default_rng(7))
        run = group_rr_step(g, sch, 60.0, TrialStreams(8), record_representatives=True)
        for i in range(g.n):
            reps = run.representatives[i]
            low = set(g.lower_neighbors(i).tolist())
            expected = [t for t, c in enumerate(reps) if c != DUMMY and c < i and c in low]
            assert run.publication.list_of(i).one_bins.tolist() == expected
            assert not any(reps[t] > i for t in expected)

    def test_representatives_belong_to_their_bin(self):
        g = random_graph(50, 0.2, np.random.default_rng(0))
        sch = HashScheme.draw(g.n, 5, np.random.default_rng(1))
        run = group_rr_step(g, sch, 1.0, TrialStreams(2), record_representatives=True)
        for i in range(0, g.n, 7):
            for t, c in enumerate(run.representatives[i]):
                if c != DUMMY:
                    assert int(sch.bins(i, c)) == t

    def test_empty_graph_upload_mean(self):
        n, s, eps1 = 200, 4, 1.0
        g = Graph.from_edges(n, np.zeros((0, 2)))
        sch = HashScheme.draw(n, s, np.random.default_rng(0))
        pub = group_rr_step(g, sch, eps1, TrialStreams(1)).publication
        eps_prime = amplified_epsilon(eps1, s)
        q0 = 1 - rr_keep_probability(eps_prime)
        sizes = pub.sizes()
        se = math.sqrt(sch.m * q0 * (1 - q0) / n)
        assert abs(sizes.mean() - sch.m * q0) < 3 * se
        assert abs(sizes.mean() - expected_upload(0, sch.m, s, eps_prime)) < 3 * se

    def test_scheme_size_mismatch(self):
        with pytest.raises(ValueError):
            group_rr_step(triangle_graph(), HashScheme.draw(5, 2, np.random.default_rng(0)), 1.0, TrialStreams(0))

    def test_deterministic(self):
        g = random_graph(40, 0.2, np.random.default_rng(0))
        sch = HashScheme.draw(g.n, 3, np.random.default_rng(1))
        a = group_rr_step(g, sch, 1.0, TrialStreams(9, 2)).publication
        b = group_rr_step(g, sch, 1.0, TrialStreams(9, 2)).publication
        assert np.array_equal(a.bins, b.bins) and np.array_equal(a.indptr, b.indptr)


def publication_for(n=30, s=3, eps1=1.0, seed=0):
    g = random_graph(n, 0.3, np.random.default_rng(seed))
    sch = HashScheme.draw(n, s, np.random.default_rng(seed + 1))
    return g, sch, group_rr_step(g, sch, eps1, TrialStreams(seed + 2)).publication


class TestCss:
    def test_full_rate_is_identity(self):
        _, _, pub = publication_for()
        for v in central_server_sampling(pub, 1.0, TrialStreams(0)):
            assert all(a == b for a, b in zip(v.lists, pub.lists()))

    def test_retention_rate(self):
        _, _, pub = publication_for(n=60)
        views = central_server_sampling(pub, 0.5, TrialStreams(3))
        kept = sum(v.retained_count() for v in views)
        total = pub.total_ones * len(views)
        assert abs(kept / total - 0.5) < binomial_ci(0.5, total)

    def test_viewers_independent(self):
        _, _, pub = publication_for(n=80)
        a = css_view(pub, 0, 0.5, TrialStreams(4)).mask.astype(float)
        b = css_view(pub, 1, 0.5, TrialStreams(4)).mask.astype(float)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 4 / math.sqrt(len(a))

    def test_retained_subset(self):
        _, _, pub = publication_for()
        v = css_view(pub, 2, 0.3, TrialStreams(1))
        for j in range(pub.n):
            assert set(v.retained(j).one_bins.tolist()) <= set(pub.list_of(j).one_bins.tolist())

    def test_rejects_bad_rate(self):
        _, _, pub = publication_for()
        for mu in (0.0, 1.5):
            with pytest.raises(ValueError):
                css_view(pub, 0, mu, TrialStreams(0))


class TestEdgeEstimate:
    def test_rejects_wrong_direction(self):
        _, sch, pub = publication_for()
        view = css_view(pub, 0, 1.0, TrialStreams(0))
        params = debias_params(2.0, sch.m, sch.s, amplified_epsilon(1.0, sch.s))
        with pytest.raises(ValueError):
            edge_estimate(view, sch, 3, 3, params)
        with pytest.raises(ValueError):
            edge_estimate(view, sch, 3, 5, params)

    def test_absent_bin_gives_minus_sigma(self):
        sch = HashScheme.draw(10, 2, np.random.default_rng(0))
        pub = Publication.from_lists([ObfuscatedList(i, [], sch.m) for i in range(10)])
        view = css_view(pub, 0, 1.0, TrialStreams(0))
        params = debias_params(3.0, sch.m, sch.s, 2.0)
        assert edge_estimate(view, sch, 7, 2, params) == pytest.approx(-params.sigma_tilde)

    def test_exact_debiasing_composition(self):
        # P[bit = 1] = (a + sigma) / omega, and the affine map recovers a exactly
        for s, m, d, eps1 in [(2, 10, 0, 0.5), (5, 100, 5, 1.0), (10, 100, 50, 2.0)]:
            eps_prime = amplified_epsilon(eps1, s)
            p = debias_params(d, m, s, eps_prime)
            for a, prob in ((1, p.p_present_published(d)), (0, p.p_absent_published(d))):
                assert prob == pytest.approx((a + p.sigma_tilde) / p.omega, abs=1e-12)
                mean = prob * p.estimate(1) + (1 - prob) * p.estimate(0)
                assert mean == pytest.approx(a, abs=1e-9)

    def test_unbiased_monte_carlo(self):
        g = random_graph(20, 0.4, np.random.default_rng(11))
        s, eps1, mu_c, runs = 3, 1.0, 0.5, 12000
        eps_prime = amplified_epsilon(eps1, s)
        rng = np.random.default_rng(12)
        pairs_rng = np.random.default_rng(13)
        pairs = []
        while len(pairs) < 10:
            j = int(pairs_rng.integers(2, g.n))
            k = int(pairs_rng.integers(0, j))
            if (j, k) not in pairs:
                pairs.append((j, k))
        samples = {pk: [] for pk in pairs}
        d = g.low_degrees
        for _ in range(runs):
            sch = HashScheme.draw(g.n, s, rng)
            for j, k in pairs:
                ones, _ = publish_one(g, sch, j, eps_prime, rng)
                d_tilde = d[j] + rng.laplace(0, 1.0)
                params = debias_params(d_tilde, sch.m, s, eps_prime)
                kept = ones[rng.random(len(ones)) < mu_c]
                samples[(j, k)].append(params.estimate(int(sch.bins(j, k)) in kept, mu_c))
        for (j, k), xs in samples.items():
            xs = np.asarray(xs)
            truth = float(g.has_edge(j, k))
            assert abs(xs.mean() - truth) < 4 * xs.std() / math.sqrt(runs), (j, k)

    def test_cross_publisher_covariance_vanishes(self):
        g = random_graph(30, 0.3, np.random.default_rng(2))
        s, eps_prime, runs = 3, amplified_epsilon(1.0, 3), 20000
        rng = np.random.default_rng(3)
        x, y = [], []
        for _ in range(runs):
            sch = HashScheme.draw(g.n, s, rng)
            w = omega(sch.m, s, eps_prime)
            a, _ = publish_one(g, sch, 25, eps_prime, rng)
            b, _ = publish_one(g, sch, 28, eps_prime, rng)
            x.append(w * (int(sch.bins(25, 4)) in a))
            y.append(w * (int(sch.bins(28, 4)) in b))
        x, y = np.asarray(x), np.asarray(y)
        cov = np.mean((x - x.mean()) * (y - y.mean()))
        assert abs(cov) < 4 * x.std() * y.std() / math.sqrt(runs)


def exact_same_publisher_covariance(p: int, s: int, eps_prime: float, neighbors: set, k1: int, k2: int, n: int):
    """Covariance of two estimates from one publisher, averaged over every hash ``(theta, phi)``."""
    m = -(-p // s)
    q1 = rr_keep_probability(eps_prime)
    theta, phi = np.meshgrid(np.arange(1, p), np.arange(p), indexing="ij")
    theta, phi = theta.ravel(), phi.ravel()
    keys = np.arange(p)
    bins = ((theta[:, None] * keys[None, :] + phi[:, None]) % p) % m
    adjacent = np.zeros(p, dtype=bool)
    adjacent[list(neighbors)] = True
    # P(bit of a bin is 1) = q0 + (q1 - q0) * (#adjacent members) / s
    flat = (np.arange(len(theta))[:, None] * m + bins)[:, adjacent].ravel()
    adj_in_bin = np.bincount(flat, minlength=len(theta) * m).reshape(len(theta), m)
    prob = (1 - q1) + (2 * q1 - 1) * adj_in_bin / s
    rows = np.arange(len(theta))
    b1, b2 = bins[:, k1], bins[:, k2]
    p1, p2 = prob[rows, b1], prob[rows, b2]
    same = b1 == b2
    joint = np.where(same, p1, p1 * p2)
    return joint.mean() - p1.mean() * p2.mean(), m


class TestSamePublisherCovariance:
    S = 2
    PRIMES = (23, 47, 97, 191, 389)

    def scaled(self, p, neighbors):
        eps_prime = amplified_epsilon(1.0, self.S)
        cov, m = exact_same_publisher_covariance(p, self.S, eps_prime, neighbors, 1, 2, p - 1)
        w = omega(m, self.S, eps_prime)
        collision = w * w * 0.25 * 2 * (self.S - 1) / (m * self.S - 1)
        return w * w * cov, m, collision

    def test_collision_term_shrinks_like_one_over_m(self):
        ms, covs = [], []
        for p in self.PRIMES:
            cov, m, collision = self.scaled(p, set())
            assert 0 < cov <= collision
            ms.append(m)
            covs.append(cov)
        slope = np.polyfit(np.log(ms), np.log(covs), 1)[0]
        assert abs(slope + 1) < 0.15, slope

    def test_random_neighbourhood_stays_near_collision_bound(self):
        for p in self.PRIMES:
            rng = np.random.default_rng(p)
            nb = set(np.flatnonzero(rng.random(p - 1) < 0.3).tolist()) - {1, 2}
            cov, _, collision = self.scaled(p, nb)
            assert abs(cov) <= 2 * collision

    def test_periodic_neighbourhood_does_not_decay(self):
        # linear hashes are only pairwise independent: the bin partners of keys 1 and 2
        # are x and x + 1, so a period-3 neighbour set correlates them for every m
        covs = [self.scaled(p, set(range(0, p - 2, 3)))[0] for p in self.PRIMES[2:]]
        assert all(c < -0.05 for c in covs)


class TestLedger:
    def test_all_empty(self):
        pub = Publication.from_lists([ObfuscatedList(i, [], 16) for i in range(4)])
        led = ledger(pub, central_server_sampling(pub, 1.0, TrialStreams(0)))
        assert led.total_upload == 0 and led.total_download == 0

    def test_single_publisher(self):
        pub = Publication.from_lists([ObfuscatedList(0, [1, 5, 9, 100, 1000], 1024)])
        led = ledger(pub, central_server_sampling(pub, 1.0, TrialStreams(0)))
        assert led.bits_per_index == 10
        assert led.upload_bits.tolist() == [50] and led.download_bits.tolist() == [50]

    def test_download_matches_retained(self):
        _, _, pub = publication_for(n=40)
        views = central_server_sampling(pub, 0.4, TrialStreams(1))
        led = ledger(pub, views)
        for v in views:
            assert led.download_bits[v.viewer] == sum(len(v.retained(j)) for j in range(pub.n)) * led.bits_per_index

    def test_without_css_everyone_downloads_everything(self):
        _, _, pub = publication_for(n=20)
        led = ledger(pub)
        assert (led.download_bits == pub.total_ones * led.bits_per_index).all()

    def test_download_monotone_in_s(self):
        g = random_graph(300, 0.1, np.random.default_rng(0))
        totals = []
        for s in (1, 2, 4, 8):
            sch = HashScheme.draw(g.n, s, np.random.default_rng(1))
            pub = group_rr_step(g, sch, 1.0, TrialStreams(2)).publication
            totals.append(ledger(pub).total_download)
        assert all(a >= b for a, b in zip(totals, totals[1:]))


class TestBinaryDump:
    @given(st.integers(1, 2**20), st.data())
    def test_roundtrip(self, m, data):
        bins = sorted(data.draw(st.sets(st.integers(0, m - 1), max_size=50)))
        lst = ObfuscatedList(3, bins, m)
        raw = lst.to_bytes()
        assert len(raw) == 8 + 4 * len(bins)
        assert ObfuscatedList.from_bytes(3, raw) == lst

    def test_layout(self):
        raw = ObfuscatedList(0, [2, 7], 9).to_bytes()
        assert raw == bytes([9, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 7, 0, 0, 0])

    def test_rejects_truncated(self):
        with pytest.raises(ValueError):
            ObfuscatedList.from_bytes(0, b"\x01\x00\x00\x00\x02\x00\x00\x00\x00")

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            ObfuscatedList(0, [3, 1], 5)


def test_expected_upload_formula_matches_population_view():
    # m q0 + (d/s)(q1 - q0) equals (e d + (ms - d)) / ((1 + e) s) with e = exp(eps')
    for m, s, d, eps_prime in [(10, 2, 3, 1.0), (201, 10, 40, 2.9), (7, 7, 0, 0.5)]:
        e = math.exp(eps_prime)
        alt = (e * d + (m * s - d)) / ((1 + e) * s)
        assert expected_upload(d, m, s, eps_prime) == pytest.approx(alt)


def test_smallest_prime_used_by_draw():
    sch = HashScheme.draw(100, 7, np.random.default_rng(0))
    assert sch.p == smallest_prime_above(100) and sch.m == -(-sch.p // 7)
