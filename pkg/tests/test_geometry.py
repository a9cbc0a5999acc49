"""Point-process construction and spatial-statistics tests."""

import math

import numpy as np
import pytest
from scipy import stats

from mmtier import (
    LOS,
    BlockageModel,
    ChannelParams,
    NetworkParams,
    Point,
    RadialSampler,
    Window,
    build_tier_topology,
    csr_envelope,
    los_probability,
    ripley_k,
    sample_cluster,
    sample_ppp,
    select_scheduled,
    split_by_los,
    topology_to_csv,
    topology_to_gnuplot,
)

from conftest import intensity_for

ORIGIN = Point(0.0, 0.0)


@pytest.fixture(scope="module")
def serving_sampler(lam0, channel, quad):
    return RadialSampler.from_serving_distance(lam0, channel, quad)


class TestSamplePpp:
    def test_zero_intensity_empty(self):
        pts = sample_ppp(0.0, Window(ORIGIN, 100.0), np.random.default_rng(1))
        assert pts.shape == (0, 2)

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValueError):
            sample_ppp(-1.0, Window(ORIGIN, 100.0), np.random.default_rng(1))

    def test_poisson_mean_over_seeds(self):
        window = Window(ORIGIN, 10.0)
        intensity = 50.0 / window.area  # mean 50 per draw
        counts = [len(sample_ppp(intensity, window, np.random.default_rng(s)))
                  for s in range(400)]
        se = math.sqrt(50.0 / 400)
        assert abs(np.mean(counts) - 50.0) < 3.0 * se

    def test_deterministic_given_seed(self):
        window = Window(Point(3.0, -2.0), 50.0)
        a = sample_ppp(0.01, window, np.random.default_rng(77))
        b = sample_ppp(0.01, window, np.random.default_rng(77))
        np.testing.assert_array_equal(a, b)

    def test_points_inside_window(self):
        window = Window(Point(5.0, 5.0), 20.0)
        pts = sample_ppp(0.05, window, np.random.default_rng(3))
        assert len(pts) > 0
        assert np.all(np.hypot(pts[:, 0] - 5.0, pts[:, 1] - 5.0) <= 20.0)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            Window(ORIGIN, 0.0)
        with pytest.raises(ValueError):
            Point(math.inf, 0.0)


class TestSplitByLos:
    def test_always_los(self):
        pts = sample_ppp(0.01, Window(ORIGIN, 50.0), np.random.default_rng(2))
        los, nlos = split_by_los(pts, ORIGIN, BlockageModel.constant(1.0),
                                 np.random.default_rng(0))
        assert len(los) == len(pts) and len(nlos) == 0

    def test_never_los(self):
        pts = sample_ppp(0.01, Window(ORIGIN, 50.0), np.random.default_rng(2))
        los, nlos = split_by_los(pts, ORIGIN, BlockageModel.constant(0.0),
                                 np.random.default_rng(0))
        assert len(los) == 0 and len(nlos) == len(pts)

    def test_partition_is_exhaustive(self, blockage):
        pts = sample_ppp(0.02, Window(ORIGIN, 60.0), np.random.default_rng(5))
        los, nlos = split_by_los(pts, ORIGIN, blockage, np.random.default_rng(1))
        assert len(los) + len(nlos) == len(pts)
        recombined = np.vstack([los, nlos])
        assert np.array_equal(np.sort(recombined, axis=0), np.sort(pts, axis=0))

    def test_fraction_matches_blockage_probability(self, blockage):
        # Points pinned on a circle of fixed radius: the LOS count is binomial
        # with success probability P_L(r).
        r = 180.0
        n = 20_000
        angles = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        pts = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        los, _ = split_by_los(pts, ORIGIN, blockage, np.random.default_rng(11))
        p = los_probability(r, blockage)
        se = math.sqrt(p * (1.0 - p) / n)
        assert abs(len(los) / n - p) < 4.0 * se


class TestRadialSampler:
    def test_matches_rayleigh_nearest_law(self):
        lam = intensity_for(100.0)
        def pdf(r):
            return 2.0 * math.pi * r * lam * np.exp(-math.pi * lam * r * r)
        sampler = RadialSampler.from_pdf(pdf)
        draws = sampler.sample(np.random.default_rng(13), 20_000)
        # closed-form CDF of the nearest-neighbor law
        result = stats.ks_1samp(draws, lambda r: 1.0 - np.exp(-math.pi * lam * r * r))
        assert result.pvalue > 0.01

    def test_rejects_bad_tables(self):
        with pytest.raises(ValueError):
            RadialSampler(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError):
            RadialSampler(np.array([1.0, 0.5]), np.array([0.1, 0.1]))


class TestSampleCluster:
    def test_k_zero_rejected(self, serving_sampler):
        with pytest.raises(ValueError):
            sample_cluster(ORIGIN, 0, serving_sampler, np.random.default_rng(1))

    def test_distance_law_matches_quadrature(self, serving_sampler, serving_table):
        rng = np.random.default_rng(21)
        draws = np.concatenate([
            np.hypot(*sample_cluster(ORIGIN, 1, serving_sampler, rng).T)
            for _ in range(10_000)])
        result = stats.ks_1samp(draws, serving_table.cdf_at)
        assert result.pvalue > 0.01

    def test_marginal_independent_of_cluster_size(self, serving_sampler):
        rng = np.random.default_rng(22)
        singles = np.concatenate([
            np.hypot(*sample_cluster(ORIGIN, 1, serving_sampler, rng).T)
            for _ in range(4000)])
        six = np.vstack([sample_cluster(ORIGIN, 6, serving_sampler, rng)
                         for _ in range(4000)])
        # first member of each size-6 cluster against the singletons
        member = np.hypot(six[::6, 0], six[::6, 1])
        result = stats.ks_2samp(singles, member)
        assert result.pvalue > 0.01

    def test_isotropy(self, serving_sampler):
        rng = np.random.default_rng(23)
        center = Point(40.0, -10.0)
        pts = np.vstack([sample_cluster(center, 6, serving_sampler, rng)
                         for _ in range(4000)])
        angles = np.arctan2(pts[:, 1] + 10.0, pts[:, 0] - 40.0)
        counts, _ = np.histogram(angles, bins=24, range=(-math.pi, math.pi))
        result = stats.chisquare(counts)
        assert result.pvalue > 0.01

    def test_accepts_raw_pdf_callable(self):
        lam = intensity_for(50.0)
        def pdf(r):
            return 2.0 * math.pi * r * lam * np.exp(-math.pi * lam * r * r)
        pts = sample_cluster(ORIGIN, 3, pdf, np.random.default_rng(4))
        assert pts.shape == (3, 2)


class TestSelectScheduled:
    def test_tier_zero_returned_whole(self):
        tier = np.array([[0.0, 1.0], [2.0, 3.0]])
        out, idx = select_scheduled(tier, None, np.random.default_rng(1))
        np.testing.assert_array_equal(out, tier)
        np.testing.assert_array_equal(idx, [0, 1])

    def test_singleton_clusters_identity(self):
        tier = np.arange(10, dtype=float).reshape(5, 2)
        clusters = tier.reshape(5, 1, 2)
        out, idx = select_scheduled(tier, clusters, np.random.default_rng(2))
        np.testing.assert_array_equal(out, tier)

    def test_one_per_cluster(self):
        rng = np.random.default_rng(3)
        clusters = rng.normal(size=(40, 6, 2))
        tier = clusters.reshape(-1, 2)
        out, idx = select_scheduled(tier, clusters, rng)
        assert out.shape == (40, 2)
        assert np.all(idx // 6 == np.arange(40))  # one index per cluster block

    def test_empty_cluster_rejected(self):
        tier = np.empty((0, 2))
        clusters = np.empty((3, 0, 2))
        with pytest.raises(ValueError):
            select_scheduled(tier, clusters, np.random.default_rng(1))

    def test_union_mismatch_rejected(self):
        rng = np.random.default_rng(5)
        clusters = rng.normal(size=(4, 2, 2))
        tier = rng.normal(size=(8, 2))
        with pytest.raises(ValueError):
            select_scheduled(tier, clusters, rng)

    def test_selection_from_clusters_restores_csr(self, lam0, channel, quad,
                                                  serving_sampler):
        # Parents are a PPP; picking one point per displaced cluster should
        # look completely spatially random again.
        r0 = 100.0
        window = Window(ORIGIN, 8.0 * r0)
        rng = np.random.default_rng(31)
        parents = sample_ppp(lam0, window, rng)
        clusters = np.stack([sample_cluster(Point(*xy), 6, serving_sampler, rng)
                             for xy in parents])
        tier = clusters.reshape(-1, 2)
        selected, _ = select_scheduled(tier, clusters, rng)
        radii = r0 * np.array([0.25, 0.5, 1.0, 1.5])
        k_hat = ripley_k(selected, window, radii)
        lo, hi = csr_envelope(len(selected) / window.area, window, radii, 200,
                              np.random.default_rng(32))
        assert np.all((k_hat >= lo) & (k_hat <= hi))


class TestBuildTopology:
    def test_hop_counts_by_gain(self, lam0, channel, quad, serving_sampler):
        window = Window(ORIGIN, 600.0)
        net1 = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                             rf_chains=12, bandwidth=1.0, gain_per_hop=1)
        topo = build_tier_topology(net1, channel, window, np.random.default_rng(41),
                                   sampler=serving_sampler)
        assert topo.hops == 12 and len(topo.tiers) == 13

        net6 = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                             rf_chains=12, bandwidth=1.0, gain_per_hop=6)
        topo6 = build_tier_topology(net6, channel, window, np.random.default_rng(41),
                                    sampler=serving_sampler)
        assert topo6.hops == 2 and len(topo6.tiers) == 3
        assert [len(c[0]) for c in topo6.cluster_map] == [6, 6]

    def test_structural_invariants_and_intensity_sum(self, lam0, channel,
                                                     serving_sampler):
        window = Window(ORIGIN, 500.0)
        net = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0, gain_per_hop=6)
        topo = build_tier_topology(net, channel, window, np.random.default_rng(42),
                                   sampler=serving_sampler)
        topo.check_invariants()
        tier_intensity = lam0 * np.array([1.0] + [g for g in topo.gains])
        assert math.fsum(tier_intensity) == pytest.approx(net.lambda_total, rel=1e-12)
        # realized counts: tier i+1 has exactly gain * |scheduled| points
        for i, g in enumerate(topo.gains):
            assert len(topo.tiers[i + 1]) == g * len(topo.scheduled[i])

    def test_deterministic(self, lam0, channel, serving_sampler):
        window = Window(ORIGIN, 400.0)
        net = NetworkParams(lambda_total=7 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0, gain_per_hop=2)
        a = build_tier_topology(net, channel, window, np.random.default_rng(9),
                                sampler=serving_sampler)
        b = build_tier_topology(net, channel, window, np.random.default_rng(9),
                                sampler=serving_sampler)
        for ta, tb in zip(a.tiers, b.tiers):
            np.testing.assert_array_equal(ta, tb)

    def test_infeasible_split_rejected(self, lam0, channel, serving_sampler):
        window = Window(ORIGIN, 400.0)
        with pytest.raises(ValueError):
            NetworkParams(lambda_total=0.5 * lam0, lambda_tier0=lam0,
                          rf_chains=12, bandwidth=1.0)
        net = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0, gain_per_hop=5)
        with pytest.raises(ValueError):
            build_tier_topology(net, channel, window, np.random.default_rng(1),
                                sampler=serving_sampler)

    def test_floor_flag_records_residual(self, lam0, channel, serving_sampler):
        window = Window(ORIGIN, 400.0)
        net = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0, gain_per_hop=5)
        topo = build_tier_topology(net, channel, window, np.random.default_rng(1),
                                   allow_residual=True, sampler=serving_sampler)
        assert topo.hops == 2
        assert topo.residual_intensity == pytest.approx(2.0 * lam0, rel=1e-9)

    def test_per_hop_gains(self, lam0, channel, serving_sampler):
        window = Window(ORIGIN, 400.0)
        net = NetworkParams(lambda_total=13 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0)
        topo = build_tier_topology(net, channel, window, np.random.default_rng(2),
                                   gains=[6, 2, 4], sampler=serving_sampler)
        assert topo.gains == [6, 2, 4]
        assert topo.residual_intensity == pytest.approx(0.0, abs=1e-15)

    def test_no_multiplexing_tier_counts_are_poisson(self, lam0, channel,
                                                     serving_sampler):
        # With k=1 every tier inherits the tier-0 count, which is Poisson with
        # mean lambda0 * area; check mean and dispersion across seeds.
        from scipy import stats
        window = Window(ORIGIN, 500.0)
        net = NetworkParams(lambda_total=5 * lam0, lambda_tier0=lam0,
                            rf_chains=12, bandwidth=1.0, gain_per_hop=1)
        counts = np.array([
            [len(t) for t in build_tier_topology(
                net, channel, window, np.random.default_rng(1000 + s),
                sampler=serving_sampler).tiers]
            for s in range(200)])
        mean_expected = lam0 * window.area
        for tier in range(counts.shape[1]):
            col = counts[:, tier]
            se = math.sqrt(mean_expected / len(col))
            assert abs(col.mean() - mean_expected) < 3.5 * se
        # Poisson dispersion: (n-1) * s^2 / mean ~ chi^2(n-1)
        col = counts[:, 0].astype(float)
        statistic = (len(col) - 1) * col.var(ddof=1) / col.mean()
        lo, hi = stats.chi2.ppf([0.005, 0.995], len(col) - 1)
        assert lo < statistic < hi


class TestRipleyK:
    def test_ppp_close_to_pi_r_squared(self):
        window = Window(ORIGIN, 100.0)
        intensity = 400.0 / window.area
        rng = np.random.default_rng(51)
        radii = np.array([5.0, 10.0, 20.0])
        lo, hi = csr_envelope(intensity, window, radii, 200, np.random.default_rng(52))
        pts = sample_ppp(intensity, window, rng)
        k_hat = ripley_k(pts, window, radii)
        assert np.all((k_hat >= lo) & (k_hat <= hi))
        assert np.all(lo <= math.pi * radii**2) and np.all(math.pi * radii**2 <= hi)

    def test_tight_cluster_far_exceeds_poisson(self):
        window = Window(ORIGIN, 100.0)
        rng = np.random.default_rng(53)
        pts = 0.5 * rng.normal(size=(30, 2))  # everything within ~2 m
        k_hat = ripley_k(pts, window, np.array([5.0]))
        assert k_hat[0] > 100.0 * math.pi * 25.0

    def test_validation(self):
        window = Window(ORIGIN, 10.0)
        with pytest.raises(ValueError):
            ripley_k(np.array([[0.0, 0.0]]), window, [1.0])
        with pytest.raises(ValueError):
            ripley_k(np.zeros((5, 2)), window, [11.0])
        with pytest.raises(ValueError):
            ripley_k(np.zeros((5, 2)), window, [-1.0])


@pytest.fixture(scope="module")
def small_topo(lam0, channel, quad):
    sampler = RadialSampler.from_serving_distance(lam0, channel, quad)
    net = NetworkParams(lambda_total=3 * lam0, lambda_tier0=lam0,
                        rf_chains=12, bandwidth=1.0, gain_per_hop=1)
    return build_tier_topology(net, channel, Window(ORIGIN, 300.0),
                               np.random.default_rng(61), sampler=sampler)


class TestSerialization:
    @pytest.fixture
    def topo(self, small_topo):
        return small_topo

    def test_csv_roundtrippable(self, topo):
        text = topology_to_csv(topo)
        lines = text.strip().split("\n")
        assert lines[0] == "tier,x,y,scheduled"
        assert len(lines) - 1 == sum(len(t) for t in topo.tiers)
        first = lines[1].split(",")
        assert float(first[1]) == topo.tiers[0][0, 0]  # repr round-trips exactly

    def test_gnuplot_blocks(self, topo):
        text = topology_to_gnuplot(topo)
        assert text.count("# tier") == len(topo.tiers)

    def test_empty_topology_serializes(self, channel, quad):
        lam = 1e-9
        sampler = RadialSampler.from_pdf(
            lambda r: 2 * math.pi * r * lam * np.exp(-math.pi * lam * r * r),
            r_max=1e5)
        net = NetworkParams(lambda_total=3e-9, lambda_tier0=lam, rf_chains=12,
                            bandwidth=1.0, gain_per_hop=1)
        topo = build_tier_topology(net, channel, Window(ORIGIN, 1.0),
                                   np.random.default_rng(1), sampler=sampler)
        assert topology_to_csv(topo) == "tier,x,y,scheduled\n"
        assert topology_to_gnuplot(topo).count("# tier") == 3
