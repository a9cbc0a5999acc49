"""Spatial construction of the tiered AP network.

Tier 0 is a homogeneous PPP on a disk window; every later tier is grown by
displacing each scheduled transmitter into a cluster of receivers whose radial
distance follows the serving-distance law. Point sets are (n, 2) float arrays;
single locations are `Point` values.

Also holds the spatial statistics used to test the construction (Ripley's K
with border correction, CSR envelopes) and the CSV/gnuplot dumps.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import analytics
from .channel import BlockageModel, ChannelParams, los_probability
from .analytics import QuadratureSpec, DEFAULT_QUAD


@dataclass(frozen=True)
class Point:
    """A planar location in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Window:
    """Disk observation window approximating the infinite plane."""

    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("window radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @classmethod
    def default_for(cls, lambda0: float, radius_factor: float = 10.0) -> "Window":
        """Origin-centered disk of radius_factor mean inter-AP spacings."""
        if not lambda0 > 0.0:
            raise ValueError("intensity must be positive")
        r0 = math.sqrt(1.0 / (math.pi * lambda0))
        return cls(Point(0.0, 0.0), radius_factor * r0)

    def with_guard(self, hops: int, step_rms_m: float, factor: float = 2.5) -> "Window":
        """Padded build window: the displacement chain diffuses by roughly
        sqrt(hops) * step RMS, so sampling parents on the padded disk keeps the
        late tiers homogeneous over this (nominal) window."""
        guard = factor * math.sqrt(max(hops, 1)) * step_rms_m
        return Window(self.center, self.radius + guard)


def sample_ppp(intensity: float, window: Window, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the window: Poisson count, uniform positions.

    Returns an (n, 2) array. Identical (intensity, window, rng state) gives
    bit-identical output.
    """
    if intensity < 0.0:
        raise ValueError("intensity must be non-negative")
    n = rng.poisson(intensity * window.area)
    radii = window.radius * np.sqrt(rng.random(n))
    angles = 2.0 * math.pi * rng.random(n)
    pts = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return pts + window.center.as_array()


def split_by_los(points: np.ndarray, origin: Point, blockage: BlockageModel,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Mark each point LOS with probability P_L(distance to origin), independently.

    Returns (los, nlos) arrays; together they partition the input.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - origin.x, pts[:, 1] - origin.y)
    is_los = rng.random(len(pts)) < los_probability(d, blockage)
    return pts[is_los], pts[~is_los]


class RadialSampler:
    """Inverse-CDF sampler for an isotropic displacement's radial distance.

    Built from any radial density via a dense table; `sample` consumes one
    uniform variate per draw, so sampling stays reproducible and cheap.
    """

    def __init__(self, radii: np.ndarray, pdf: np.ndarray):
        radii = np.asarray(radii, dtype=float)
        pdf = np.asarray(pdf, dtype=float)
        if radii.ndim != 1 or radii.shape != pdf.shape or len(radii) < 2:
            raise ValueError("need matching 1-d radius/pdf tables of length >= 2")
        if np.any(np.diff(radii) <= 0.0) or np.any(pdf < 0.0):
            raise ValueError("radii must increase strictly and the pdf be non-negative")
        seg = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(radii)
        cdf = np.concatenate([[0.0], np.cumsum(seg)])
        mass = cdf[-1]
        if not mass > 0.0:
            raise ValueError("pdf table carries no mass")
        self.mass = float(mass)
        self.rms = float(math.sqrt(np.trapezoid(radii**2 * pdf, radii) / mass))
        self._radii = radii
        self._cdf = cdf / mass

    @classmethod
    def from_pdf(cls, pdf, r_max: float | None = None, grid_size: int = 4096) -> "RadialSampler":
        """Tabulate a callable density (must accept ndarray input); if r_max is
        omitted, grow until the mass converges."""
        if r_max is None:
            r_max = 1.0
            prev_mass = -1.0
            for _ in range(80):
                grid = np.linspace(0.0, r_max, grid_size + 1)
                vals = np.asarray(pdf(grid[1:]), dtype=float)
                mass = float(np.trapezoid(np.concatenate([[0.0], vals]), grid))
                if prev_mass > 0.0 and mass - prev_mass < 1e-12 * max(mass, 1.0):
                    break
                prev_mass = mass
                r_max *= 2.0
            else:
                raise ValueError("radial pdf mass did not converge; pass r_max explicitly")
        grid = np.linspace(0.0, r_max, grid_size + 1)
        vals = np.concatenate([[0.0], np.asarray(pdf(grid[1:]), dtype=float)])
        return cls(grid, vals)

    @classmethod
    def from_serving_distance(cls, lam: float, channel: ChannelParams,
                              quad: QuadratureSpec = DEFAULT_QUAD) -> "RadialSampler":
        """Sampler for the max-average-power association distance at intensity lam."""
        table = analytics.tabulate_serving_distance(lam, channel, quad)
        return cls(table.radii, table.pdf_total)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return np.interp(u, self._cdf, self._radii)


def sample_cluster(center: Point, k: int, serving_pdf, rng: np.random.Generator) -> np.ndarray:
    """k i.i.d. receiver positions, isotropic around the cluster center.

    Radial distances follow ``serving_pdf`` (a radial density callable, or a
    prebuilt `RadialSampler` for bulk use); angles are uniform. Each point's
    law is the same regardless of k.
    """
    if k < 1:
        raise ValueError("cluster size must be at least 1")
    sampler = serving_pdf if isinstance(serving_pdf, RadialSampler) \
        else RadialSampler.from_pdf(serving_pdf)
    radii = sampler.sample(rng, k)
    angles = 2.0 * math.pi * rng.random(k)
    return np.column_stack([center.x + radii * np.cos(angles),
                            center.y + radii * np.sin(angles)])


def select_scheduled(tier: np.ndarray, cluster_map, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Pick the transmitters of the next hop: one point per cluster, uniformly.

    ``cluster_map`` is an (m, k, 2) array of the clusters whose union is
    ``tier`` (pass None for tier 0, which transmits whole). Returns the
    selected (m, 2) points together with their indices into ``tier``.
    """
    tier = np.asarray(tier, dtype=float).reshape(-1, 2)
    if cluster_map is None:
        return tier.copy(), np.arange(len(tier))
    clusters = np.asarray(cluster_map, dtype=float)
    if clusters.ndim != 3 or clusters.shape[2] != 2:
        raise ValueError("cluster map must have shape (m, k, 2)")
    m, k, _ = clusters.shape
    if k == 0 or m == 0 and len(tier) > 0:
        raise ValueError("cluster map contains an empty cluster")
    if m * k != len(tier) or not np.array_equal(clusters.reshape(-1, 2), tier):
        raise ValueError("tier is not the (ordered) union of the cluster map")
    choice = rng.integers(0, k, size=m)
    idx = np.arange(m) * k + choice
    return tier[idx].copy(), idx


@dataclass
class TierTopology:
    """Realized point sets of every tier plus the scheduled subsets.

    tiers[i] is the full tier-i point set; scheduled[i] the transmitters of
    hop i+1 (one per cluster of tier i); cluster_map[i][j] the receiver
    cluster spawned by scheduled[i][j]. gains[i] is the per-hop multiplexing
    gain, residual_intensity the density left unserved when hop flooring was
    requested.
    """

    tiers: list[np.ndarray]
    scheduled: list[np.ndarray]
    scheduled_indices: list[np.ndarray]
    cluster_map: list[np.ndarray]
    gains: list[int]
    window: Window
    residual_intensity: float = 0.0

    @property
    def hops(self) -> int:
        return len(self.tiers) - 1

    def all_points(self) -> np.ndarray:
        if not self.tiers:
            return np.empty((0, 2))
        return np.concatenate([t for t in self.tiers], axis=0)

    def check_invariants(self) -> None:
        """Structural containment / union / cluster-size checks; raises on violation."""
        if len(self.scheduled) != self.hops or len(self.cluster_map) != self.hops:
            raise AssertionError("scheduled/cluster bookkeeping out of step with tiers")
        for i in range(self.hops):
            sched, idx = self.scheduled[i], self.scheduled_indices[i]
            if not np.array_equal(sched, self.tiers[i][idx]):
                raise AssertionError(f"scheduled set of hop {i + 1} is not a subset of tier {i}")
            clusters = self.cluster_map[i]
            if clusters.shape[0] != len(sched) or clusters.shape[1] != self.gains[i]:
                raise AssertionError(f"hop {i + 1} cluster sizes disagree with gain {self.gains[i]}")
            if not np.array_equal(clusters.reshape(-1, 2), self.tiers[i + 1]):
                raise AssertionError(f"tier {i + 1} is not the union of its clusters")


def build_tier_topology(net: analytics.NetworkParams, channel: ChannelParams,
                        window: Window, rng: np.random.Generator,
                        gains: list[int] | None = None,
                        allow_residual: bool = False,
                        sampler: RadialSampler | None = None,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> TierTopology:
    """Realize the whole tiered topology for one seed.

    Tier 0 ~ PPP(lambda_tier0); each hop schedules one transmitter per cluster
    and spawns a cluster of ``gains[i]`` receivers per transmitter, so tier
    i+1 has intensity gains[i] * lambda_tier0. Construction stops when the
    cumulative intensity reaches lambda_total; a split that cannot land
    exactly is rejected unless ``allow_residual`` floors the hop count.
    """
    if gains is None:
        k = net.gain_per_hop
        hops = analytics.hop_count(net.lambda_total, net.lambda_tier0, k,
                                   allow_floor=allow_residual)
        gains = [k] * hops
    else:
        gains = [int(g) for g in gains]
        if any(not 1 <= g <= net.rf_chains for g in gains):
            raise ValueError("every per-hop gain must lie in 1..rf_chains")
        target = (net.lambda_total - net.lambda_tier0) / net.lambda_tier0
        cum = np.cumsum(gains)
        stop = np.nonzero(np.abs(cum - target) <= 1e-9 * max(1.0, target))[0]
        if stop.size:
            gains = gains[: stop[0] + 1]
        elif not allow_residual:
            raise ValueError("per-hop gains never sum to the relay density split")
        else:
            keep = int(np.searchsorted(cum, target, side="right"))
            gains = gains[:keep]
    residual = net.lambda_total - net.lambda_tier0 * (1.0 + sum(gains))

    if sampler is None:
        sampler = RadialSampler.from_serving_distance(net.lambda_tier0, channel, quad)

    tier0 = sample_ppp(net.lambda_tier0, window, rng)
    tiers = [tier0]
    scheduled: list[np.ndarray] = []
    scheduled_idx: list[np.ndarray] = []
    cluster_map: list[np.ndarray] = []
    for i, k_i in enumerate(gains):
        prev_clusters = cluster_map[i - 1] if i > 0 else None
        sched, idx = select_scheduled(tiers[i], prev_clusters, rng)
        clusters = np.empty((len(sched), k_i, 2))
        for j, xy in enumerate(sched):
            clusters[j] = sample_cluster(Point(xy[0], xy[1]), k_i, sampler, rng)
        scheduled.append(sched)
        scheduled_idx.append(idx)
        cluster_map.append(clusters)
        tiers.append(clusters.reshape(-1, 2))

    topo = TierTopology(tiers=tiers, scheduled=scheduled, scheduled_indices=scheduled_idx,
                        cluster_map=cluster_map, gains=gains, window=window,
                        residual_intensity=residual)
    topo.check_invariants()
    return topo


# ---------------------------------------------------------------------------
# Spatial statistics
# ---------------------------------------------------------------------------


def ripley_k(points: np.ndarray, window: Window, radii) -> np.ndarray:
    """Border-corrected empirical Ripley K at each radius.

    Reduced-sample estimator: only points whose distance to the window
    boundary is at least r contribute neighbor counts at radius r, so no
    disk is censored. For a homogeneous PPP, K(r) ~ pi r^2. Radii where no
    point qualifies yield NaN.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        raise ValueError("Ripley's K needs at least two points")
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0.0) or np.any(radii >= window.radius):
        raise ValueError("radii must be positive and smaller than the window radius")

    center = window.center.as_array()
    boundary = window.radius - np.hypot(*(pts - center).T)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)

    lam_hat = n / window.area
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        interior = boundary >= r
        m = int(np.count_nonzero(interior))
        if m == 0:
            out[i] = np.nan
            continue
        neighbor_counts = np.count_nonzero(dist[interior] <= r, axis=1)
        out[i] = neighbor_counts.mean() / lam_hat
    return out


def points_in_window(points: np.ndarray, window: Window) -> np.ndarray:
    """The subset of points inside the window (clips guard-annulus spillover)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    center = window.center.as_array()
    return pts[np.hypot(*(pts - center).T) <= window.radius]


def _reference_k(intensity: float, window: Window, radii: np.ndarray, n_sims: int,
                 rng: np.random.Generator) -> np.ndarray:
    sims = np.full((n_sims, len(radii)), np.nan)
    for s in range(n_sims):
        pts = sample_ppp(intensity, window, rng)
        if len(pts) >= 2:
            sims[s] = ripley_k(pts, window, radii)
    return sims


def csr_envelope(intensity: float, window: Window, radii, n_sims: int,
                 rng: np.random.Generator, coverage: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise CSR envelope of ripley_k from n_sims reference PPP draws."""
    radii = np.asarray(radii, dtype=float)
    sims = _reference_k(intensity, window, radii, n_sims, rng)
    lo_q = (1.0 - coverage) / 2.0
    lo = np.nanquantile(sims, lo_q, axis=0)
    hi = np.nanquantile(sims, 1.0 - lo_q, axis=0)
    return lo, hi


def csr_global_test(points: np.ndarray, window: Window, radii, n_sims: int,
                    rng: np.random.Generator, alpha: float = 0.01) -> tuple[float, float]:
    """Multiplicity-free CSR test: studentized max deviation of Ripley's K.

    The statistic is max over radii of |K_hat - mean| / sd under the CSR null
    (mean/sd from n_sims reference draws); returns (observed, null alpha
    quantile). Observed below the quantile means the pattern is CSR-compatible
    across all radii simultaneously at level alpha.
    """
    radii = np.asarray(radii, dtype=float)
    sims = _reference_k(len(points) / window.area, window, radii, n_sims, rng)
    mean = np.nanmean(sims, axis=0)
    sd = np.maximum(np.nanstd(sims, axis=0), 1e-12)
    null = np.nanmax(np.abs(sims - mean) / sd, axis=1)
    observed = float(np.nanmax(np.abs(ripley_k(points, window, radii) - mean) / sd))
    return observed, float(np.nanquantile(null, 1.0 - alpha))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def topology_to_csv(topo: TierTopology) -> str:
    """CSV dump: tier, x, y, scheduled flag (1 when the point transmits)."""
    buf = io.StringIO()
    buf.write("tier,x,y,scheduled\n")
    for i, tier in enumerate(topo.tiers):
        flags = np.zeros(len(tier), dtype=int)
        if i < len(topo.scheduled_indices):
            flags[topo.scheduled_indices[i]] = 1
        for (x, y), flag in zip(tier, flags):
            buf.write(f"{i},{float(x)!r},{float(y)!r},{flag}\n")
    return buf.getvalue()


def topology_to_gnuplot(topo: TierTopology) -> str:
    """Gnuplot-ready columns, one index block per tier (blank-line separated)."""
    blocks = []
    for i, tier in enumerate(topo.tiers):
        flags = np.zeros(len(tier), dtype=int)
        if i < len(topo.scheduled_indices):
            flags[topo.scheduled_indices[i]] = 1
        lines = [f"# tier {i}"]
        lines += [f"{float(x)!r} {float(y)!r} {flag}" for (x, y), flag in zip(tier, flags)]
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"
