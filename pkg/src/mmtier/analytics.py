"""Analytical performance of the tiered AP network.

Everything here is a deterministic numerical evaluation: the association
(serving-distance) laws of the max-average-power scheduler over a marked
PPP, the Laplace functional of the out-of-cluster interference, the SINR
coverage integral, hop-count latency bounds, and the per-gain throughput.
Semi-infinite integrals are truncated at ``QuadratureSpec.truncation_radius_m``
with an analytic tail bound folded into the reported error estimate.

The Monte Carlo twin of every estimator lives in `mmtier.montecarlo`; the two
modules share only `mmtier.channel`, so they can cross-validate each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .channel import (
    LOS,
    NLOS,
    BeamParams,
    BlockageModel,
    ChannelParams,
    beam_gain_pmf,
    los_probability,
    _check_state,
)

_TWO_PI = 2.0 * math.pi


class QuadratureError(ArithmeticError):
    """Raised when adaptive quadrature fails to converge or a tail bound blows up.

    Carries the best available value and its error estimate so callers can
    decide whether to record or abort.
    """

    def __init__(self, message: str, value: float = math.nan, error_estimate: float = math.inf):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and the finite stand-in for infinite integration limits."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    truncation_radius_m: float = 5000.0

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ValueError("quadrature tolerances must be positive")
        if not self.truncation_radius_m > 0.0:
            raise ValueError("truncation radius must be positive")

    @classmethod
    def for_tier_intensity(cls, lambda0: float, radius_factor: float = 50.0,
                           rel_tol: float = 1e-6, abs_tol: float = 1e-9) -> "QuadratureSpec":
        """Truncate at ``radius_factor`` mean inter-AP distances r0 = (pi*lambda0)^-1/2."""
        if not lambda0 > 0.0:
            raise ValueError("tier intensity must be positive")
        r0 = math.sqrt(1.0 / (math.pi * lambda0))
        return cls(rel_tol=rel_tol, abs_tol=abs_tol, truncation_radius_m=radius_factor * r0)


DEFAULT_QUAD = QuadratureSpec()


def _quad(func, a: float, b: float, quad: QuadratureSpec, points=None, abs_tol=None):
    """scipy adaptive quadrature wrapped to return (value, error) or raise.

    ``points`` are optional breakpoint hints (clipped to the open interval).
    """
    if b <= a:
        return 0.0, 0.0
    pts = None
    if points is not None:
        pts = sorted({p for p in points if a < p < b})
        if not pts:
            pts = None
    out = integrate.quad(
        func, a, b,
        epsabs=quad.abs_tol if abs_tol is None else abs_tol,
        epsrel=quad.rel_tol,
        limit=250,
        points=pts,
        full_output=1,
    )
    if len(out) > 3:
        value, err = out[0], out[1]
        raise QuadratureError(
            f"quadrature on [{a:g}, {b:g}] did not converge: {out[3]}",
            value=value, error_estimate=err,
        )
    return out[0], out[1]


def _blockage_breakpoints(blockage: BlockageModel) -> list[float]:
    if blockage.kind == "exponential":
        mu = blockage.param
        return [mu, 5.0 * mu, 20.0 * mu, 60.0 * mu]
    if blockage.kind == "los_ball":
        return [blockage.param]
    return []


def integrated_radial_probability(blockage: BlockageModel, state: str, z: float,
                                  quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integral of P_state(r) * r over [0, z] by adaptive quadrature.

    This is the mean number of state-``state`` points of a unit-intensity
    PPP inside a disc of radius z, divided by 2*pi.
    """
    _check_state(state)
    if z < 0.0:
        raise ValueError("upper limit must be non-negative")
    if z == 0.0:
        return 0.0

    if state == LOS:
        def integrand(r):
            return los_probability(r, blockage) * r
    else:
        def integrand(r):
            return (1.0 - los_probability(r, blockage)) * r

    value, _ = _quad(integrand, 0.0, z, quad, points=_blockage_breakpoints(blockage))
    return value


def _cumulative_radial_probability(blockage: BlockageModel, state: str, grid: np.ndarray,
                                   refine: int = 16) -> np.ndarray:
    """Integral of P_state(r) * r from 0 to each grid value (grid sorted ascending).

    Vectorized companion of `integrated_radial_probability` for table building:
    each grid interval is subdivided ``refine`` times and accumulated with the
    trapezoid rule, which is plenty for the smooth blockage laws here. Scalar
    call sites use the adaptive path instead.
    """
    nodes = np.concatenate([[0.0], np.asarray(grid, dtype=float)])
    # refine x (len(nodes)-1) matrix of subinterval edges, flattened in order
    frac = np.linspace(0.0, 1.0, refine + 1)
    fine = nodes[:-1, None] + np.diff(nodes)[:, None] * frac[None, :]
    fine = np.concatenate([[0.0], fine[:, 1:].ravel()])
    p = los_probability(fine, blockage)
    if state == NLOS:
        p = 1.0 - p
    vals = p * fine
    seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(fine)
    cum_fine = np.concatenate([[0.0], np.cumsum(seg)])
    return cum_fine[refine::refine]


def nearest_distance_pdf(z, state: str, lam: float, blockage: BlockageModel,
                         quad: QuadratureSpec = DEFAULT_QUAD):
    """Density of the distance from the origin to the nearest state-``state`` AP.

    The APs of the given state form an inhomogeneous PPP of radial intensity
    lam * P_state(r); the nearest-point law is
    2*pi*z*lam*P(z) * exp(-2*pi*lam * int_0^z P(r) r dr). Total mass below 1
    when the state can be globally absent (the void probability).
    """
    _check_state(state)
    if not lam > 0.0:
        raise ValueError("intensity must be positive")
    if np.ndim(z) == 0:
        zf = float(z)
        if zf < 0.0:
            raise ValueError("distance must be non-negative")
        p_state = los_probability(zf, blockage)
        if state == NLOS:
            p_state = 1.0 - p_state
        cum = integrated_radial_probability(blockage, state, zf, quad)
        return _TWO_PI * zf * lam * p_state * math.exp(-_TWO_PI * lam * cum)

    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0.0):
        raise ValueError("distance must be non-negative")
    if len(z_arr) <= 64:
        # The dense-trapezoid cumulative needs a fine grid; small batches go
        # through the adaptive path at full accuracy.
        return np.array([nearest_distance_pdf(float(zi), state, lam, blockage, quad)
                         for zi in z_arr])
    order = np.argsort(z_arr)
    sorted_z = z_arr[order]
    cum = _cumulative_radial_probability(blockage, state, sorted_z)
    p_state = los_probability(sorted_z, blockage)
    if state == NLOS:
        p_state = 1.0 - p_state
    vals = _TWO_PI * sorted_z * lam * np.atleast_1d(p_state) * np.exp(-_TWO_PI * lam * cum)
    out = np.empty_like(vals)
    out[order] = vals
    return out


def _exclusion_exponent(r: float, state: str, lam: float, channel: ChannelParams,
                        quad: QuadratureSpec) -> float:
    """log of the probability that no opposite-state AP beats a state-``state`` AP at r.

    An NLOS AP at t has more average power than a LOS AP at r iff
    t < r^(alpha_los/alpha_nlos), and symmetrically for the other serving state;
    the void probability of the opposite-state PPP on that disc supplies the factor.
    """
    if state == LOS:
        w = r ** (channel.alpha_los / channel.alpha_nlos)
        other = NLOS
    else:
        w = r ** (channel.alpha_nlos / channel.alpha_los)
        other = LOS
    return -_TWO_PI * lam * integrated_radial_probability(channel.blockage, other, w, quad)


def serving_distance_pdf(r, state: str, lam: float, channel: ChannelParams,
                         quad: QuadratureSpec = DEFAULT_QUAD):
    """Density (per state) of the distance to the max-average-power AP.

    The serving AP is in state ``state`` at distance r when the nearest AP of
    that state sits at r and no AP of the other state offers more average
    power; the law is nearest_distance_pdf * the opposite-state void factor.
    Summing the two states gives a proper density with unit total mass.
    """
    _check_state(state)
    if not lam > 0.0:
        raise ValueError("intensity must be positive")
    r_in = np.asarray(r, dtype=float)
    if np.ndim(r) == 0:
        if r_in <= 0.0:
            raise ValueError("serving distance must be positive")
        base = nearest_distance_pdf(float(r_in), state, lam, channel.blockage, quad)
        return base * math.exp(_exclusion_exponent(float(r_in), state, lam, channel, quad))

    r_arr = np.atleast_1d(r_in)
    if np.any(r_arr <= 0.0):
        raise ValueError("serving distance must be positive")
    if len(r_arr) <= 64:
        return np.array([serving_distance_pdf(float(ri), state, lam, channel, quad)
                         for ri in r_arr])
    order = np.argsort(r_arr)
    sorted_r = r_arr[order]
    base = nearest_distance_pdf(sorted_r, state, lam, channel.blockage, quad)
    if state == LOS:
        w = sorted_r ** (channel.alpha_los / channel.alpha_nlos)
        other = NLOS
    else:
        w = sorted_r ** (channel.alpha_nlos / channel.alpha_los)
        other = LOS
    cum = _cumulative_radial_probability(channel.blockage, other, w)
    vals = base * np.exp(-_TWO_PI * lam * cum)
    out = np.empty_like(vals)
    out[order] = vals
    return out


@dataclass(frozen=True)
class ServingDistanceTable:
    """Tabulated serving-distance law: grids for sampling, CDF checks and KS tests."""

    radii: np.ndarray
    pdf_los: np.ndarray
    pdf_nlos: np.ndarray
    cdf: np.ndarray
    los_mass: float
    nlos_mass: float

    @property
    def total_mass(self) -> float:
        return self.los_mass + self.nlos_mass

    @property
    def pdf_total(self) -> np.ndarray:
        return self.pdf_los + self.pdf_nlos

    def cdf_at(self, r) -> np.ndarray:
        """Normalized CDF of the total serving distance, linear interpolation."""
        return np.interp(r, self.radii, self.cdf, left=0.0, right=1.0)


def tabulate_serving_distance(lam: float, channel: ChannelParams,
                              quad: QuadratureSpec = DEFAULT_QUAD,
                              r_max: float | None = None,
                              grid_size: int = 4096) -> ServingDistanceTable:
    """Evaluate both serving-distance branches on a grid covering ~all the mass.

    If ``r_max`` is omitted the grid is extended (doubling) until the captured
    mass stops growing; a final total below 1 - 1e-3 raises, since the law is a
    proper density.
    """
    if not lam > 0.0:
        raise ValueError("intensity must be positive")
    r_scale = math.sqrt(1.0 / (math.pi * lam))
    if channel.blockage.kind in ("exponential", "los_ball"):
        r_scale = max(r_scale, channel.blockage.param)

    def build(upper: float, n: int):
        grid = np.linspace(0.0, upper, n + 1)
        pos = grid[1:]
        pdf_l = np.concatenate([[0.0], serving_distance_pdf(pos, LOS, lam, channel, quad)])
        pdf_n = np.concatenate([[0.0], serving_distance_pdf(pos, NLOS, lam, channel, quad)])
        mass_l = float(np.trapezoid(pdf_l, grid))
        mass_n = float(np.trapezoid(pdf_n, grid))
        return grid, pdf_l, pdf_n, mass_l, mass_n

    if r_max is not None:
        grid, pdf_l, pdf_n, mass_l, mass_n = build(r_max, grid_size)
    else:
        upper = 8.0 * r_scale
        n = grid_size
        grid, pdf_l, pdf_n, mass_l, mass_n = build(upper, n)
        while True:
            upper2 = 2.0 * upper
            n2 = min(2 * n, 32768)
            grid2, pdf_l2, pdf_n2, mass_l2, mass_n2 = build(upper2, n2)
            if (mass_l2 + mass_n2) - (mass_l + mass_n) < 1e-10 and upper > 16.0 * r_scale:
                break
            grid, pdf_l, pdf_n, mass_l, mass_n = grid2, pdf_l2, pdf_n2, mass_l2, mass_n2
            upper, n = upper2, n2
            if upper > 1e7 * r_scale:
                raise QuadratureError("serving-distance mass did not converge while extending the grid")

    total = mass_l + mass_n
    if abs(total - 1.0) > 1e-3:
        raise QuadratureError(
            f"serving-distance law integrates to {total!r}; grid or tolerances inadequate",
            value=total,
        )
    cdf = integrate.cumulative_trapezoid(pdf_l + pdf_n, grid, initial=0.0) / total
    cdf[-1] = 1.0
    return ServingDistanceTable(radii=grid, pdf_los=pdf_l, pdf_nlos=pdf_n, cdf=cdf,
                                los_mass=mass_l, nlos_mass=mass_n)


# ---------------------------------------------------------------------------
# Interference Laplace functional and coverage
# ---------------------------------------------------------------------------


def gain_moment(s: float, r, k: int, state: str, channel: ChannelParams,
                beam: BeamParams):
    """E[exp(-s * beta * h * G * r^-alpha)] over fading h and interferer gain G.

    With unit-mean exponential fading each gain atom contributes
    p_g / (1 + s*beta*g*r^-alpha); the result lies in (0, 1] and equals 1 at s = 0.
    """
    if s < 0.0:
        raise ValueError("transform variable must be non-negative")
    pmf = beam_gain_pmf(beam, k)
    alpha = channel.alpha(state)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0.0):
        raise ValueError("distance must be positive")
    attn = channel.beta * r_arr ** -alpha
    out = sum(p / (1.0 + s * g * attn) for g, p in zip(pmf.gains, pmf.probs))
    if np.ndim(r) == 0:
        return float(out)
    return out


def _tail_radial_bound(blockage: BlockageModel, state: str, start: float, alpha: float,
                       quad: QuadratureSpec) -> float:
    """Upper bound on int_start^inf P_state(r) * r^(1-alpha) dr.

    Used with 1 - E[exp(-x)] <= E[x] to bound the truncated part of the
    interference exponent. Returns inf when the far field genuinely diverges
    (flat blockage with alpha <= 2).
    """
    if start <= 0.0:
        return math.inf
    kind = blockage.kind
    if state == LOS:
        if kind == "exponential":
            mu = blockage.param
            if alpha >= 1.0:
                return start ** (1.0 - alpha) * mu * math.exp(-start / mu)
            val, _ = _quad(lambda r: math.exp(-r / mu) * r ** (1.0 - alpha),
                           start, start + 80.0 * mu, quad)
            return val
        if kind == "los_ball":
            ball = blockage.param
            if start >= ball:
                return 0.0
            if alpha == 2.0:
                return math.log(ball / start)
            return (ball ** (2.0 - alpha) - start ** (2.0 - alpha)) / (2.0 - alpha)
        p = blockage.param
        if p == 0.0:
            return 0.0
        return p * start ** (2.0 - alpha) / (alpha - 2.0) if alpha > 2.0 else math.inf
    # NLOS: bound P_N <= 1 except where it is exactly zero
    if kind == "constant" and blockage.param == 1.0:
        return 0.0
    return start ** (2.0 - alpha) / (alpha - 2.0) if alpha > 2.0 else math.inf


def _interference_exponent_terms(s: float, lower: float, k: int, state: str,
                                 channel: ChannelParams, beam: BeamParams,
                                 quad: QuadratureSpec, abs_tol: float):
    """One state's contribution to the interference exponent plus (err, tail).

    The exponent term is int_lower^Rmax (1 - GainMoment(s, r)) P_state(r) r dr;
    the tail is an analytic bound on the discarded (Rmax, inf) part, per unit
    2*pi*intensity. ``abs_tol`` is the caller's tolerance on the exponent.
    """
    alpha = channel.alpha(state)
    blockage = channel.blockage
    pmf = beam_gain_pmf(beam, k)
    upper = quad.truncation_radius_m
    tail_start = max(lower, upper)
    tail = s * channel.beta * pmf.expected_gain * _tail_radial_bound(
        blockage, state, tail_start, alpha, quad)
    if lower >= upper:
        return 0.0, 0.0, tail

    # Fading expectation in partial fractions, unrolled for speed in the hot loop.
    (g0, g1, g2), (p0, p1, p2) = pmf.gains, pmf.probs
    beta = channel.beta
    if state == LOS:
        def integrand(r):
            a = s * beta * r**-alpha
            g = p0 / (1.0 + a * g0) + p1 / (1.0 + a * g1) + p2 / (1.0 + a * g2)
            return (1.0 - g) * los_probability(r, blockage) * r
    else:
        def integrand(r):
            a = s * beta * r**-alpha
            g = p0 / (1.0 + a * g0) + p1 / (1.0 + a * g1) + p2 / (1.0 + a * g2)
            return (1.0 - g) * (1.0 - los_probability(r, blockage)) * r

    # Knees of 1 - G sit where s*beta*g*r^-alpha ~ 1 for each gain atom;
    # geometric hints cover the decades of the slowly-decaying stretch.
    pts = list(_blockage_breakpoints(blockage))
    for g in pmf.gains:
        x = s * channel.beta * g
        if x > 0.0:
            pts.append(x ** (1.0 / alpha))
    p = 4.0 * lower
    while p < upper:
        pts.append(p)
        p *= 8.0
    val, err = _quad(integrand, lower, upper, quad, points=pts, abs_tol=abs_tol)
    return val, err, tail


def laplace_interference(s: float, serving_distance: float, serving_state: str, k: int,
                         lambda0: float, channel: ChannelParams, beam: BeamParams,
                         quad: QuadratureSpec = DEFAULT_QUAD, full_output: bool = False):
    """Laplace functional E[exp(-s * I)] of the aggregate interference.

    Conditioning on the serving AP (state + distance d) excludes every
    interferer with more average power: same-state interferers start at d,
    opposite-state ones at d^(alpha_serving/alpha_other). The two independent
    state fields contribute one exponential factor each. Returns the value
    in (0, 1]; with ``full_output`` also an absolute error estimate combining
    quadrature error and the analytic truncation tail bound.
    """
    _check_state(serving_state)
    if s < 0.0:
        raise ValueError("transform variable must be non-negative")
    if not serving_distance > 0.0:
        raise ValueError("serving distance must be positive")
    if lambda0 < 0.0:
        raise ValueError("intensity must be non-negative")
    if s == 0.0 or lambda0 == 0.0:
        return (1.0, 0.0) if full_output else 1.0

    d = serving_distance
    if serving_state == LOS:
        lower_los = d
        lower_nlos = d ** (channel.alpha_los / channel.alpha_nlos)
    else:
        lower_nlos = d
        lower_los = d ** (channel.alpha_nlos / channel.alpha_los)

    # An absolute error e on the exponent perturbs the value by ~e, so the
    # inner quadrature tolerance follows from abs_tol via the 2*pi*lambda0 scale.
    exponent_tol = max(quad.abs_tol, 0.1 * quad.abs_tol / (_TWO_PI * lambda0))
    val_l, err_l, tail_l = _interference_exponent_terms(
        s, lower_los, k, LOS, channel, beam, quad, exponent_tol)
    val_n, err_n, tail_n = _interference_exponent_terms(
        s, lower_nlos, k, NLOS, channel, beam, quad, exponent_tol)

    tail = _TWO_PI * lambda0 * (tail_l + tail_n)
    if not math.isfinite(tail):
        raise QuadratureError(
            "interference tail bound diverges beyond the truncation radius "
            f"(blockage={channel.blockage.kind}, alphas=({channel.alpha_los}, "
            f"{channel.alpha_nlos})); the far field is not integrable")

    exponent = _TWO_PI * lambda0 * (val_l + val_n)
    value = math.exp(-exponent)
    err = value * (_TWO_PI * lambda0 * (err_l + err_n) + tail)
    if full_output:
        return value, err
    return value


def conditional_coverage(tau: float, r: float, k: int, state: str, lambda0: float,
                         channel: ChannelParams, beam: BeamParams,
                         quad: QuadratureSpec = DEFAULT_QUAD, full_output: bool = False):
    """P(SINR > tau) given serving state and distance r, under exponential fading.

    Equals exp(-s * sigma^2) * LaplaceInterference(s) with
    s = r^alpha_state * tau / (g_main^2 * beta).
    """
    if not tau > 0.0:
        raise ValueError("SINR threshold must be positive")
    if not r > 0.0:
        raise ValueError("serving distance must be positive")
    _check_state(state)
    s = r ** channel.alpha(state) * tau / (beam.g_main**2 * channel.beta)
    noise_factor = math.exp(-s * channel.noise_power)
    lap, lap_err = laplace_interference(s, r, state, k, lambda0, channel, beam, quad,
                                        full_output=True)
    value = noise_factor * lap
    if full_output:
        return value, noise_factor * lap_err
    return value


def _serving_weight_literal(r: float, state: str, lambda0: float, channel: ChannelParams,
                            quad: QuadratureSpec) -> float | None:
    """Coverage weight in ratio form: f_state(r) * f_other(w) / (2*pi*w*lam*P_other(w)).

    Returns None where the ratio is 0/0 (opposite-state probability vanishes).
    Algebraically identical to `serving_distance_pdf`; kept as a consistency
    cross-check because the ratio form is the more error-prone one.
    """
    if state == LOS:
        w = r ** (channel.alpha_los / channel.alpha_nlos)
        other = NLOS
        p_other = 1.0 - los_probability(w, channel.blockage)
    else:
        w = r ** (channel.alpha_nlos / channel.alpha_los)
        other = LOS
        p_other = los_probability(w, channel.blockage)
    if p_other <= 1e-300:
        return None
    f_state = nearest_distance_pdf(r, state, lambda0, channel.blockage, quad)
    f_other = nearest_distance_pdf(w, other, lambda0, channel.blockage, quad)
    return f_state * f_other / (_TWO_PI * w * lambda0 * p_other)


def _check_weight_forms(lambda0: float, channel: ChannelParams, quad: QuadratureSpec) -> None:
    """Assert the simplified and ratio weight forms agree at probe radii."""
    r0 = math.sqrt(1.0 / (math.pi * lambda0))
    for state in (LOS, NLOS):
        for r in (0.25 * r0, r0, 4.0 * r0):
            literal = _serving_weight_literal(r, state, lambda0, channel, quad)
            if literal is None:
                continue
            simplified = serving_distance_pdf(r, state, lambda0, channel, quad)
            tol = quad.rel_tol * max(abs(simplified), abs(literal)) + quad.abs_tol
            if abs(literal - simplified) > tol:
                raise QuadratureError(
                    f"coverage weight forms disagree at r={r:g} ({state}): "
                    f"ratio form {literal!r} vs simplified {simplified!r}")


def coverage_probability(tau: float, k: int, lambda0: float, channel: ChannelParams,
                         beam: BeamParams, quad: QuadratureSpec = DEFAULT_QUAD,
                         full_output: bool = False):
    """Coverage P(SINR > tau) of a typical receiver, marginalized over association.

    Integrates conditional_coverage against the two serving-distance branches.
    The branch weights use the simplified (void-factor) form, which removes the
    0/0 of the ratio form where a state's probability vanishes; agreement of
    the two forms is asserted at probe radii on every call.
    """
    if not tau > 0.0:
        raise ValueError("SINR threshold must be positive")
    if not lambda0 > 0.0:
        raise ValueError("tier intensity must be positive")
    _ = beam_gain_pmf(beam, k)  # validates k against the RF-chain budget
    _check_weight_forms(lambda0, channel, quad)

    r0 = math.sqrt(1.0 / (math.pi * lambda0))
    outer_pts = [f * r0 for f in (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)]
    # Evaluation-weighted sums for first-order propagation of the inner
    # (conditional-coverage) errors through the outer integral.
    sums = {"wc": 0.0, "we": 0.0}

    def make_integrand(state: str):
        def integrand(r):
            weight = serving_distance_pdf(r, state, lambda0, channel, quad)
            if weight == 0.0:
                return 0.0
            cov, cov_err = conditional_coverage(tau, r, k, state, lambda0, channel,
                                                beam, quad, full_output=True)
            sums["wc"] += weight * cov
            sums["we"] += weight * cov_err
            return weight * cov
        return integrand

    upper = quad.truncation_radius_m
    val_l, err_l = _quad(make_integrand(LOS), 0.0, upper, quad, points=outer_pts)
    val_n, err_n = _quad(make_integrand(NLOS), 0.0, upper, quad, points=outer_pts)
    value = val_l + val_n
    value = min(max(value, 0.0), 1.0)
    inner_rel = sums["we"] / sums["wc"] if sums["wc"] > 0.0 else 0.0
    err = err_l + err_n + inner_rel * value
    if full_output:
        return value, err
    return value


# ---------------------------------------------------------------------------
# Latency, throughput and the gain sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkParams:
    """Deployment-level parameters: densities, RF chains, bandwidth, gain."""

    lambda_total: float
    lambda_tier0: float
    rf_chains: int
    bandwidth: float
    gain_per_hop: int = 1

    def __post_init__(self):
        if not self.lambda_tier0 > 0.0:
            raise ValueError("tier-0 intensity must be positive")
        if self.lambda_total < self.lambda_tier0:
            raise ValueError("total density must be at least the tier-0 density")
        if self.rf_chains < 1:
            raise ValueError("need at least one RF chain")
        if not self.bandwidth > 0.0:
            raise ValueError("bandwidth must be positive")
        if not 1 <= self.gain_per_hop <= self.rf_chains:
            raise ValueError("per-hop gain must lie in 1..rf_chains")

    @property
    def r0_m(self) -> float:
        """Mean inter-AP spacing of the scheduled tier, (pi*lambda_tier0)^-1/2."""
        return math.sqrt(1.0 / (math.pi * self.lambda_tier0))


@dataclass(frozen=True)
class CoverageResult:
    """One evaluated grid point of the (threshold, gain) sweep."""

    tau: float
    k: int
    coverage: float
    latency: float
    throughput: float
    quad_error: float


def evaluate_point(tau: float, k: int, net: NetworkParams, channel: ChannelParams,
                   beam: BeamParams, quad: QuadratureSpec = DEFAULT_QUAD) -> CoverageResult:
    """Coverage, latency and throughput at one (threshold, gain) grid point.

    Latency is the real-valued hop ratio (lambda_total - lambda0)/(k*lambda0);
    it equals the integer hop count whenever the split divides evenly and
    always lies within `latency_bounds`. Throughput is computed from the same
    coverage value, so the compositional identity holds exactly per result.
    """
    cov, err = coverage_probability(tau, k, net.lambda_tier0, channel, beam, quad,
                                    full_output=True)
    latency = (net.lambda_total - net.lambda_tier0) / (k * net.lambda_tier0)
    thr = throughput_identity(k, tau, net, cov)
    return CoverageResult(tau=tau, k=k, coverage=cov, latency=latency,
                          throughput=thr, quad_error=err)


def latency_bounds(lambda_total: float, lambda0: float, rf_chains: int) -> tuple[float, float]:
    """Hop-count envelope: every relay tier carries between lambda0 and K*lambda0."""
    if not lambda0 > 0.0 or lambda_total < lambda0:
        raise ValueError("need lambda_total >= lambda0 > 0")
    if rf_chains < 1:
        raise ValueError("need at least one RF chain")
    relay = lambda_total - lambda0
    return relay / (rf_chains * lambda0), relay / lambda0


def hop_count(lambda_total: float, lambda0: float, k: int, allow_floor: bool = False) -> int:
    """Number of hops M with uniform per-hop gain k: (lambda_total - lambda0)/(k*lambda0).

    The exact formula requires the density split to make M an integer; a
    non-integer result is rejected unless ``allow_floor`` is set, in which case
    the count is floored (the residual intensity is then unreachable).
    """
    if not lambda0 > 0.0 or lambda_total < lambda0:
        raise ValueError("need lambda_total >= lambda0 > 0")
    if k < 1:
        raise ValueError("per-hop gain must be at least 1")
    m_real = (lambda_total - lambda0) / (k * lambda0)
    m_int = round(m_real)
    if abs(m_real - m_int) <= 1e-9 * max(1.0, abs(m_int)):
        return int(m_int)
    if allow_floor:
        return int(math.floor(m_real))
    raise ValueError(
        f"density split gives a non-integer hop count {m_real!r}; "
        "adjust densities or pass allow_floor=True")


def throughput_identity(k: int, tau: float, net: NetworkParams, cov: float) -> float:
    """The canonical product W * k * lambda0 * C * log2(1 + tau).

    Kept as the single definition so every caller (and every test of the
    compositional identity) multiplies in the same order bitwise.
    """
    return net.bandwidth * k * net.lambda_tier0 * cov * math.log2(1.0 + tau)


def throughput(k: int, tau: float, net: NetworkParams, channel: ChannelParams,
               beam: BeamParams, quad: QuadratureSpec = DEFAULT_QUAD,
               full_output: bool = False):
    """Aggregate relay throughput W * k * lambda0 * C(tau, k) * log2(1 + tau).

    Dividing the relay tiers' total rate by the hop count cancels the total
    density, so the result depends on lambda_tier0 but not lambda_total.
    """
    if not tau > 0.0:
        raise ValueError("SINR threshold must be positive")
    cov, cov_err = coverage_probability(tau, k, net.lambda_tier0, channel, beam, quad,
                                        full_output=True)
    if full_output:
        return throughput_identity(k, tau, net, cov), throughput_identity(k, tau, net, cov_err)
    return throughput_identity(k, tau, net, cov)


def feasible_gains(net: NetworkParams) -> list[int]:
    """Gains k in 1..K for which the density split yields an integer hop count."""
    out = []
    for k in range(1, net.rf_chains + 1):
        try:
            if hop_count(net.lambda_total, net.lambda_tier0, k) >= 1:
                out.append(k)
        except ValueError:
            continue
    return out


def optimal_gain(tau: float, net: NetworkParams, channel: ChannelParams,
                 beam: BeamParams, quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[int, float]:
    """Exhaustive argmax of throughput over the divisibility-feasible gains.

    Ties break toward the smaller gain. Raises if no gain in 1..K divides the
    relay density evenly.
    """
    candidates = feasible_gains(net)
    if not candidates:
        raise ValueError("no feasible multiplexing gain for this density split")
    best_k, best_t = None, -math.inf
    for k in candidates:
        t = throughput(k, tau, net, channel, beam, quad)
        if t > best_t:
            best_k, best_t = k, t
    return best_k, best_t
